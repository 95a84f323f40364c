#include "milr/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "milr/classification.hpp"
#include "milr/reliability.hpp"
#include "milr/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace milr::cli {

namespace {

std::string sanitize(std::string label) {
    for (char& c : label) {
        if (c == '/' || c == ' ') c = '-';
    }
    return label;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << text;
}

void write_json(const fs::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

std::vector<std::string> split_csv_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

VariantSpec parse_variant_spec(const std::string& name) {
    VariantSpec spec;
    std::string base = name;
    if (base.size() > 4 && base.substr(base.size() - 4) == "-add") {
        spec.additive = true;
        base = base.substr(0, base.size() - 4);
    }
    spec.variant = parse_variant(base);
    return spec;
}

// --- synth -------------------------------------------------------------

int cmd_synth(const SynthOptions& options) {
    if (options.out.empty()) throw std::invalid_argument("synth: missing output directory");
    options.synth.validate();

    SynthDataset ds = generate_synthetic(options.synth);
    split_dataset(ds.manifest, options.split, options.split_seed);

    const fs::path out(options.out);
    fs::create_directories(out / "features");
    fs::create_directories(out / "annotations");
    for (std::size_t i = 0; i < ds.slides.size(); ++i) {
        auto& entry = ds.manifest.slides[i];
        entry.feature_path = (out / "features" / (entry.slide_id + ".milf")).string();
        entry.annotation_path =
            (out / "annotations" / (entry.slide_id + ".json")).string();
        write_feature_file(ds.slides[i].bag, entry.feature_path);
        write_annotation_file(ds.slides[i].annotation, entry.annotation_path);
    }
    write_manifest(ds.manifest, (out / "manifest.json").string());
    write_labels_csv(ds.manifest, (out / "labels.csv").string());

    const json provenance = {
        {"command", "synth"},
        {"classes", options.synth.classes},
        {"slides_per_class", options.synth.slides_per_class},
        {"bag_min", options.synth.bag_min},
        {"bag_max", options.synth.bag_max},
        {"key_frac_min", options.synth.key_frac_min},
        {"key_frac_max", options.synth.key_frac_max},
        {"dim", options.synth.dim},
        {"mu", options.synth.mu},
        {"sigma", options.synth.sigma},
        {"seed", options.synth.seed},
        {"patch_size", options.synth.patch_size},
        {"split", {options.split[0], options.split[1], options.split[2]}},
        {"split_seed", options.split_seed},
    };
    write_json(out / "provenance.json", provenance);
    std::cout << "wrote " << ds.slides.size() << " slides to " << options.out << "\n";
    return 0;
}

// --- cost --------------------------------------------------------------

namespace {

ModelConfig cost_config(const CostOptions& o, const VariantSpec& spec) {
    ModelConfig c;
    c.input_dim = o.input_dim;
    c.embed_dim = o.embed_dim;
    c.attn_hidden = o.attn_hidden;
    c.num_heads = spec.variant == Variant::MultiHead ? o.heads : 1;
    c.num_classes = o.classes;
    c.variant = spec.variant;
    c.additive = spec.additive;
    c.scoring = default_scoring(spec.variant, spec.additive);
    return c;
}

std::string entry_label(const VariantSpec& spec, std::size_t heads) {
    std::string label = variant_name(spec.variant);
    if (spec.variant == Variant::MultiHead) label += "/" + std::to_string(heads);
    if (spec.additive) label += "-ADD";
    return label;
}

}  // namespace

std::vector<CostRow> compute_cost_table(const CostOptions& options) {
    std::vector<CostRow> rows;
    for (const auto& name : options.variants) {
        const VariantSpec spec = parse_variant_spec(name);
        const ModelConfig config = cost_config(options, spec);
        CostRow row;
        row.label = entry_label(spec, options.heads);
        row.flops = count_flops(config, options.bag_size);
        row.params = count_params(config);
        rows.push_back(std::move(row));
    }
    return rows;
}

int cmd_cost(const CostOptions& options) {
    if (options.bag_size == 0) throw std::invalid_argument("cost: bag size must be >= 1");
    const auto rows = compute_cost_table(options);
    std::printf("%-22s %12s %12s\n", "Model", "FLOPs", "Model Size");
    for (const auto& r : rows) {
        std::printf("%-22s %10.1f M %10.1f K\n", r.label.c_str(),
                    double(r.flops) / 1e6, double(r.params) / 1e3);
    }
    return 0;
}

// --- bench -------------------------------------------------------------

namespace {

struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<FeatureBag> bags;
    std::vector<std::vector<int>> patch_labels;  // empty without annotation
    std::vector<PatchGrid> grids;                // default grid without annotation
    std::vector<std::size_t> train_idx, val_idx, test_idx;
};

LoadedDataset load_dataset(const std::string& manifest_path, LabelRule rule,
                           double tau) {
    LoadedDataset ds;
    ds.manifest = read_manifest(manifest_path);
    ds.bags = load_bags(ds.manifest);
    ds.patch_labels.resize(ds.bags.size());
    ds.grids.resize(ds.bags.size());
    for (std::size_t i = 0; i < ds.bags.size(); ++i) {
        const auto& entry = ds.manifest.slides[i];
        if (!entry.annotation_path.empty()) {
            const SlideAnnotation ann = read_annotation_file(entry.annotation_path);
            const PatchGrid grid =
                tessellate(ann.width, ann.height, ds.manifest.patch_size);
            const auto cell_labels = assign_patch_labels(grid, ann.regions, rule, tau);
            std::vector<int> labels(ds.bags[i].n_instances(), 0);
            for (std::size_t p = 0; p < ds.bags[i].n_instances(); ++p) {
                const auto [col, row] = ds.bags[i].coords[p];
                if (col >= grid.grid_cols || row >= grid.grid_rows) {
                    throw FormatError("slide '" + entry.slide_id + "': patch (" +
                                      std::to_string(col) + "," + std::to_string(row) +
                                      ") lies outside its annotation grid");
                }
                labels[p] = cell_labels[std::size_t(row) * grid.grid_cols + col];
            }
            ds.patch_labels[i] = std::move(labels);
            ds.grids[i] = grid;
        }
        if (entry.split == "train") ds.train_idx.push_back(i);
        else if (entry.split == "val") ds.val_idx.push_back(i);
        else if (entry.split == "test") ds.test_idx.push_back(i);
    }
    return ds;
}

struct VariantPlan {
    std::string spec_name;
    VariantSpec spec;
    ModelConfig config;
    std::string label;
    std::vector<std::pair<ScoringMode, std::string>> rows;
};

std::vector<std::pair<ScoringMode, std::string>> reliability_rows(
    const VariantSpec& spec, const std::string& label) {
    switch (spec.variant) {
        case Variant::MeanPool: return {};
        case Variant::MaxPool: return {{ScoringMode::MaxSel, label}};
        case Variant::MeanPoolIns: return {{ScoringMode::Patch, label}};
        case Variant::MaxPoolIns:
            return {{ScoringMode::MaxSel, label}, {ScoringMode::Patch, label + "-PATCH"}};
        case Variant::Abmil:
        case Variant::MultiHead:
            if (spec.additive) {
                return {{ScoringMode::Att, label + "-ATT"},
                        {ScoringMode::Patch, label + "-PATCH"}};
            }
            return {{ScoringMode::Att, label}};
    }
    return {};
}

VariantPlan make_plan(const BenchOptions& o, const DatasetManifest& manifest,
                      const std::string& name) {
    VariantPlan plan;
    plan.spec_name = name;
    plan.spec = parse_variant_spec(name);
    plan.label = entry_label(plan.spec, o.heads);
    plan.rows = reliability_rows(plan.spec, plan.label);

    ModelConfig c;
    c.input_dim = manifest.input_dim;
    c.embed_dim = o.embed_dim.value_or(std::max<std::size_t>(2, manifest.input_dim / 2));
    c.attn_hidden = o.attn_hidden.value_or(std::max<std::size_t>(1, c.embed_dim / 2));
    c.num_heads = plan.spec.variant == Variant::MultiHead ? o.heads : 1;
    c.num_classes = manifest.class_names.size();
    c.variant = plan.spec.variant;
    c.additive = plan.spec.additive;
    c.scoring = plan.rows.empty() ? ScoringMode::Att : plan.rows.front().first;
    c.validate();
    plan.config = c;
    return plan;
}

struct ScoringOutcome {
    double mi = 0.0, spearman = 0.0, auprc = 0.0;
    std::size_t eligible = 0, excluded = 0;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    double weight_decay = 0.0;
    std::vector<std::pair<double, double>> decay_val_losses;
    std::vector<EpochLoss> history;
    double auc = 0.0, f1 = 0.0;
    std::vector<ScoringOutcome> scorings;
    // first seed only: kept for checkpoints and heatmaps
    std::optional<MilModel> model;
    std::vector<std::vector<double>> default_scores;  // per test slide
    std::vector<double> slide_auprc;                  // per test slide, NaN if n/a
};

SeedOutcome run_task(const BenchOptions& o, const LoadedDataset& ds,
                     const VariantPlan& plan, std::uint64_t seed, bool keep_model) {
    std::vector<const FeatureBag*> train_bags, val_bags;
    for (std::size_t i : ds.train_idx) train_bags.push_back(&ds.bags[i]);
    for (std::size_t i : ds.val_idx) val_bags.push_back(&ds.bags[i]);

    TrainConfig tc = o.train;
    tc.seeds = {seed};
    DecaySelection sel =
        select_weight_decay(plan.config, tc, train_bags, val_bags, seed);

    SeedOutcome out;
    out.seed = seed;
    out.weight_decay = sel.chosen;
    out.decay_val_losses = std::move(sel.val_losses);
    out.history = sel.best.history;
    const MilModel& model = sel.best.model;

    std::vector<EvalRun> runs;
    std::vector<BagOutput> outputs;
    runs.reserve(ds.test_idx.size());
    outputs.reserve(ds.test_idx.size());
    for (std::size_t i : ds.test_idx) {
        BagOutput bo = forward(model, ds.bags[i]);
        EvalRun run;
        run.probabilities.assign(bo.probabilities.data.begin(),
                                 bo.probabilities.data.end());
        run.predicted_class = bo.predicted_class;
        run.true_class = ds.bags[i].label;
        runs.push_back(std::move(run));
        outputs.push_back(std::move(bo));
    }
    out.auc = roc_auc(runs);
    out.f1 = f1(runs);

    const double mi_scale = o.mi_units == "bits" ? 1.0 / std::log(2.0) : 1.0;
    for (const auto& [mode, row_label] : plan.rows) {
        (void)row_label;
        std::vector<std::pair<std::vector<double>, std::vector<int>>> slides;
        for (std::size_t k = 0; k < ds.test_idx.size(); ++k) {
            const std::size_t i = ds.test_idx[k];
            if (ds.patch_labels[i].empty()) continue;
            slides.emplace_back(scores_for_mode(plan.config, outputs[k], mode),
                                ds.patch_labels[i]);
        }
        if (slides.empty()) {
            throw std::invalid_argument("bench: no annotated test slides for '" +
                                        plan.label + "'");
        }
        const DatasetReliability rel =
            evaluate_slides(slides, o.mi_bins, o.pooled_reliability);
        ScoringOutcome sc;
        sc.mi = rel.mean.mi * mi_scale;
        sc.spearman = rel.mean.spearman;
        sc.auprc = rel.mean.auprc;
        sc.eligible = rel.n_eligible;
        sc.excluded = rel.n_excluded;
        out.scorings.push_back(sc);
    }

    if (keep_model && !plan.rows.empty()) {
        out.model = model;
        const ScoringMode mode = plan.rows.front().first;
        for (std::size_t k = 0; k < ds.test_idx.size(); ++k) {
            const std::size_t i = ds.test_idx[k];
            out.default_scores.push_back(scores_for_mode(plan.config, outputs[k], mode));
            if (!ds.patch_labels[i].empty() && slide_eligible(ds.patch_labels[i])) {
                out.slide_auprc.push_back(
                    auprc(out.default_scores.back(), ds.patch_labels[i]));
            } else {
                out.slide_auprc.push_back(std::nan(""));
            }
        }
    } else if (keep_model) {
        out.model = model;
    }
    return out;
}

json metadata_to_json(const std::vector<std::pair<std::string, std::string>>& meta) {
    json arr = json::array();
    for (const auto& [k, v] : meta) arr.push_back({k, v});
    return arr;
}

std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += ",";
        out += s;
    }
    return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& values) {
    std::string out;
    for (const auto& v : values) {
        if (!out.empty()) out += ",";
        if constexpr (std::is_same_v<T, double>) {
            std::ostringstream ss;
            ss << v;
            out += ss.str();
        } else {
            out += std::to_string(v);
        }
    }
    return out;
}

}  // namespace

int cmd_bench(const BenchOptions& options) {
    if (options.data.empty()) throw std::invalid_argument("bench: missing --data");
    if (options.out.empty()) throw std::invalid_argument("bench: missing --out");
    if (options.variants.empty()) throw std::invalid_argument("bench: no variants");
    if (options.mi_units != "nats" && options.mi_units != "bits") {
        throw std::invalid_argument("bench: --mi-units must be nats or bits");
    }
    options.train.validate();

    const LoadedDataset ds =
        load_dataset(options.data, options.label_rule, options.overlap_tau);
    if (ds.train_idx.empty() || ds.val_idx.empty() || ds.test_idx.empty()) {
        throw std::invalid_argument(
            "bench: manifest must provide non-empty train/val/test splits");
    }

    std::vector<VariantPlan> plans;
    for (const auto& name : options.variants) {
        plans.push_back(make_plan(options, ds.manifest, name));
    }

    // One task per (variant, seed); tasks are independent and deterministic,
    // so the worker count does not affect any output byte.
    struct Task {
        std::size_t plan_idx;
        std::size_t seed_idx;
    };
    std::vector<Task> tasks;
    for (std::size_t p = 0; p < plans.size(); ++p) {
        for (std::size_t s = 0; s < options.train.seeds.size(); ++s) {
            tasks.push_back({p, s});
        }
    }
    std::vector<SeedOutcome> outcomes(tasks.size());
    std::atomic<std::size_t> cursor{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        while (true) {
            const std::size_t t = cursor.fetch_add(1);
            if (t >= tasks.size()) break;
            {
                std::scoped_lock lock(error_mutex);
                if (first_error) break;
            }
            try {
                const Task& task = tasks[t];
                outcomes[t] = run_task(options, ds, plans[task.plan_idx],
                                       options.train.seeds[task.seed_idx],
                                       task.seed_idx == 0);
            } catch (...) {
                std::scoped_lock lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const std::size_t n_workers =
        std::max<std::size_t>(1, std::min(options.jobs, tasks.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    const fs::path out(options.out);
    fs::create_directories(out / "logs");
    fs::create_directories(out / "checkpoints");
    fs::create_directories(out / "heatmaps");

    auto outcome_of = [&](std::size_t plan_idx, std::size_t seed_idx) -> SeedOutcome& {
        return outcomes[plan_idx * options.train.seeds.size() + seed_idx];
    };

    // Training logs and checkpoints.
    for (std::size_t p = 0; p < plans.size(); ++p) {
        const std::string stem = sanitize(plans[p].label);
        for (std::size_t s = 0; s < options.train.seeds.size(); ++s) {
            const SeedOutcome& oc = outcome_of(p, s);
            std::ostringstream log;
            log << "epoch,train_loss,val_loss\n";
            for (std::size_t e = 0; e < oc.history.size(); ++e) {
                char line[96];
                std::snprintf(line, sizeof(line), "%zu,%.10g,%.10g\n", e + 1,
                              oc.history[e].train_loss, oc.history[e].val_loss);
                log << line;
            }
            write_text(out / "logs" / (stem + "_seed" + std::to_string(oc.seed) + ".csv"),
                       log.str());
        }
        const SeedOutcome& first = outcome_of(p, 0);
        if (first.model) {
            save_checkpoint(*first.model,
                            (out / "checkpoints" /
                             (stem + "_seed" + std::to_string(first.seed) + ".milr"))
                                .string());
        }
    }

    // Heatmaps: top-k and bottom-k annotated test slides by per-slide AUPRC
    // of the first seed's default scoring.
    for (std::size_t p = 0; p < plans.size(); ++p) {
        const SeedOutcome& first = outcome_of(p, 0);
        if (first.default_scores.empty()) continue;
        std::vector<std::size_t> ranked;
        for (std::size_t k = 0; k < ds.test_idx.size(); ++k) {
            if (!std::isnan(first.slide_auprc[k])) ranked.push_back(k);
        }
        std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
            if (first.slide_auprc[a] != first.slide_auprc[b]) {
                return first.slide_auprc[a] > first.slide_auprc[b];
            }
            return ds.bags[ds.test_idx[a]].slide_id < ds.bags[ds.test_idx[b]].slide_id;
        });
        std::vector<std::size_t> chosen;
        const std::size_t k = std::min(options.topk_heatmaps, ranked.size());
        for (std::size_t i = 0; i < k; ++i) chosen.push_back(ranked[i]);
        for (std::size_t i = ranked.size() > k ? ranked.size() - k : k;
             i < ranked.size(); ++i) {
            chosen.push_back(ranked[i]);
        }
        const std::string stem = sanitize(plans[p].label);
        for (std::size_t k_idx : chosen) {
            const std::size_t i = ds.test_idx[k_idx];
            export_heatmap(first.default_scores[k_idx], ds.grids[i], ds.bags[i].coords,
                           (out / "heatmaps" /
                            (stem + "_" + ds.bags[i].slide_id + ".pgm"))
                               .string(),
                           &ds.patch_labels[i], options.heatmap_block);
        }
    }

    // Aggregated report.
    std::vector<VariantEvaluation> evaluations;
    for (std::size_t p = 0; p < plans.size(); ++p) {
        VariantEvaluation ev;
        ev.model_label = plans[p].label;
        ev.seeds = options.train.seeds;
        ev.flops = count_flops(plans[p].config, options.flops_bag_size);
        ev.model_params = count_params(plans[p].config);
        for (std::size_t r = 0; r < plans[p].rows.size(); ++r) {
            VariantEvaluation::ScoringEval sc;
            sc.row_label = plans[p].rows[r].second;
            ev.scorings.push_back(sc);
        }
        for (std::size_t s = 0; s < options.train.seeds.size(); ++s) {
            const SeedOutcome& oc = outcome_of(p, s);
            ev.auc.push_back(oc.auc);
            ev.f1.push_back(oc.f1);
            for (std::size_t r = 0; r < oc.scorings.size(); ++r) {
                ev.scorings[r].mi.push_back(oc.scorings[r].mi);
                ev.scorings[r].spearman.push_back(oc.scorings[r].spearman);
                ev.scorings[r].auprc.push_back(oc.scorings[r].auprc);
            }
        }
        evaluations.push_back(std::move(ev));
    }

    std::vector<std::pair<std::string, std::string>> metadata = {
        {"dataset", ds.manifest.dataset},
        {"data", options.data},
        {"classes", std::to_string(ds.manifest.class_names.size())},
        {"input_dim", std::to_string(ds.manifest.input_dim)},
        {"slides_train", std::to_string(ds.train_idx.size())},
        {"slides_val", std::to_string(ds.val_idx.size())},
        {"slides_test", std::to_string(ds.test_idx.size())},
        {"variants", join_list(options.variants)},
        {"seeds", join_numbers(options.train.seeds)},
        {"learning_rate", join_numbers(std::vector<double>{options.train.learning_rate})},
        {"epochs", std::to_string(options.train.epochs)},
        {"weight_decay_grid", join_numbers(options.train.weight_decay_grid)},
        {"mi_bins", std::to_string(options.mi_bins)},
        {"mi_units", options.mi_units},
        {"reliability_aggregation",
         options.pooled_reliability ? "pooled" : "per-slide mean"},
        {"label_rule", options.label_rule == LabelRule::Center
                           ? "center"
                           : "overlap tau=" + join_numbers(std::vector<double>{
                                 options.overlap_tau})},
        {"flops_bag_size", std::to_string(options.flops_bag_size)},
        {"f1_convention", "binary: positive class; multi-class: macro"},
        {"auc_convention", "binary: Mann-Whitney; multi-class: macro one-vs-rest"},
        {"split_source", "manifest"},
    };
    const ExperimentReport report = build_report(evaluations, metadata);
    write_text(out / "report.csv", render_table(report, TableFormat::Csv));
    write_text(out / "report.md", render_table(report, TableFormat::Markdown));

    // Raw per-seed dump; cmd_report can re-render tables from it.
    json jvariants = json::array();
    for (std::size_t p = 0; p < plans.size(); ++p) {
        json runs = json::array();
        for (std::size_t s = 0; s < options.train.seeds.size(); ++s) {
            const SeedOutcome& oc = outcome_of(p, s);
            json scorings = json::array();
            for (std::size_t r = 0; r < oc.scorings.size(); ++r) {
                scorings.push_back({{"label", plans[p].rows[r].second},
                                    {"mi", oc.scorings[r].mi},
                                    {"spearman", oc.scorings[r].spearman},
                                    {"auprc", oc.scorings[r].auprc},
                                    {"eligible_slides", oc.scorings[r].eligible},
                                    {"excluded_slides", oc.scorings[r].excluded}});
            }
            json decays = json::array();
            for (const auto& [d, l] : oc.decay_val_losses) decays.push_back({d, l});
            runs.push_back({{"seed", oc.seed},
                            {"weight_decay", oc.weight_decay},
                            {"decay_val_losses", decays},
                            {"auc", oc.auc},
                            {"f1", oc.f1},
                            {"scorings", scorings}});
        }
        jvariants.push_back({{"label", plans[p].label},
                             {"spec", plans[p].spec_name},
                             {"embed_dim", plans[p].config.embed_dim},
                             {"attn_hidden", plans[p].config.attn_hidden},
                             {"num_heads", plans[p].config.num_heads},
                             {"flops", count_flops(plans[p].config, options.flops_bag_size)},
                             {"params", count_params(plans[p].config)},
                             {"runs", runs}});
    }
    write_json(out / "report.json",
               {{"metadata", metadata_to_json(metadata)}, {"variants", jvariants}});

    const json provenance = {
        {"command", "bench"},
        {"data", options.data},
        {"variants", options.variants},
        {"heads", options.heads},
        {"embed_dim",
         options.embed_dim ? json(*options.embed_dim) : json(nullptr)},
        {"attn_hidden",
         options.attn_hidden ? json(*options.attn_hidden) : json(nullptr)},
        {"learning_rate", options.train.learning_rate},
        {"epochs", options.train.epochs},
        {"weight_decay_grid", options.train.weight_decay_grid},
        {"seeds", options.train.seeds},
        {"beta1", options.train.beta1},
        {"beta2", options.train.beta2},
        {"epsilon", options.train.epsilon},
        {"decoupled_decay", options.train.decoupled_decay},
        {"mi_bins", options.mi_bins},
        {"mi_units", options.mi_units},
        {"pooled_reliability", options.pooled_reliability},
        {"label_rule", options.label_rule == LabelRule::Center ? "center" : "overlap"},
        {"overlap_tau", options.overlap_tau},
        {"flops_bag_size", options.flops_bag_size},
        {"topk_heatmaps", options.topk_heatmaps},
        {"heatmap_block", options.heatmap_block},
        {"jobs", options.jobs},
    };
    write_json(out / "provenance.json", provenance);

    std::cout << render_table(report, TableFormat::Markdown);
    return 0;
}

// --- heatmap -----------------------------------------------------------

int cmd_heatmap(const HeatmapOptions& options) {
    if (options.data.empty() || options.checkpoint.empty() || options.out.empty()) {
        throw std::invalid_argument("heatmap: --data, --checkpoint and --out are required");
    }
    const MilModel model = load_checkpoint(options.checkpoint);
    const LoadedDataset ds = load_dataset(options.data, LabelRule::Center, 0.25);
    const ScoringMode mode = options.scoring.empty() ? model.config.scoring
                                                     : parse_scoring(options.scoring);

    std::vector<std::size_t> targets;
    if (options.slides.empty()) {
        for (std::size_t i : ds.test_idx) {
            if (!ds.patch_labels[i].empty()) targets.push_back(i);
        }
    } else {
        for (const auto& id : options.slides) {
            bool found = false;
            for (std::size_t i = 0; i < ds.bags.size(); ++i) {
                if (ds.bags[i].slide_id == id) {
                    targets.push_back(i);
                    found = true;
                    break;
                }
            }
            if (!found) throw std::invalid_argument("heatmap: unknown slide '" + id + "'");
        }
    }
    if (targets.empty()) throw std::invalid_argument("heatmap: no slides to render");

    fs::create_directories(options.out);
    for (std::size_t i : targets) {
        const auto scores = patch_scores(model, ds.bags[i], mode);
        PatchGrid grid = ds.grids[i];
        if (grid.grid_cols == 0) {
            // no annotation: derive the grid extent from the coordinates
            std::uint32_t max_col = 0, max_row = 0;
            for (const auto& [c, r] : ds.bags[i].coords) {
                max_col = std::max(max_col, c);
                max_row = std::max(max_row, r);
            }
            grid.grid_cols = max_col + 1;
            grid.grid_rows = max_row + 1;
        }
        const auto* labels =
            ds.patch_labels[i].empty() ? nullptr : &ds.patch_labels[i];
        export_heatmap(scores, grid, ds.bags[i].coords,
                       (fs::path(options.out) /
                        (ds.bags[i].slide_id + "_" + scoring_name(mode) + ".pgm"))
                           .string(),
                       labels, options.block);
    }
    std::cout << "wrote " << targets.size() << " heatmap(s) to " << options.out << "\n";
    return 0;
}

// --- report ------------------------------------------------------------

int cmd_report(const ReportOptions& options) {
    if (options.from.empty() || options.out.empty()) {
        throw std::invalid_argument("report: --from and --out are required");
    }
    std::ifstream is(options.from);
    if (!is) throw FormatError("cannot open report dump: " + options.from);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError("report dump is not valid JSON: " + std::string(e.what()));
    }

    std::vector<std::pair<std::string, std::string>> metadata;
    for (const auto& kv : j.at("metadata")) {
        metadata.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    }
    std::vector<VariantEvaluation> evaluations;
    for (const auto& v : j.at("variants")) {
        VariantEvaluation ev;
        ev.model_label = v.at("label").get<std::string>();
        ev.flops = v.at("flops").get<std::uint64_t>();
        ev.model_params = v.at("params").get<std::size_t>();
        for (const auto& run : v.at("runs")) {
            ev.seeds.push_back(run.at("seed").get<std::uint64_t>());
            ev.auc.push_back(run.at("auc").get<double>());
            ev.f1.push_back(run.at("f1").get<double>());
            const auto& scorings = run.at("scorings");
            if (ev.scorings.empty()) {
                for (const auto& sc : scorings) {
                    VariantEvaluation::ScoringEval se;
                    se.row_label = sc.at("label").get<std::string>();
                    ev.scorings.push_back(se);
                }
            }
            for (std::size_t r = 0; r < scorings.size(); ++r) {
                ev.scorings[r].mi.push_back(scorings[r].at("mi").get<double>());
                ev.scorings[r].spearman.push_back(
                    scorings[r].at("spearman").get<double>());
                ev.scorings[r].auprc.push_back(scorings[r].at("auprc").get<double>());
            }
        }
        evaluations.push_back(std::move(ev));
    }
    const ExperimentReport report = build_report(evaluations, metadata);
    fs::create_directories(options.out);
    write_text(fs::path(options.out) / "report.csv",
               render_table(report, TableFormat::Csv));
    write_text(fs::path(options.out) / "report.md",
               render_table(report, TableFormat::Markdown));
    return 0;
}

// --- argument parsing ----------------------------------------------------

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    for (const auto& item : split_csv_list(text)) {
        seeds.push_back(std::stoull(item));
    }
    if (seeds.empty()) throw std::invalid_argument("empty seed list");
    return seeds;
}

// Loads bench options from a provenance JSON before flag parsing, so that
// explicitly passed flags override it. Returns whether it supplied seeds.
bool apply_bench_config(BenchOptions& o, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open --config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError("--config is not valid JSON: " + std::string(e.what()));
    }
    if (j.contains("data")) o.data = j["data"].get<std::string>();
    if (j.contains("variants")) o.variants = j["variants"].get<std::vector<std::string>>();
    if (j.contains("heads")) o.heads = j["heads"].get<std::size_t>();
    if (j.contains("embed_dim") && !j["embed_dim"].is_null()) {
        o.embed_dim = j["embed_dim"].get<std::size_t>();
    }
    if (j.contains("attn_hidden") && !j["attn_hidden"].is_null()) {
        o.attn_hidden = j["attn_hidden"].get<std::size_t>();
    }
    if (j.contains("learning_rate")) o.train.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("epochs")) o.train.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("weight_decay_grid")) {
        o.train.weight_decay_grid = j["weight_decay_grid"].get<std::vector<double>>();
    }
    if (j.contains("seeds")) o.train.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("beta1")) o.train.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) o.train.beta2 = j["beta2"].get<double>();
    if (j.contains("epsilon")) o.train.epsilon = j["epsilon"].get<double>();
    if (j.contains("decoupled_decay")) o.train.decoupled_decay = j["decoupled_decay"].get<bool>();
    if (j.contains("mi_bins")) o.mi_bins = j["mi_bins"].get<std::size_t>();
    if (j.contains("mi_units")) o.mi_units = j["mi_units"].get<std::string>();
    if (j.contains("pooled_reliability")) o.pooled_reliability = j["pooled_reliability"].get<bool>();
    if (j.contains("label_rule")) {
        o.label_rule = j["label_rule"].get<std::string>() == "overlap"
                           ? LabelRule::Overlap
                           : LabelRule::Center;
    }
    if (j.contains("overlap_tau")) o.overlap_tau = j["overlap_tau"].get<double>();
    if (j.contains("flops_bag_size")) o.flops_bag_size = j["flops_bag_size"].get<std::size_t>();
    if (j.contains("topk_heatmaps")) o.topk_heatmaps = j["topk_heatmaps"].get<std::size_t>();
    if (j.contains("heatmap_block")) o.heatmap_block = j["heatmap_block"].get<std::size_t>();
    if (j.contains("jobs")) o.jobs = j["jobs"].get<std::size_t>();
    return j.contains("seeds");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"MIL aggregator reliability benchmark"};
    app.require_subcommand(1);

    // A --config file supplies bench defaults; load it before parsing so
    // explicitly passed flags override its values.
    std::string bench_config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) bench_config = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) bench_config = args[i].substr(9);
    }

    // synth
    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    synth_cmd->add_option("--classes", synth.synth.classes, "number of classes");
    synth_cmd->add_option("--slides", synth.synth.slides_per_class, "slides per class");
    synth_cmd->add_option("--bag-min", synth.synth.bag_min, "minimum bag size");
    synth_cmd->add_option("--bag-max", synth.synth.bag_max, "maximum bag size");
    synth_cmd->add_option("--key-frac-min", synth.synth.key_frac_min,
                          "minimum key-instance fraction of positive slides");
    synth_cmd->add_option("--key-frac-max", synth.synth.key_frac_max,
                          "maximum key-instance fraction of positive slides");
    synth_cmd->add_option("--dim", synth.synth.dim, "feature width");
    synth_cmd->add_option("--mu", synth.synth.mu, "signature offset magnitude");
    synth_cmd->add_option("--sigma", synth.synth.sigma, "background noise scale");
    synth_cmd->add_option("--seed", synth.synth.seed, "generator seed");
    synth_cmd->add_option("--patch-size", synth.synth.patch_size, "patch size in pixels");
    std::vector<double> split_fracs;
    synth_cmd->add_option("--split", split_fracs, "train,val,test fractions")
        ->expected(3);
    synth_cmd->add_option("--split-seed", synth.split_seed, "split shuffle seed");

    // bench
    BenchOptions bench;
    bool config_has_seeds = false;
    if (!bench_config.empty()) {
        config_has_seeds = apply_bench_config(bench, bench_config);
    }
    std::string bench_variants_flag, bench_seeds_flag, bench_rule = "center";
    std::string bench_config_flag;
    auto* bench_cmd = app.add_subcommand("bench", "train and score aggregators");
    bench_cmd->add_option("--config", bench_config_flag,
                          "provenance JSON with defaults for every flag");
    bench_cmd->add_option("--data", bench.data, "dataset manifest");
    bench_cmd->add_option("--out", bench.out, "output directory");
    auto* variants_opt =
        bench_cmd->add_option("--variants", bench_variants_flag,
                              "comma-separated variant list (e.g. abmil,abmil-add)");
    bench_cmd->add_option("--heads", bench.heads, "heads for multihead variants");
    std::size_t embed_flag = 0, attn_flag = 0;
    auto* embed_opt = bench_cmd->add_option("--embed-dim", embed_flag,
                                            "embedding width (default input_dim/2)");
    auto* attn_opt = bench_cmd->add_option("--attn-hidden", attn_flag,
                                           "gated-attention width (default embed/2)");
    bench_cmd->add_option("--lr", bench.train.learning_rate, "Adam learning rate");
    bench_cmd->add_option("--epochs", bench.train.epochs, "training epochs");
    std::string wd_flag;
    auto* wd_opt = bench_cmd->add_option("--wd-grid", wd_flag,
                                         "comma-separated weight-decay grid");
    auto* seeds_opt = bench_cmd->add_option("--seeds", bench_seeds_flag,
                                            "comma-separated seed list");
    bench_cmd->add_flag("--decoupled-decay", bench.train.decoupled_decay,
                        "apply weight decay decoupled from the gradient");
    bench_cmd->add_option("--mi-bins", bench.mi_bins, "MI histogram bins");
    bench_cmd->add_option("--mi-units", bench.mi_units, "nats or bits");
    bench_cmd->add_flag("--pooled-reliability", bench.pooled_reliability,
                        "pool patches across slides instead of per-slide means");
    auto* rule_opt = bench_cmd->add_option("--label-rule", bench_rule,
                                           "patch labeling rule: center or overlap");
    bench_cmd->add_option("--overlap-tau", bench.overlap_tau,
                          "area-fraction threshold for the overlap rule");
    bench_cmd->add_option("--flops-bag-size", bench.flops_bag_size,
                          "bag size used in the FLOPs column");
    bench_cmd->add_option("--topk-heatmaps", bench.topk_heatmaps,
                          "heatmaps for the k most and least reliable test slides");
    bench_cmd->add_option("--heatmap-block", bench.heatmap_block,
                          "pixel block per patch in exported heatmaps");
    bench_cmd->add_option("--jobs", bench.jobs, "parallel (variant, seed) tasks");

    // cost
    CostOptions cost;
    std::string cost_variants_flag;
    auto* cost_cmd = app.add_subcommand("cost", "print FLOPs and model sizes");
    auto* cost_variants_opt =
        cost_cmd->add_option("--variants", cost_variants_flag, "variant list");
    cost_cmd->add_option("--bag-size", cost.bag_size, "instances per bag");
    cost_cmd->add_option("--input-dim", cost.input_dim, "feature width");
    cost_cmd->add_option("--embed-dim", cost.embed_dim, "embedding width");
    cost_cmd->add_option("--attn-hidden", cost.attn_hidden, "gated-attention width");
    cost_cmd->add_option("--heads", cost.heads, "heads for multihead variants");
    cost_cmd->add_option("--classes", cost.classes, "number of classes");

    // heatmap
    HeatmapOptions heatmap;
    auto* heatmap_cmd = app.add_subcommand("heatmap", "render patch-score heatmaps");
    heatmap_cmd->add_option("--data", heatmap.data, "dataset manifest")->required();
    heatmap_cmd->add_option("--checkpoint", heatmap.checkpoint, "model checkpoint")
        ->required();
    heatmap_cmd->add_option("--slide", heatmap.slides, "slide id (repeatable)");
    heatmap_cmd->add_option("--scoring", heatmap.scoring, "att, patch or maxsel");
    heatmap_cmd->add_option("--out", heatmap.out, "output directory")->required();
    heatmap_cmd->add_option("--block", heatmap.block, "pixel block per patch");

    // report
    ReportOptions report;
    auto* report_cmd = app.add_subcommand("report", "re-render tables from report.json");
    report_cmd->add_option("--from", report.from, "report.json path")->required();
    report_cmd->add_option("--out", report.out, "output directory")->required();

    std::vector<char*> argv;
    std::vector<std::string> storage = args;
    storage.insert(storage.begin(), "milr");
    for (auto& s : storage) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth_cmd->parsed()) {
            if (split_fracs.size() == 3) {
                synth.split = {split_fracs[0], split_fracs[1], split_fracs[2]};
            }
            return cmd_synth(synth);
        }
        if (bench_cmd->parsed()) {
            // Compound flags (comma lists, optionals) bound to staging
            // variables; everything else was parsed straight into `bench`
            // over the --config defaults.
            if (variants_opt->count()) {
                bench.variants = split_csv_list(bench_variants_flag);
            }
            if (embed_opt->count()) bench.embed_dim = embed_flag;
            if (attn_opt->count()) bench.attn_hidden = attn_flag;
            if (wd_opt->count()) {
                bench.train.weight_decay_grid.clear();
                for (const auto& item : split_csv_list(wd_flag)) {
                    bench.train.weight_decay_grid.push_back(std::stod(item));
                }
            }
            // Seed precedence: explicit flag, then --config, then MILR_SEED.
            if (seeds_opt->count()) {
                bench.train.seeds = parse_seed_list(bench_seeds_flag);
            } else if (!config_has_seeds) {
                if (const char* env = std::getenv("MILR_SEED")) {
                    bench.train.seeds = parse_seed_list(env);
                }
            }
            if (rule_opt->count()) {
                if (bench_rule != "center" && bench_rule != "overlap") {
                    throw std::invalid_argument("--label-rule must be center or overlap");
                }
                bench.label_rule = bench_rule == "overlap" ? LabelRule::Overlap
                                                           : LabelRule::Center;
            }
            return cmd_bench(bench);
        }
        if (cost_cmd->parsed()) {
            if (cost_variants_opt->count()) {
                cost.variants = split_csv_list(cost_variants_flag);
            }
            return cmd_cost(cost);
        }
        if (heatmap_cmd->parsed()) return cmd_heatmap(heatmap);
        if (report_cmd->parsed()) return cmd_report(report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace milr::cli
