#include "milr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace milr {

namespace {

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string format_stat(const MetricStat& s, int decimals) {
    std::string out = fixed(s.mean, decimals);
    if (s.stddev) out += " \xC2\xB1 " + fixed(*s.stddev, decimals);  // " ± "
    return out;
}

std::string format_flops(std::uint64_t flops) {
    return fixed(double(flops) / 1e6, 1) + " M";
}

std::string format_params(std::size_t params) {
    return fixed(double(params) / 1e3, 1) + " K";
}

MetricStat stat_of(const std::vector<double>& values) {
    MetricStat s;
    if (values.size() >= 2) {
        const MeanStd ms = aggregate_seeds(values);
        s.mean = ms.mean;
        s.stddev = ms.stddev;
    } else if (values.size() == 1) {
        s.mean = values[0];
    }
    return s;
}

struct TableRow {
    std::string model;
    std::string mi, spearman, auprc;  // "-" when not provided
    std::string auc, f1, flops, size;
    bool continuation = false;  // shares the block above in Markdown
};

std::vector<TableRow> layout_rows(const ExperimentReport& report) {
    std::vector<TableRow> rows;
    for (const auto& e : report.entries) {
        TableRow base;
        base.auc = format_stat(e.auc, 3);
        base.f1 = format_stat(e.f1, 3);
        base.flops = format_flops(e.flops);
        base.size = format_params(e.model_params);
        if (e.reliability.empty()) {
            TableRow row = base;
            row.model = e.model_label;
            row.mi = row.spearman = row.auprc = "-";
            rows.push_back(std::move(row));
            continue;
        }
        for (std::size_t i = 0; i < e.reliability.size(); ++i) {
            const auto& r = e.reliability[i];
            TableRow row = base;
            row.model = r.label;
            row.mi = format_stat(r.mi, 4);
            row.spearman = format_stat(r.spearman, 4);
            row.auprc = format_stat(r.auprc, 4);
            row.continuation = i > 0;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

const char* kHeader[8] = {"Model", "MI",  "Spearman's", "AUPRC",
                          "AUC",   "F1",  "FLOPs",      "Model Size"};

}  // namespace

ExperimentReport build_report(
    const std::vector<VariantEvaluation>& evaluations,
    std::vector<std::pair<std::string, std::string>> metadata) {
    ExperimentReport report;
    report.metadata = std::move(metadata);
    for (const auto& ev : evaluations) {
        if (!evaluations.empty() && ev.seeds != evaluations.front().seeds) {
            throw std::invalid_argument(
                "build_report: seed sets differ between variants ('" +
                ev.model_label + "' vs '" + evaluations.front().model_label + "')");
        }
        ReportEntry entry;
        entry.model_label = ev.model_label;
        entry.auc = stat_of(ev.auc);
        entry.f1 = stat_of(ev.f1);
        entry.flops = ev.flops;
        entry.model_params = ev.model_params;
        for (const auto& sc : ev.scorings) {
            ReliabilityRow row;
            row.label = sc.row_label;
            row.mi = stat_of(sc.mi);
            row.spearman = stat_of(sc.spearman);
            row.auprc = stat_of(sc.auprc);
            entry.reliability.push_back(std::move(row));
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

std::string render_table(const ExperimentReport& report, TableFormat format) {
    const std::vector<TableRow> rows = layout_rows(report);
    std::ostringstream os;
    if (format == TableFormat::Csv) {
        for (int c = 0; c < 8; ++c) os << (c ? "," : "") << kHeader[c];
        os << "\n";
        for (const auto& r : rows) {
            os << r.model << "," << r.mi << "," << r.spearman << "," << r.auprc << ","
               << r.auc << "," << r.f1 << "," << r.flops << "," << r.size << "\n";
        }
        return os.str();
    }
    // Markdown
    for (const auto& [key, value] : report.metadata) {
        os << "<!-- " << key << ": " << value << " -->\n";
    }
    os << "| Model | MI | Spearman's | AUPRC | AUC | F1 | FLOPs | Model Size |\n";
    os << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        if (r.continuation) {
            os << "| " << r.model << " | " << r.mi << " | " << r.spearman << " | "
               << r.auprc << " |  |  |  |  |\n";
        } else {
            os << "| " << r.model << " | " << r.mi << " | " << r.spearman << " | "
               << r.auprc << " | " << r.auc << " | " << r.f1 << " | " << r.flops
               << " | " << r.size << " |\n";
        }
    }
    return os.str();
}

namespace {

MetricStat parse_stat(const std::string& cell) {
    MetricStat s;
    const auto pm = cell.find("\xC2\xB1");
    if (pm == std::string::npos) {
        s.mean = std::stod(cell);
    } else {
        s.mean = std::stod(cell.substr(0, pm));
        s.stddev = std::stod(cell.substr(pm + 2));
    }
    return s;
}

}  // namespace

ExperimentReport parse_csv_table(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("csv table: empty input");
    ExperimentReport report;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) {
            throw FormatError("csv table: expected 8 columns, got " +
                              std::to_string(cells.size()));
        }
        ReportEntry entry;
        entry.model_label = cells[0];
        if (cells[1] != "-") {
            ReliabilityRow row;
            row.label = cells[0];
            row.mi = parse_stat(cells[1]);
            row.spearman = parse_stat(cells[2]);
            row.auprc = parse_stat(cells[3]);
            entry.reliability.push_back(std::move(row));
        }
        entry.auc = parse_stat(cells[4]);
        entry.f1 = parse_stat(cells[5]);
        entry.flops = static_cast<std::uint64_t>(
            std::llround(std::stod(cells[6].substr(0, cells[6].size() - 2)) * 1e6));
        entry.model_params = static_cast<std::size_t>(
            std::llround(std::stod(cells[7].substr(0, cells[7].size() - 2)) * 1e3));
        report.entries.push_back(std::move(entry));
    }
    return report;
}

void export_heatmap(const std::vector<double>& scores, const PatchGrid& grid,
                    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& coords,
                    const std::string& path, const std::vector<int>* labels,
                    std::size_t block) {
    if (scores.size() != coords.size()) {
        throw ShapeError("export_heatmap: " + std::to_string(scores.size()) +
                         " scores vs " + std::to_string(coords.size()) + " patches");
    }
    if (labels && labels->size() != coords.size()) {
        throw ShapeError("export_heatmap: label count mismatch");
    }
    if (block == 0) throw std::invalid_argument("export_heatmap: zero block size");

    const std::size_t w = grid.grid_cols * block;
    const std::size_t h = grid.grid_rows * block;
    double lo = 0.0, hi = 0.0;
    if (!scores.empty()) {
        const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
        lo = *mn;
        hi = *mx;
    }

    auto write_pgm = [&](const std::string& file, const std::vector<std::uint8_t>& px) {
        std::ofstream os(file, std::ios::binary);
        if (!os) throw FormatError("cannot write heatmap: " + file);
        os << "P5\n" << w << " " << h << "\n255\n";
        os.write(reinterpret_cast<const char*>(px.data()),
                 static_cast<std::streamsize>(px.size()));
    };
    auto paint = [&](std::vector<std::uint8_t>& px, std::size_t col, std::size_t row,
                     std::uint8_t value) {
        for (std::size_t dy = 0; dy < block; ++dy) {
            for (std::size_t dx = 0; dx < block; ++dx) {
                px[(row * block + dy) * w + col * block + dx] = value;
            }
        }
    };

    std::vector<std::uint8_t> pixels(w * h, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto [col, row] = coords[i];
        if (col >= grid.grid_cols || row >= grid.grid_rows) {
            throw ShapeError("export_heatmap: patch (" + std::to_string(col) + "," +
                             std::to_string(row) + ") outside the grid");
        }
        std::uint8_t v = 128;
        if (hi > lo) {
            v = static_cast<std::uint8_t>(
                std::lround(255.0 * (scores[i] - lo) / (hi - lo)));
        }
        paint(pixels, col, row, v);
    }
    write_pgm(path, pixels);

    if (labels) {
        std::vector<std::uint8_t> truth(w * h, 0);
        for (std::size_t i = 0; i < coords.size(); ++i) {
            paint(truth, coords[i].first, coords[i].second,
                  (*labels)[i] ? std::uint8_t{255} : std::uint8_t{0});
        }
        std::string truth_path = path;
        const auto dot = truth_path.rfind(".pgm");
        if (dot != std::string::npos) truth_path = truth_path.substr(0, dot);
        write_pgm(truth_path + "_truth.pgm", truth);
    }
}

PgmImage read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open pgm: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw FormatError(path + ": not a binary pgm");
    PgmImage img;
    std::size_t maxval = 0;
    is >> img.width >> img.height >> maxval;
    if (maxval != 255) throw FormatError(path + ": unsupported maxval");
    is.get();  // the single whitespace after the header
    img.pixels.resize(img.width * img.height);
    if (!is.read(reinterpret_cast<char*>(img.pixels.data()),
                 static_cast<std::streamsize>(img.pixels.size()))) {
        throw FormatError(path + ": truncated pixel data");
    }
    return img;
}

}  // namespace milr
