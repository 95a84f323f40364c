#include "milr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "milr/rng.hpp"

namespace milr {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) && learning_rate != 0.0) {
        throw std::invalid_argument("train config: learning rate must be >= 0");
    }
    if (epochs == 0) throw std::invalid_argument("train config: epochs must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("train config: needs >= 1 seed");
    if (weight_decay_grid.empty()) {
        throw std::invalid_argument("train config: empty weight-decay grid");
    }
}

AdamState::AdamState(const MilModel& model) {
    m.reserve(model.params.size());
    v.reserve(model.params.size());
    for (const auto& p : model.params) {
        m.emplace_back(p.value.rows, p.value.cols, 0.0);
        v.emplace_back(p.value.rows, p.value.cols, 0.0);
    }
}

void adam_step(MilModel& model, AdamState& state, const std::vector<Tensor2>& grads,
               double lr, double weight_decay, const TrainConfig& config) {
    if (grads.size() != model.params.size()) {
        throw ShapeError("adam_step: gradient count mismatch");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        Tensor2& theta = model.params[p].value;
        require_same_shape(theta, grads[p], "adam_step");
        for (std::size_t k = 0; k < theta.data.size(); ++k) {
            double g = grads[p].data[k];
            if (!config.decoupled_decay && weight_decay != 0.0) {
                g += weight_decay * theta.data[k];
            }
            double& m = state.m[p].data[k];
            double& v = state.v[p].data[k];
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            theta.data[k] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
            if (config.decoupled_decay && weight_decay != 0.0) {
                theta.data[k] -= lr * weight_decay * theta.data[k];
            }
        }
    }
}

double mean_loss(const MilModel& model, const std::vector<const FeatureBag*>& bags) {
    if (bags.empty()) throw std::invalid_argument("mean_loss: no bags");
    double total = 0.0;
    for (const FeatureBag* bag : bags) {
        ForwardGraph g = build_graph(model, *bag, bag->label);
        total += g.tape.value(*g.loss_node)(0, 0);
    }
    return total / static_cast<double>(bags.size());
}

TrainResult train_one(const ModelConfig& model_config, const TrainConfig& train_config,
                      const std::vector<const FeatureBag*>& train_bags,
                      const std::vector<const FeatureBag*>& val_bags,
                      std::uint64_t seed, double weight_decay) {
    train_config.validate();
    if (train_bags.empty()) throw std::invalid_argument("train_one: empty train split");

    TrainResult result;
    result.model = build_model(model_config, seed);
    AdamState state(result.model);
    // Separate stream from the init so shuffles do not alias parameter draws.
    Rng shuffle_rng(seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<std::size_t> order(train_bags.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Tensor2> grads;
    grads.reserve(result.model.params.size());

    for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t idx : order) {
            const FeatureBag& bag = *train_bags[idx];
            ForwardGraph g = build_graph(result.model, bag, bag.label);
            const double loss = g.tape.value(*g.loss_node)(0, 0);
            if (!std::isfinite(loss)) {
                throw std::runtime_error(
                    "training diverged: non-finite loss at epoch " +
                    std::to_string(epoch + 1) + ", bag '" + bag.slide_id + "'");
            }
            epoch_loss += loss;
            g.tape.backward(*g.loss_node);
            grads.clear();
            for (NodeId id : g.param_nodes) grads.push_back(g.tape.grad(id));
            adam_step(result.model, state, grads, train_config.learning_rate,
                      weight_decay, train_config);
        }
        EpochLoss entry;
        entry.train_loss = epoch_loss / static_cast<double>(train_bags.size());
        entry.val_loss = val_bags.empty() ? 0.0 : mean_loss(result.model, val_bags);
        result.history.push_back(entry);
    }
    result.final_val_loss = result.history.back().val_loss;
    return result;
}

DecaySelection select_weight_decay(const ModelConfig& model_config,
                                   const TrainConfig& train_config,
                                   const std::vector<const FeatureBag*>& train_bags,
                                   const std::vector<const FeatureBag*>& val_bags,
                                   std::uint64_t seed) {
    train_config.validate();
    if (val_bags.empty()) {
        throw std::invalid_argument("select_weight_decay: empty validation split");
    }
    // Ascending deduplicated grid; strict improvement keeps the smaller decay
    // on ties.
    std::vector<double> grid = train_config.weight_decay_grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    DecaySelection sel;
    bool first = true;
    for (double decay : grid) {
        TrainResult run =
            train_one(model_config, train_config, train_bags, val_bags, seed, decay);
        sel.val_losses.emplace_back(decay, run.final_val_loss);
        if (first || run.final_val_loss < sel.best.final_val_loss) {
            sel.chosen = decay;
            sel.best = std::move(run);
            first = false;
        }
    }
    return sel;
}

std::vector<SeedRun> run_protocol(const ModelConfig& model_config,
                                  const TrainConfig& train_config,
                                  const std::vector<const FeatureBag*>& train_bags,
                                  const std::vector<const FeatureBag*>& val_bags) {
    train_config.validate();
    std::vector<SeedRun> runs;
    runs.reserve(train_config.seeds.size());
    for (std::uint64_t seed : train_config.seeds) {
        DecaySelection sel = select_weight_decay(model_config, train_config, train_bags,
                                                 val_bags, seed);
        SeedRun run;
        run.seed = seed;
        run.weight_decay = sel.chosen;
        run.decay_val_losses = std::move(sel.val_losses);
        run.result = std::move(sel.best);
        runs.push_back(std::move(run));
    }
    return runs;
}

}  // namespace milr
