#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milr/feature_bag.hpp"
#include "milr/models.hpp"
#include "milr/tensor.hpp"

namespace milr {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t epochs = 50;
    std::vector<double> weight_decay_grid = {0.0, 1e-5, 1e-4, 1e-3};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool decoupled_decay = false;  // default: L2 added to the gradient

    void validate() const;
};

/// Adam moments per parameter plus the shared step counter; one step per bag.
struct AdamState {
    std::vector<Tensor2> m;
    std::vector<Tensor2> v;
    std::size_t step = 0;

    explicit AdamState(const MilModel& model);
};

void adam_step(MilModel& model, AdamState& state, const std::vector<Tensor2>& grads,
               double lr, double weight_decay, const TrainConfig& config);

struct EpochLoss {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    MilModel model;
    std::vector<EpochLoss> history;  // one entry per epoch
    double final_val_loss = 0.0;
};

/// One full run at a fixed weight decay: bags are visited one per step in a
/// seed-shuffled order each epoch, for the full epoch budget (no early
/// stopping). Divergence (non-finite loss) aborts with the epoch and bag id.
TrainResult train_one(const ModelConfig& model_config, const TrainConfig& train_config,
                      const std::vector<const FeatureBag*>& train_bags,
                      const std::vector<const FeatureBag*>& val_bags,
                      std::uint64_t seed, double weight_decay);

struct DecaySelection {
    double chosen = 0.0;
    std::vector<std::pair<double, double>> val_losses;  // (decay, final val loss)
    TrainResult best;  // the run trained at the chosen decay
};

/// Trains once per distinct grid value and keeps the run with the lowest
/// final-epoch mean validation loss; ties resolve to the smaller decay.
DecaySelection select_weight_decay(const ModelConfig& model_config,
                                   const TrainConfig& train_config,
                                   const std::vector<const FeatureBag*>& train_bags,
                                   const std::vector<const FeatureBag*>& val_bags,
                                   std::uint64_t seed);

struct SeedRun {
    std::uint64_t seed = 0;
    double weight_decay = 0.0;
    TrainResult result;
    std::vector<std::pair<double, double>> decay_val_losses;
};

/// The full protocol: per seed, tune the decay on the validation split and
/// keep the tuned model. Seeds are independent; results do not depend on
/// their order.
std::vector<SeedRun> run_protocol(const ModelConfig& model_config,
                                  const TrainConfig& train_config,
                                  const std::vector<const FeatureBag*>& train_bags,
                                  const std::vector<const FeatureBag*>& val_bags);

double mean_loss(const MilModel& model, const std::vector<const FeatureBag*>& bags);

}  // namespace milr
