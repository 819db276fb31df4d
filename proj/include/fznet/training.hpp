#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fznet/metrics.hpp"
#include "fznet/modelzoo.hpp"
#include "fznet/synthdata.hpp"

namespace fznet {

struct TrainConfig {
    int epochs = 15;
    int batch_size = 10;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    bool freeze_scaling = false;
    double clip_norm = 5.0;  // global-norm clip; <= 0 disables
    // optional early exit once the epoch train RMSE drops below this (0 = off)
    double stop_at_train_rmse = 0.0;

    void validate() const;
};

// Adam with bias correction; moments are aligned with ParamStore order.
struct OptimizerState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;
};

// One update. `trainable[i]` false skips parameter i (used for a frozen
// scaling vector). Throws TrainError naming the parameter on a non-finite
// gradient.
void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               OptimizerState& state, double lr, const std::vector<char>& trainable = {});

struct EpochStats {
    double train_rmse = 0.0;
    MetricsReport dev;
    double seconds = 0.0;
};

struct History {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;  // 0-based epoch whose parameters the model retains

    // Wall time is deliberately not serialized so identical runs produce
    // byte-identical tables.
    std::string to_tsv() const;
};

// Mini-batch training with per-epoch dev evaluation and best-epoch retention.
// The model is updated in place and ends holding the best-dev-RMSE weights.
History train(Model& model, const CorpusManifest& corpus, const TrainConfig& cfg);

MetricsReport evaluate(const Model& model, const CorpusManifest& corpus, Partition partition);

// Predict-the-train-mean baseline RMSE on the given partition.
double mean_baseline_rmse(const CorpusManifest& corpus, Partition partition);

}  // namespace fznet
