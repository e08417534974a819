#pragma once

#include "adaptkan/network.hpp"
#include "adaptkan/tasks.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace adaptkan {

enum class OptimizerKind { adam, adamw };

std::string_view to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view text);

struct AdamHyper {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Decoupled for AdamW, an L2 term added to the gradient for Adam.
    double weight_decay = 0.0;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

/// One bias-corrected update. `state` is sized on first use.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads,
               AdamState& state, const AdamHyper& hyper);

/// lr0 * (1 - 0.9 (t/S)^2) with decay, lr0 without.
double lr_at(double lr0, std::size_t t, std::size_t steps, bool decay);

struct Round {
    double lr = 1e-2;
    std::size_t steps = 2000;
    int omega = 3;
};

struct TrainPlan {
    std::vector<Round> rounds;
    OptimizerKind optimizer = OptimizerKind::adam;
    double weight_decay = 0.0;
    bool lr_decay = false;
    /// 0 means the full training set every step.
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
    double sparsity_lambda = 0.0;
    /// Fold batches into histograms (and adapt) during training.
    bool record = true;
    /// Force a manual adapt every this many steps; 0 disables.
    std::size_t manual_interval = 0;

    void validate() const;
};

struct RoundRecord {
    std::size_t round = 0;
    int omega = 0;
    double lr = 0.0;
    double train_rmse = 0.0;
    double test_rmse = 0.0;
    std::size_t adapt_events = 0;
    bool fail = false;
};

struct TrainHooks {
    Poisoner poison;
    /// Called after every optimizer step with the global step index.
    std::function<void(std::size_t step, double loss)> on_step;
};

/// Multi-round MSE training; see TrainPlan. A round whose loss or
/// activations turn non-finite stops early and is marked failed.
std::vector<RoundRecord> train(AdaptKanNet& net, const Dataset& train_set,
                               const Dataset& test_set, const TrainPlan& plan,
                               const TrainHooks& hooks = {});

/// Lowest test RMSE over rounds that did not fail (infinity if none).
double best_test_rmse(std::span<const RoundRecord> history);

/// Streams shuffled mini-batches epoch by epoch.
class BatchSampler {
public:
    BatchSampler(std::size_t count, std::size_t batch_size, std::uint64_t seed);

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch_in_epoch() const noexcept { return batch_; }
    std::size_t batches_per_epoch() const noexcept;

    /// Row indices of the next batch; advances the epoch when needed.
    std::span<const std::size_t> next();

private:
    std::size_t count_;
    std::size_t batch_size_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
    std::size_t batch_ = 0;
    bool started_ = false;
};

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

}  // namespace adaptkan
