#pragma once

#include "adaptkan/network.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace adaptkan {

/// Inputs one sample per row, targets one column per output.
struct Dataset {
    Matrix x;
    Matrix y;

    std::size_t size() const noexcept { return static_cast<std::size_t>(x.rows()); }
};

struct Range {
    double lo;
    double hi;
};

struct SymbolicTask {
    std::string name;
    std::string formula;
    std::vector<std::string> inputs;
    std::vector<Range> ranges;
    std::function<double(std::span<const double>)> target;
    std::size_t n_train = 3000;
    std::size_t n_test = 1000;

    std::size_t arity() const noexcept { return ranges.size(); }
};

/// Built-in symbolic tasks.
const std::vector<SymbolicTask>& task_registry();
/// Throws ConfigError for unknown names.
const SymbolicTask& find_task(std::string_view name);

/// Uniform samples inside the task ranges; train and test drawn from
/// separate stretches of one seeded stream.
std::pair<Dataset, Dataset> generate(const SymbolicTask& task, std::uint64_t seed);

double rmse(std::span<const double> pred, std::span<const double> target);
double rmse(const Matrix& pred, const Matrix& target);

/// Replaces training inputs with scaled Gaussian noise in a few epochs.
struct PoisonPlan {
    std::size_t total_epochs = 1000;
    std::size_t high_epochs = 5;
    double high_scale = 10.0;
    std::size_t low_epochs = 5;
    double low_scale = 0.1;
    std::uint64_t seed = 0;
};

class Poisoner {
public:
    Poisoner() = default;
    explicit Poisoner(const PoisonPlan& plan);

    /// Noise scale for `epoch`, or nothing when the epoch is clean.
    std::optional<double> scale_for(std::size_t epoch) const;
    const std::vector<std::size_t>& epochs() const noexcept { return epochs_; }

    /// Overwrites `x` with scale * N(0, 1) when the epoch is corrupted.
    /// `batch` picks an independent stream within the epoch. Returns
    /// whether anything changed.
    bool apply(std::size_t epoch, std::size_t batch, Matrix& x) const;

private:
    PoisonPlan plan_;
    std::vector<std::size_t> epochs_;  // first high_epochs use high_scale
};

}  // namespace adaptkan
