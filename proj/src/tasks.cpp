#include "adaptkan/tasks.hpp"

#include "adaptkan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace adaptkan {

namespace {

std::vector<SymbolicTask> build_registry() {
    const double pi = std::numbers::pi;
    std::vector<SymbolicTask> tasks;
    tasks.push_back({"II.38.3", "a*b", {"a", "b"}, {{-1.0, 1.0}, {-1.0, 1.0}},
                     [](std::span<const double> v) { return v[0] * v[1]; }});
    tasks.push_back({"I.6.2", "exp(-theta^2/(2 sigma^2))/sqrt(2 pi sigma^2)", {"theta", "sigma"},
                     {{-1.0, 1.0}, {0.5, 2.0}},
                     [pi](std::span<const double> v) {
                         const double s2 = v[1] * v[1];
                         return std::exp(-v[0] * v[0] / (2.0 * s2)) / std::sqrt(2.0 * pi * s2);
                     }});
    tasks.push_back({"I.16.6", "(a+b)/(1+a*b)", {"a", "b"}, {{-0.9, 0.9}, {-0.9, 0.9}},
                     [](std::span<const double> v) { return (v[0] + v[1]) / (1.0 + v[0] * v[1]); }});
    tasks.push_back({"I.40.1", "n0*exp(-a)", {"n0", "a"}, {{-1.0, 1.0}, {-1.0, 1.0}},
                     [](std::span<const double> v) { return v[0] * std::exp(-v[1]); }});
    tasks.push_back({"II.2.42", "(a-1)*b", {"a", "b"}, {{-1.0, 1.0}, {-1.0, 1.0}},
                     [](std::span<const double> v) { return (v[0] - 1.0) * v[1]; }});
    tasks.push_back({"I.12.11", "1/(1+a*sin(theta))", {"a", "theta"}, {{-0.5, 0.5}, {-pi, pi}},
                     [](std::span<const double> v) { return 1.0 / (1.0 + v[0] * std::sin(v[1])); }});
    tasks.push_back({"toy_sin", "sin(pi*x)", {"x"}, {{-1.0, 1.0}},
                     [pi](std::span<const double> v) { return std::sin(pi * v[0]); }});
    return tasks;
}

Dataset sample(const SymbolicTask& task, std::size_t count, std::mt19937_64& rng) {
    const std::size_t n = task.arity();
    Dataset out;
    out.x.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(n));
    out.y.resize(static_cast<Eigen::Index>(count), 1);
    std::vector<double> row(n);
    for (std::size_t s = 0; s < count; ++s) {
        for (std::size_t j = 0; j < n; ++j) {
            std::uniform_real_distribution<double> dist(task.ranges[j].lo, task.ranges[j].hi);
            row[j] = dist(rng);
            out.x(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = row[j];
        }
        out.y(static_cast<Eigen::Index>(s), 0) = task.target(row);
    }
    return out;
}

}  // namespace

const std::vector<SymbolicTask>& task_registry() {
    static const std::vector<SymbolicTask> tasks = build_registry();
    return tasks;
}

const SymbolicTask& find_task(std::string_view name) {
    for (const SymbolicTask& t : task_registry()) {
        if (t.name == name) return t;
    }
    throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::pair<Dataset, Dataset> generate(const SymbolicTask& task, std::uint64_t seed) {
    if (task.arity() == 0 || !task.target) throw ConfigError("task '" + task.name + "' is incomplete");
    for (const Range& r : task.ranges) {
        if (!(r.lo < r.hi)) throw ConfigError("task '" + task.name + "' has an empty range");
    }
    std::mt19937_64 rng(seed);
    Dataset train = sample(task, task.n_train, rng);
    Dataset test = sample(task, task.n_test, rng);
    return {std::move(train), std::move(test)};
}

double rmse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw ConfigError("rmse: prediction and target sizes differ");
    }
    if (pred.empty()) throw DataError("rmse: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(pred.size()));
}

double rmse(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw ConfigError("rmse: prediction and target shapes differ");
    }
    return rmse(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                std::span<const double>(target.data(), static_cast<std::size_t>(target.size())));
}

Poisoner::Poisoner(const PoisonPlan& plan) : plan_(plan) {
    const std::size_t wanted = plan.high_epochs + plan.low_epochs;
    if (wanted > plan.total_epochs) {
        throw ConfigError("poison plan corrupts more epochs than it has");
    }
    if (!(plan.high_scale >= 0.0) || !(plan.low_scale >= 0.0)) {
        throw ConfigError("poison scales must be nonnegative");
    }
    std::vector<std::size_t> all(plan.total_epochs);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::mt19937_64 rng(plan.seed);
    std::shuffle(all.begin(), all.end(), rng);
    epochs_.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(wanted));
}

std::optional<double> Poisoner::scale_for(std::size_t epoch) const {
    for (std::size_t k = 0; k < epochs_.size(); ++k) {
        if (epochs_[k] == epoch) return k < plan_.high_epochs ? plan_.high_scale : plan_.low_scale;
    }
    return std::nullopt;
}

bool Poisoner::apply(std::size_t epoch, std::size_t batch, Matrix& x) const {
    const std::optional<double> scale = scale_for(epoch);
    if (!scale) return false;
    std::seed_seq seq{static_cast<std::uint32_t>(plan_.seed), static_cast<std::uint32_t>(plan_.seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(batch)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = *scale * gauss(rng);
    }
    return true;
}

}  // namespace adaptkan
