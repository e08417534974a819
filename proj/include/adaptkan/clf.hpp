#pragma once

#include "adaptkan/network.hpp"
#include "adaptkan/optim.hpp"
#include "adaptkan/tasks.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace adaptkan {

using Vec2 = std::array<double, 2>;

/// x' = f(x) + g(x) u with f = (x2^3, -x1^3), g = (1, 0).
Vec2 drift(const Vec2& x) noexcept;
Vec2 gain(const Vec2& x) noexcept;

struct ValueGrad {
    double value = 0.0;
    Vec2 grad{0.0, 0.0};
};

/// V = (x1^2 + x2^2 + (x1 - x2)^2) / 2.
ValueGrad analytical_clf(const Vec2& x) noexcept;

inline constexpr double kClfEps = 1e-8;

/// Sontag's universal formula; zero when |LgV| <= eps.
double sontag_control(double lfv, double lgv, double eps = kClfEps) noexcept;

/// Candidate Lyapunov function with gradient. An empty provider means u = 0.
using ClfProvider = std::function<ValueGrad(const Vec2&)>;

double feedback(const ClfProvider& provider, const Vec2& x, double eps = kClfEps);

struct SimOptions {
    double horizon = 10.0;
    double dt = 0.01;
    bool keep_states = true;
};

struct Trajectory {
    std::vector<Vec2> states;  // includes x0 when kept
    Vec2 final{0.0, 0.0};
    bool failed = false;

    /// ||x_F||, infinite for failed runs.
    double final_distance() const noexcept;
};

/// Classic RK4 with the control recomputed at every stage. A non-finite
/// state stops the run and marks it failed.
Trajectory simulate(const Vec2& x0, const ClfProvider& provider, const SimOptions& options = {});

/// Sorted final distances with split-conformal accessors.
class ConformalReport {
public:
    explicit ConformalReport(std::vector<double> distances);

    std::size_t size() const noexcept { return r_.size(); }
    const std::vector<double>& sorted() const noexcept { return r_; }

    /// R^(p), p = ceil((K + 1)(1 - delta)); infinity when p > K.
    double quantile(double delta) const;
    /// |{R <= C}| / (K + 1).
    double confidence(double c) const;

private:
    std::vector<double> r_;
};

/// `count` starts uniform on [lo, hi]^2.
std::vector<Vec2> uniform_starts(std::size_t count, std::uint64_t seed, double lo = -3.0, double hi = 3.0);

ConformalReport run_conformal(std::span<const Vec2> starts, const ClfProvider& provider,
                              const SimOptions& options = {});

enum class ClfOutputMode {
    direct,        ///< V = f_theta(x), one output
    squared_norm,  ///< V = |f_theta(x)|^2 / 2
};

std::string_view to_string(ClfOutputMode mode) noexcept;
ClfOutputMode parse_clf_output_mode(std::string_view text);

ValueGrad lyapunov_value_and_grad(const AdaptKanNet& net, const Vec2& x, ClfOutputMode mode);

/// Per-row V, LfV and LgV of a network candidate.
struct LieBatch {
    std::vector<double> v;
    std::vector<double> lfv;
    std::vector<double> lgv;
};

LieBatch lie_derivatives(const AdaptKanNet& net, const Matrix& x, ClfOutputMode mode);

/// Provider backed by a network; the network must outlive it.
ClfProvider network_provider(const AdaptKanNet& net, ClfOutputMode mode);

struct ClfLossConfig {
    std::array<double, 5> lambda{10.0, 0.1, 1.0, 1.0, 0.0};  // origin, f, g, bowl, pos
    double tau = 0.1;
    double k1 = 1e-3;
    double k2 = 10.0;
    double eps = kClfEps;
    ClfOutputMode output_mode = ClfOutputMode::squared_norm;
    std::size_t output_dim = 1;

    void validate() const;
};

struct ClfLossTerms {
    double origin = 0.0;
    double bowl = 0.0;
    double f = 0.0;
    double g = 0.0;
    double pos = 0.0;
    double total = 0.0;
};

/// Gradients of the weighted total w.r.t. the per-sample quantities.
struct ClfLossGrad {
    std::vector<double> v;
    std::vector<double> lfv;
    std::vector<double> lgv;
    double v_origin = 0.0;
};

ClfLossTerms clf_losses(std::span<const Vec2> x, std::span<const double> v,
                        std::span<const double> lfv, std::span<const double> lgv,
                        double v_origin, const ClfLossConfig& cfg,
                        ClfLossGrad* grad = nullptr);

/// Loss terms of a network candidate on `x` (N x 2); no state changes.
ClfLossTerms clf_evaluate(const AdaptKanNet& net, const Matrix& x, const ClfLossConfig& cfg);

/// Loss terms plus the gradient of the weighted total w.r.t. every
/// trainable parameter; no state changes.
ClfLossTerms clf_loss_grad(const AdaptKanNet& net, const Matrix& x, const ClfLossConfig& cfg,
                           NetGrad& grad);

struct ClfTrainPlan {
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    double lr = 1e-2;
    bool lr_decay = false;
    OptimizerKind optimizer = OptimizerKind::adam;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    bool record = true;
    std::size_t manual_interval = 0;
};

struct ClfEpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::size_t adapt_events = 0;
    bool poisoned = false;
    bool fail = false;
};

/// Trains a candidate on points `train_x` (N x 2). Epochs listed by
/// `poison` see Gaussian noise in place of the inputs.
std::vector<ClfEpochRecord> train_clf(AdaptKanNet& net, const Matrix& train_x, const Matrix& val_x,
                                      const ClfTrainPlan& plan, const ClfLossConfig& cfg,
                                      const Poisoner& poison = {});

/// N points uniform on [lo, hi]^2 as a matrix.
Matrix uniform_points(std::size_t count, std::uint64_t seed, double lo = -3.0, double hi = 3.0);

}  // namespace adaptkan
