#include "adaptkan/clf.hpp"

#include "adaptkan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace adaptkan {

Vec2 drift(const Vec2& x) noexcept {
    return {x[1] * x[1] * x[1], -x[0] * x[0] * x[0]};
}

Vec2 gain(const Vec2&) noexcept {
    return {1.0, 0.0};
}

ValueGrad analytical_clf(const Vec2& x) noexcept {
    const double d = x[0] - x[1];
    return {0.5 * (x[0] * x[0] + x[1] * x[1] + d * d), {2.0 * x[0] - x[1], 2.0 * x[1] - x[0]}};
}

double sontag_control(double lfv, double lgv, double eps) noexcept {
    if (!(std::abs(lgv) > eps)) return 0.0;
    const double lg2 = lgv * lgv;
    return -(lfv + std::sqrt(lfv * lfv + lg2 * lg2)) / lgv;
}

double feedback(const ClfProvider& provider, const Vec2& x, double eps) {
    if (!provider) return 0.0;
    const ValueGrad vg = provider(x);
    const Vec2 f = drift(x);
    const Vec2 g = gain(x);
    const double lfv = vg.grad[0] * f[0] + vg.grad[1] * f[1];
    const double lgv = vg.grad[0] * g[0] + vg.grad[1] * g[1];
    return sontag_control(lfv, lgv, eps);
}

namespace {

Vec2 closed_loop(const ClfProvider& provider, const Vec2& x) {
    const double u = feedback(provider, x);
    const Vec2 f = drift(x);
    const Vec2 g = gain(x);
    return {f[0] + g[0] * u, f[1] + g[1] * u};
}

Vec2 axpy(const Vec2& x, double h, const Vec2& k) noexcept {
    return {x[0] + h * k[0], x[1] + h * k[1]};
}

}  // namespace

double Trajectory::final_distance() const noexcept {
    if (failed) return std::numeric_limits<double>::infinity();
    return std::hypot(final[0], final[1]);
}

Trajectory simulate(const Vec2& x0, const ClfProvider& provider, const SimOptions& options) {
    if (!(options.dt > 0.0) || !(options.horizon >= 0.0)) {
        throw ConfigError("simulate: dt must be positive and the horizon nonnegative");
    }
    const auto steps = static_cast<std::size_t>(std::llround(options.horizon / options.dt));
    const double h = options.dt;

    Trajectory out;
    if (options.keep_states) {
        out.states.reserve(steps + 1);
        out.states.push_back(x0);
    }
    // a stage state can overflow before the step does
    auto stage = [&](const Vec2& xs, Vec2& k) {
        if (!std::isfinite(xs[0]) || !std::isfinite(xs[1])) return false;
        try {
            k = closed_loop(provider, xs);
        } catch (const NumericalError&) {
            return false;
        }
        return std::isfinite(k[0]) && std::isfinite(k[1]);
    };
    Vec2 x = x0;
    for (std::size_t s = 0; s < steps; ++s) {
        Vec2 k1, k2, k3, k4;
        const bool ok = stage(x, k1) && stage(axpy(x, 0.5 * h, k1), k2) &&
                        stage(axpy(x, 0.5 * h, k2), k3) && stage(axpy(x, h, k3), k4);
        if (ok) {
            for (int d = 0; d < 2; ++d) {
                x[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
            }
        }
        if (!ok || !std::isfinite(x[0]) || !std::isfinite(x[1])) {
            out.failed = true;
            break;
        }
        if (options.keep_states) out.states.push_back(x);
    }
    out.final = x;
    return out;
}

ConformalReport::ConformalReport(std::vector<double> distances) : r_(std::move(distances)) {
    for (double& r : r_) {
        if (std::isnan(r)) r = std::numeric_limits<double>::infinity();
        if (r < 0.0) throw DataError("conformal: distances must be nonnegative");
    }
    std::sort(r_.begin(), r_.end());
}

double ConformalReport::quantile(double delta) const {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("conformal: delta must lie in (0, 1)");
    const double k1 = static_cast<double>(r_.size() + 1);
    // tolerance absorbs representation error in (K+1)(1-delta) near integers
    const double raw = std::ceil(k1 * (1.0 - delta) - 1e-9);
    const auto p = static_cast<std::size_t>(std::max(1.0, raw));
    if (p > r_.size()) return std::numeric_limits<double>::infinity();
    return r_[p - 1];
}

double ConformalReport::confidence(double c) const {
    const auto hits = std::upper_bound(r_.begin(), r_.end(), c) - r_.begin();
    return static_cast<double>(hits) / static_cast<double>(r_.size() + 1);
}

std::vector<Vec2> uniform_starts(std::size_t count, std::uint64_t seed, double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("uniform_starts: empty range");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<Vec2> out(count);
    for (Vec2& x : out) {
        x[0] = dist(rng);
        x[1] = dist(rng);
    }
    return out;
}

Matrix uniform_points(std::size_t count, std::uint64_t seed, double lo, double hi) {
    const std::vector<Vec2> pts = uniform_starts(count, seed, lo, hi);
    Matrix out(static_cast<Eigen::Index>(count), 2);
    for (std::size_t i = 0; i < count; ++i) {
        out(static_cast<Eigen::Index>(i), 0) = pts[i][0];
        out(static_cast<Eigen::Index>(i), 1) = pts[i][1];
    }
    return out;
}

ConformalReport run_conformal(std::span<const Vec2> starts, const ClfProvider& provider,
                              const SimOptions& options) {
    SimOptions opts = options;
    opts.keep_states = false;
    std::vector<double> r;
    r.reserve(starts.size());
    for (const Vec2& x0 : starts) r.push_back(simulate(x0, provider, opts).final_distance());
    return ConformalReport(std::move(r));
}

std::string_view to_string(ClfOutputMode mode) noexcept {
    return mode == ClfOutputMode::direct ? "direct" : "squared_norm";
}

ClfOutputMode parse_clf_output_mode(std::string_view text) {
    if (text == "direct") return ClfOutputMode::direct;
    if (text == "squared_norm") return ClfOutputMode::squared_norm;
    throw ConfigError("unknown clf output mode '" + std::string(text) + "'");
}

namespace {

void check_clf_net(const AdaptKanNet& net, ClfOutputMode mode) {
    if (net.input_width() != 2) throw ConfigError("clf network must take 2 inputs");
    if (mode == ClfOutputMode::direct && net.output_width() != 1) {
        throw ConfigError("direct clf output mode needs exactly one network output");
    }
}

std::array<Matrix, 2> lie_tangents(const Matrix& x) {
    Matrix tf(x.rows(), 2);
    Matrix tg(x.rows(), 2);
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
        const Vec2 p{x(b, 0), x(b, 1)};
        const Vec2 f = drift(p);
        const Vec2 g = gain(p);
        tf(b, 0) = f[0];
        tf(b, 1) = f[1];
        tg(b, 0) = g[0];
        tg(b, 1) = g[1];
    }
    return {std::move(tf), std::move(tg)};
}

// V, LfV, LgV from outputs y and tangent images uf, ug.
LieBatch combine_lie(const Matrix& y, const Matrix& uf, const Matrix& ug, ClfOutputMode mode) {
    const auto batch = static_cast<std::size_t>(y.rows());
    LieBatch out;
    out.v.resize(batch);
    out.lfv.resize(batch);
    out.lgv.resize(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto r = static_cast<Eigen::Index>(b);
        if (mode == ClfOutputMode::direct) {
            out.v[b] = y(r, 0);
            out.lfv[b] = uf(r, 0);
            out.lgv[b] = ug(r, 0);
        } else {
            out.v[b] = 0.5 * y.row(r).squaredNorm();
            out.lfv[b] = y.row(r).dot(uf.row(r));
            out.lgv[b] = y.row(r).dot(ug.row(r));
        }
    }
    return out;
}

double origin_value(const Matrix& y0, ClfOutputMode mode) {
    return mode == ClfOutputMode::direct ? y0(0, 0) : 0.5 * y0.row(0).squaredNorm();
}

std::vector<Vec2> rows_as_points(const Matrix& x) {
    std::vector<Vec2> pts(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index b = 0; b < x.rows(); ++b) pts[static_cast<std::size_t>(b)] = {x(b, 0), x(b, 1)};
    return pts;
}

void add_into(NetGrad& acc, const NetGrad& g) {
    for (std::size_t l = 0; l < acc.layers.size(); ++l) {
        LayerGrad& a = acc.layers[l];
        const LayerGrad& b = g.layers[l];
        for (std::size_t j = 0; j < a.coef.size(); ++j) {
            for (std::size_t k = 0; k < a.coef[j].size(); ++k) a.coef[j][k] += b.coef[j][k];
        }
        for (std::size_t k = 0; k < a.base_scale.size(); ++k) a.base_scale[k] += b.base_scale[k];
        for (std::size_t k = 0; k < a.spline_scale.size(); ++k) a.spline_scale[k] += b.spline_scale[k];
    }
}

}  // namespace

ValueGrad lyapunov_value_and_grad(const AdaptKanNet& net, const Vec2& x, ClfOutputMode mode) {
    check_clf_net(net, mode);
    Matrix in(1, 2);
    in << x[0], x[1];
    const Matrix e1 = (Matrix(1, 2) << 1.0, 0.0).finished();
    const Matrix e2 = (Matrix(1, 2) << 0.0, 1.0).finished();
    const std::array<Matrix, 2> tangents{e1, e2};
    ForwardCache cache;
    const Matrix y = net.predict(in, &cache, tangents);
    const LieBatch lie = combine_lie(y, cache.output_tangent[0], cache.output_tangent[1], mode);
    return {lie.v[0], {lie.lfv[0], lie.lgv[0]}};
}

LieBatch lie_derivatives(const AdaptKanNet& net, const Matrix& x, ClfOutputMode mode) {
    check_clf_net(net, mode);
    const std::array<Matrix, 2> tangents = lie_tangents(x);
    ForwardCache cache;
    const Matrix y = net.predict(x, &cache, tangents);
    return combine_lie(y, cache.output_tangent[0], cache.output_tangent[1], mode);
}

ClfProvider network_provider(const AdaptKanNet& net, ClfOutputMode mode) {
    check_clf_net(net, mode);
    return [&net, mode](const Vec2& x) { return lyapunov_value_and_grad(net, x, mode); };
}

void ClfLossConfig::validate() const {
    for (double l : lambda) {
        if (!(l >= 0.0)) throw ConfigError("clf loss weights must be nonnegative");
    }
    if (!(k1 >= 0.0 && k1 < k2)) throw ConfigError("clf bowl slopes need 0 <= k1 < k2");
    if (!(eps >= 0.0)) throw ConfigError("clf eps must be nonnegative");
    if (output_dim < 1) throw ConfigError("clf output_dim must be >= 1");
    if (output_mode == ClfOutputMode::direct && output_dim != 1) {
        throw ConfigError("direct clf output mode needs output_dim 1");
    }
}

ClfLossTerms clf_losses(std::span<const Vec2> x, std::span<const double> v,
                        std::span<const double> lfv, std::span<const double> lgv,
                        double v_origin, const ClfLossConfig& cfg, ClfLossGrad* grad) {
    cfg.validate();
    const std::size_t n = x.size();
    if (v.size() != n || lfv.size() != n || lgv.size() != n) {
        throw ConfigError("clf losses: per-sample inputs have different lengths");
    }
    if (n == 0) throw DataError("clf losses: empty batch");
    const double inv_n = 1.0 / static_cast<double>(n);
    const auto& w = cfg.lambda;

    if (grad) {
        grad->v.assign(n, 0.0);
        grad->lfv.assign(n, 0.0);
        grad->lgv.assign(n, 0.0);
    }

    ClfLossTerms t;
    t.origin = v_origin * v_origin;
    for (std::size_t i = 0; i < n; ++i) {
        const double norm = std::hypot(x[i][0], x[i][1]);
        const double lower = cfg.k1 * norm - v[i];
        const double upper = v[i] - cfg.k2 * norm;
        double dv = 0.0;
        if (lower > 0.0) {
            t.bowl += lower;
            dv -= w[3];
        }
        if (upper > 0.0) {
            t.bowl += upper;
            dv += w[3];
        }
        if (v[i] < 0.0) {
            t.pos += -v[i];
            dv -= w[4];
        }

        const bool mask = lgv[i] > cfg.tau;
        double dlf = 0.0;
        if (mask) {
            if (lfv[i] < 0.0) {
                t.f += -lfv[i];
                dlf = -w[1];
            }
        } else if (lfv[i] > 0.0) {
            t.f += lfv[i];
            dlf = w[1];
        }

        double dlg = 0.0;
        if (!mask) {
            const double shifted = lgv[i] + cfg.eps;
            const double gap = cfg.tau - std::abs(shifted);
            if (gap > 0.0) {
                t.g += gap;
                dlg = shifted > 0.0 ? -w[2] : (shifted < 0.0 ? w[2] : 0.0);
            }
        }
        if (grad) {
            grad->v[i] = dv * inv_n;
            grad->lfv[i] = dlf * inv_n;
            grad->lgv[i] = dlg * inv_n;
        }
    }
    t.bowl *= inv_n;
    t.f *= inv_n;
    t.g *= inv_n;
    t.pos *= inv_n;
    t.total = w[0] * t.origin + w[1] * t.f + w[2] * t.g + w[3] * t.bowl + w[4] * t.pos;
    if (grad) grad->v_origin = 2.0 * w[0] * v_origin;
    return t;
}

ClfLossTerms clf_evaluate(const AdaptKanNet& net, const Matrix& x, const ClfLossConfig& cfg) {
    const LieBatch lie = lie_derivatives(net, x, cfg.output_mode);
    const Matrix y0 = net.predict(Matrix::Zero(1, 2));
    const std::vector<Vec2> pts = rows_as_points(x);
    return clf_losses(pts, lie.v, lie.lfv, lie.lgv, origin_value(y0, cfg.output_mode), cfg);
}

namespace {

// Loss and parameter gradient from a cached tangent forward pass over `x`.
ClfLossTerms loss_and_grad(const AdaptKanNet& net, const Matrix& x, const Matrix& y,
                           const ForwardCache& cache, const ClfLossConfig& cfg, NetGrad& grad) {
    const bool squared = cfg.output_mode == ClfOutputMode::squared_norm;
    const Matrix& uf = cache.output_tangent[0];
    const Matrix& ug = cache.output_tangent[1];
    const LieBatch lie = combine_lie(y, uf, ug, cfg.output_mode);

    ForwardCache cache0;
    const Matrix y0 = net.predict(Matrix::Zero(1, 2), &cache0);
    const std::vector<Vec2> pts = rows_as_points(x);
    ClfLossGrad lg;
    const ClfLossTerms terms = clf_losses(pts, lie.v, lie.lfv, lie.lgv,
                                          origin_value(y0, cfg.output_mode), cfg, &lg);

    Matrix gy = Matrix::Zero(y.rows(), y.cols());
    Matrix guf = Matrix::Zero(y.rows(), y.cols());
    Matrix gug = Matrix::Zero(y.rows(), y.cols());
    for (Eigen::Index b = 0; b < y.rows(); ++b) {
        const auto i = static_cast<std::size_t>(b);
        if (squared) {
            gy.row(b) = lg.v[i] * y.row(b) + lg.lfv[i] * uf.row(b) + lg.lgv[i] * ug.row(b);
            guf.row(b) = lg.lfv[i] * y.row(b);
            gug.row(b) = lg.lgv[i] * y.row(b);
        } else {
            gy(b, 0) = lg.v[i];
            guf(b, 0) = lg.lfv[i];
            gug(b, 0) = lg.lgv[i];
        }
    }
    const std::array<Matrix, 2> gtan{std::move(guf), std::move(gug)};
    grad = net.backward(cache, gy, gtan);
    const Matrix gy0 = squared ? Matrix(lg.v_origin * y0) : Matrix::Constant(1, 1, lg.v_origin);
    add_into(grad, net.backward(cache0, gy0));
    return terms;
}

}  // namespace

ClfLossTerms clf_loss_grad(const AdaptKanNet& net, const Matrix& x, const ClfLossConfig& cfg,
                           NetGrad& grad) {
    cfg.validate();
    check_clf_net(net, cfg.output_mode);
    ForwardCache cache;
    const Matrix y = net.predict(x, &cache, lie_tangents(x));
    return loss_and_grad(net, x, y, cache, cfg, grad);
}

std::vector<ClfEpochRecord> train_clf(AdaptKanNet& net, const Matrix& train_x, const Matrix& val_x,
                                      const ClfTrainPlan& plan, const ClfLossConfig& cfg,
                                      const Poisoner& poison) {
    cfg.validate();
    check_clf_net(net, cfg.output_mode);
    if (net.output_width() != cfg.output_dim) {
        throw ConfigError("network outputs " + std::to_string(net.output_width()) +
                          " values but clf output_dim is " + std::to_string(cfg.output_dim));
    }
    if (train_x.cols() != 2 || val_x.cols() != 2) throw DataError("clf points must have 2 columns");
    if (plan.epochs == 0) throw ConfigError("clf plan needs at least one epoch");

    BatchSampler sampler(static_cast<std::size_t>(train_x.rows()), plan.batch_size, plan.seed);
    const std::size_t per_epoch = sampler.batches_per_epoch();
    const std::size_t total_steps = plan.epochs * per_epoch;
    AdamState state;
    AdamHyper hyper;
    hyper.kind = plan.optimizer;
    hyper.weight_decay = plan.weight_decay;

    std::vector<ClfEpochRecord> history;
    std::size_t step = 0;
    for (std::size_t e = 0; e < plan.epochs; ++e) {
        ClfEpochRecord rec;
        rec.epoch = e;
        rec.poisoned = poison.scale_for(e).has_value();
        const std::size_t events_before = net.adapt_stats().events;
        double loss_sum = 0.0;
        try {
            for (std::size_t k = 0; k < per_epoch; ++k, ++step) {
                const std::span<const std::size_t> rows = sampler.next();
                Matrix xb = gather_rows(train_x, rows);
                poison.apply(sampler.epoch(), sampler.batch_in_epoch(), xb);

                const std::array<Matrix, 2> tangents = lie_tangents(xb);
                ForwardOptions options;
                options.record = plan.record;
                options.manual_adapt = plan.manual_interval > 0 && step % plan.manual_interval == 0;
                ForwardCache cache;
                const Matrix y = net.forward(xb, options, &cache, tangents);
                NetGrad grad;
                const ClfLossTerms terms = loss_and_grad(net, xb, y, cache, cfg, grad);
                if (!std::isfinite(terms.total)) throw NumericalError("non-finite clf loss");
                loss_sum += terms.total;

                hyper.lr = lr_at(plan.lr, step, total_steps, plan.lr_decay);
                adam_step(net.parameter_blocks(), gradient_blocks(net, grad), state, hyper);
            }
            rec.train_loss = loss_sum / static_cast<double>(per_epoch);
            rec.val_loss = clf_evaluate(net, val_x, cfg).total;
            if (!std::isfinite(rec.val_loss)) rec.fail = true;
        } catch (const NumericalError&) {
            rec.fail = true;
            rec.train_loss = rec.val_loss = std::numeric_limits<double>::quiet_NaN();
        }
        rec.adapt_events = net.adapt_stats().events - events_before;
        history.push_back(rec);
        if (rec.fail) {
            // remaining batches of the epoch were skipped; realign the step count
            step = (e + 1) * per_epoch;
            while (sampler.epoch() == e && sampler.batch_in_epoch() + 1 < per_epoch) sampler.next();
        }
    }
    return history;
}

}  // namespace adaptkan
