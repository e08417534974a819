#include "adaptkan/optim.hpp"

#include "adaptkan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace adaptkan {

std::string_view to_string(OptimizerKind kind) noexcept {
    return kind == OptimizerKind::adam ? "adam" : "adamw";
}

OptimizerKind parse_optimizer(std::string_view text) {
    if (text == "adam") return OptimizerKind::adam;
    if (text == "adamw") return OptimizerKind::adamw;
    throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads,
               AdamState& state, const AdamHyper& hyper) {
    if (params.size() != grads.size()) {
        throw ConfigError("adam: parameter and gradient block counts differ");
    }
    if (state.m.empty() && state.step == 0) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t k = 0; k < params.size(); ++k) {
            state.m[k].assign(params[k].size(), 0.0);
            state.v[k].assign(params[k].size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw ConfigError("adam: optimizer state does not match the parameter blocks");
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    const bool decoupled = hyper.kind == OptimizerKind::adamw;

    for (std::size_t k = 0; k < params.size(); ++k) {
        std::span<double> p = params[k];
        std::span<const double> g = grads[k];
        if (p.size() != g.size() || state.m[k].size() != p.size()) {
            throw ConfigError("adam: block " + std::to_string(k) + " changed size");
        }
        std::vector<double>& m = state.m[k];
        std::vector<double>& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            double gi = g[i];
            if (decoupled) {
                p[i] -= hyper.lr * hyper.weight_decay * p[i];
            } else if (hyper.weight_decay != 0.0) {
                gi += hyper.weight_decay * p[i];
            }
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
        }
    }
}

double lr_at(double lr0, std::size_t t, std::size_t steps, bool decay) {
    if (!decay || steps == 0) return lr0;
    const double frac = std::min(1.0, static_cast<double>(t) / static_cast<double>(steps));
    return lr0 * (1.0 - 0.9 * frac * frac);
}

void TrainPlan::validate() const {
    if (rounds.empty()) throw ConfigError("train plan has no rounds");
    int prev = 0;
    for (std::size_t r = 0; r < rounds.size(); ++r) {
        const Round& round = rounds[r];
        if (round.steps == 0) {
            throw ConfigError("round " + std::to_string(r) + " has zero steps");
        }
        if (!(round.lr >= 0.0) || !std::isfinite(round.lr)) {
            throw ConfigError("round " + std::to_string(r) + " has an invalid learning rate");
        }
        if (round.omega < 1) throw ConfigError("round " + std::to_string(r) + " has omega < 1");
        if (round.omega < prev) throw ConfigError("round omegas must be non-decreasing");
        prev = round.omega;
    }
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
    if (!(sparsity_lambda >= 0.0)) throw ConfigError("sparsity lambda must be nonnegative");
}

BatchSampler::BatchSampler(std::size_t count, std::size_t batch_size, std::uint64_t seed)
    : count_(count),
      batch_size_(batch_size == 0 || batch_size > count ? count : batch_size),
      rng_(seed),
      order_(count)
{
    if (count == 0) throw DataError("cannot sample batches from an empty dataset");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::size_t BatchSampler::batches_per_epoch() const noexcept {
    return (count_ + batch_size_ - 1) / batch_size_;
}

std::span<const std::size_t> BatchSampler::next() {
    const bool full = batch_size_ == count_;
    if (!started_) {
        started_ = true;
        if (!full) std::shuffle(order_.begin(), order_.end(), rng_);
    } else if (cursor_ >= count_) {
        cursor_ = 0;
        ++epoch_;
        batch_ = 0;
        if (!full) std::shuffle(order_.begin(), order_.end(), rng_);
    } else {
        ++batch_;
    }
    const std::size_t take = std::min(batch_size_, count_ - cursor_);
    std::span<const std::size_t> out(order_.data() + cursor_, take);
    cursor_ += take;
    return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    }
    return out;
}

namespace {

bool all_finite(const NetGrad& grad) {
    for (const LayerGrad& lg : grad.layers) {
        for (const auto& c : lg.coef) {
            if (!std::all_of(c.begin(), c.end(), [](double v) { return std::isfinite(v); })) return false;
        }
        for (double v : lg.base_scale) if (!std::isfinite(v)) return false;
        for (double v : lg.spline_scale) if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace

std::vector<RoundRecord> train(AdaptKanNet& net, const Dataset& train_set,
                               const Dataset& test_set, const TrainPlan& plan,
                               const TrainHooks& hooks) {
    plan.validate();
    if (train_set.x.rows() != train_set.y.rows() || test_set.x.rows() != test_set.y.rows()) {
        throw DataError("dataset inputs and targets have different row counts");
    }
    if (static_cast<std::size_t>(train_set.y.cols()) != net.output_width()) {
        throw ConfigError("targets have " + std::to_string(train_set.y.cols()) +
                          " columns but the network outputs " + std::to_string(net.output_width()));
    }

    BatchSampler sampler(train_set.size(), plan.batch_size, plan.seed);
    std::vector<RoundRecord> history;
    std::size_t global = 0;

    for (std::size_t r = 0; r < plan.rounds.size(); ++r) {
        const Round& round = plan.rounds[r];
        RoundRecord rec;
        rec.round = r;
        rec.omega = round.omega;
        rec.lr = round.lr;

        if (net.num_layers() > 0 && net.layer(0).feature(0).domain().omega() < round.omega) {
            net.refine_all(round.omega);
        }
        const std::size_t events_before = net.adapt_stats().events;
        AdamState state;
        AdamHyper hyper;
        hyper.kind = plan.optimizer;
        hyper.weight_decay = plan.weight_decay;

        try {
            for (std::size_t t = 0; t < round.steps; ++t, ++global) {
                const std::span<const std::size_t> rows = sampler.next();
                Matrix xb = gather_rows(train_set.x, rows);
                const Matrix yb = gather_rows(train_set.y, rows);
                hooks.poison.apply(sampler.epoch(), sampler.batch_in_epoch(), xb);

                ForwardOptions options;
                options.record = plan.record;
                options.manual_adapt = plan.manual_interval > 0 && global % plan.manual_interval == 0;
                ForwardCache cache;
                const Matrix out = net.forward(xb, options, &cache);

                const Matrix diff = out - yb;
                const double count = static_cast<double>(diff.size());
                const double loss = diff.squaredNorm() / count +
                                    net.sparsity_penalty(cache, plan.sparsity_lambda);
                if (!std::isfinite(loss)) throw NumericalError("non-finite training loss");

                const Matrix grad_out = (2.0 / count) * diff;
                const NetGrad grad = net.backward(cache, grad_out, {}, plan.sparsity_lambda);
                if (!all_finite(grad)) throw NumericalError("non-finite gradient");

                hyper.lr = lr_at(round.lr, t, round.steps, plan.lr_decay);
                adam_step(net.parameter_blocks(), gradient_blocks(net, grad), state, hyper);
                if (hooks.on_step) hooks.on_step(global, loss);
            }
        } catch (const NumericalError&) {
            rec.fail = true;
        }

        try {
            rec.train_rmse = rmse(net.predict(train_set.x), train_set.y);
            rec.test_rmse = test_set.size() > 0 ? rmse(net.predict(test_set.x), test_set.y)
                                                : std::numeric_limits<double>::quiet_NaN();
        } catch (const NumericalError&) {
            rec.fail = true;
            rec.train_rmse = rec.test_rmse = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(rec.train_rmse)) rec.fail = true;
        rec.adapt_events = net.adapt_stats().events - events_before;
        history.push_back(rec);
    }
    return history;
}

double best_test_rmse(std::span<const RoundRecord> history) {
    double best = std::numeric_limits<double>::infinity();
    for (const RoundRecord& rec : history) {
        if (!rec.fail && std::isfinite(rec.test_rmse)) best = std::min(best, rec.test_rmse);
    }
    return best;
}

}  // namespace adaptkan
