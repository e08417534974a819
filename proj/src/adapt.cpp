#include "adaptkan/adapt.hpp"

#include "adaptkan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace adaptkan {

void AdaptConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ConfigError("adapt: alpha must lie in (0, 1], got " + std::to_string(alpha));
    }
    if (prune_patience < 1) {
        throw ConfigError("adapt: prune_patience must be >= 1");
    }
    if (outlier_count < 1) {
        throw ConfigError("adapt: outlier_count must be >= 1");
    }
}

std::string_view to_string(StretchMode mode) noexcept {
    switch (mode) {
    case StretchMode::max: return "max";
    case StretchMode::half_max: return "half_max";
    case StretchMode::mean: return "mean";
    case StretchMode::edge: return "edge";
    }
    return "?";
}

std::string_view to_string(ShrinkRule rule) noexcept {
    return rule == ShrinkRule::fixed ? "fixed" : "relative";
}

std::string_view to_string(RefitMode mode) noexcept {
    return mode == RefitMode::exact_lsq ? "exact_lsq" : "greville";
}

StretchMode parse_stretch_mode(std::string_view text) {
    for (auto m : {StretchMode::max, StretchMode::half_max, StretchMode::mean, StretchMode::edge}) {
        if (to_string(m) == text) return m;
    }
    throw ConfigError("unknown stretch mode '" + std::string(text) + "'");
}

ShrinkRule parse_shrink_rule(std::string_view text) {
    if (text == "fixed") return ShrinkRule::fixed;
    if (text == "relative") return ShrinkRule::relative;
    throw ConfigError("unknown shrink rule '" + std::string(text) + "'");
}

RefitMode parse_refit_mode(std::string_view text) {
    if (text == "exact_lsq") return RefitMode::exact_lsq;
    if (text == "greville") return RefitMode::greville;
    throw ConfigError("unknown refit mode '" + std::string(text) + "'");
}

double shrink_threshold(const AdaptConfig& cfg, std::span<const double> hist) {
    if (cfg.shrink_rule == ShrinkRule::relative) {
        const double peak = hist.empty() ? 0.0 : *std::max_element(hist.begin(), hist.end());
        return peak * cfg.alpha;
    }
    const double keep = 1.0 - cfg.alpha;
    double tau = cfg.alpha;
    for (int i = 0; i < cfg.prune_patience; ++i) tau *= keep;
    return cfg.outlier_count * tau;
}

Decision decide(const FeatureHistogram& h, const AdaptConfig& cfg) {
    const std::span<const double> hist = h.counts();
    const auto& ood = h.ood_counts();
    const GridDomain& dom = h.domain();
    const double tau = shrink_threshold(cfg, hist);
    const int n = dom.omega();

    Decision out;
    const bool left_stale = ood[0] <= tau && hist.front() <= tau;
    const bool right_stale = ood[1] <= tau && hist.back() <= tau;
    if (left_stale || right_stale) {
        int first = -1;
        int last = -1;
        for (int i = 0; i < n; ++i) {
            if (hist[static_cast<std::size_t>(i)] > tau) {
                if (first < 0) first = i;
                last = i;
            }
        }
        if (first < 0) {
            out.diagnostic = "shrink skipped: no bin exceeds the threshold";
        } else {
            out.kind = DecisionKind::shrink;
            out.a = dom.edge(first);
            out.b = last + 1 == n ? dom.b() : dom.edge(last + 1);
        }
    }

    const double peak = *std::max_element(hist.begin(), hist.end());
    double left_limit = 0.0;
    double right_limit = 0.0;
    switch (cfg.stretch_mode) {
    case StretchMode::max:
        left_limit = right_limit = peak;
        break;
    case StretchMode::half_max:
        left_limit = right_limit = 0.5 * peak;
        break;
    case StretchMode::mean:
        left_limit = right_limit = std::accumulate(hist.begin(), hist.end(), 0.0) / n;
        break;
    case StretchMode::edge:
        left_limit = hist.front();
        right_limit = hist.back();
        break;
    }
    if (ood[0] > left_limit || ood[1] > right_limit) {
        if (h.ood_a() == dom.a() && h.ood_b() == dom.b()) {
            out = Decision{};
            out.diagnostic = "stretch skipped: no extreme recorded outside the domain";
        } else {
            out = Decision{DecisionKind::stretch, h.ood_a(), h.ood_b(), {}};
        }
    }
    return out;
}

namespace {

RefitResult refit(const FeatureState& state, const GridDomain& new_dom, RefitMode mode) {
    if (mode == RefitMode::greville) {
        return refit_greville(state.coef, state.domain(), new_dom);
    }
    return refit_least_squares(state.coef, state.domain(), new_dom);
}

}  // namespace

AdaptOutcome apply_adapt(FeatureState& state, const Decision& decision, const AdaptConfig& cfg) {
    AdaptOutcome out;
    out.diagnostic = decision.diagnostic;
    if (decision.kind == DecisionKind::none) return out;
    if (!(decision.a < decision.b) || !std::isfinite(decision.a) || !std::isfinite(decision.b)) {
        out.diagnostic = "resize skipped: degenerate target domain";
        return out;
    }

    const GridDomain& old = state.domain();
    const GridDomain target(decision.a, decision.b, old.omega(), old.degree());
    if (target == old) return out;

    RefitResult fit = refit(state, target, cfg.refit_mode);
    const Resize kind = decision.kind == DecisionKind::stretch ? Resize::stretch : Resize::shrink;
    state.histogram = refit_histogram(state.histogram, target, kind);
    state.coef = std::move(fit.weights);

    out.changed = true;
    out.residual = fit.max_residual;
    out.rank_deficient = fit.rank_deficient;
    return out;
}

AdaptOutcome manual_adapt(FeatureState& state, std::span<const double> batch, const AdaptConfig& cfg) {
    AdaptOutcome out;
    if (batch.empty()) {
        out.diagnostic = "manual adapt skipped: empty batch";
        return out;
    }
    for (double x : batch) {
        if (!std::isfinite(x)) throw DataError("manual adapt: batch contains a non-finite value");
    }
    const auto [lo_it, hi_it] = std::minmax_element(batch.begin(), batch.end());
    double lo = *lo_it;
    double hi = *hi_it;
    if (!(lo < hi)) {
        lo -= 1e-6;
        hi += 1e-6;
        if (!(lo < hi)) {
            lo = std::nextafter(lo, -INFINITY);
            hi = std::nextafter(hi, INFINITY);
        }
        out.diagnostic = "manual adapt: degenerate batch widened by 1e-6";
    }

    const GridDomain& old = state.domain();
    const GridDomain target(lo, hi, old.omega(), old.degree());
    if (target != old) {
        RefitResult fit = refit(state, target, cfg.refit_mode);
        state.coef = std::move(fit.weights);
        out.residual = fit.max_residual;
        out.rank_deficient = fit.rank_deficient;
        out.changed = true;
    }
    FeatureHistogram rebuilt(target, state.histogram.alpha());
    rebuilt.reset_from(batch);
    state.histogram = std::move(rebuilt);
    return out;
}

}  // namespace adaptkan
