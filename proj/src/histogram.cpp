#include "adaptkan/histogram.hpp"

#include "adaptkan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace adaptkan {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ConfigError("EMA rate alpha must lie in (0, 1], got " + std::to_string(alpha));
    }
}

void check_finite(std::span<const double> batch) {
    for (double x : batch) {
        if (!std::isfinite(x)) throw DataError("histogram input contains a non-finite value");
    }
}

// Old histogram treated as a piecewise-linear density through the bin centres.
double sample_old(std::span<const double> hist, const GridDomain& dom, double q) {
    if (q < dom.a() || q > dom.b()) return 0.0;
    const double u = (q - dom.a()) / dom.width() - 0.5;
    const auto n = hist.size();
    if (u <= 0.0) return hist.front();
    if (u >= static_cast<double>(n - 1)) return hist.back();
    const auto lo = std::min(static_cast<std::size_t>(std::floor(u)), n - 2);
    const double frac = u - static_cast<double>(lo);
    return (1.0 - frac) * hist[lo] + frac * hist[lo + 1];
}

}  // namespace

std::vector<double> create_histogram(std::span<const double> samples, const GridDomain& dom) {
    std::vector<double> counts(static_cast<std::size_t>(dom.omega()), 0.0);
    for (double x : samples) {
        if (!std::isfinite(x) || !dom.contains(x)) {
            throw DataError("create_histogram: sample " + std::to_string(x) +
                            " lies outside the domain");
        }
        counts[static_cast<std::size_t>(bin_index(x, dom))] += 1.0;
    }
    return counts;
}

FeatureHistogram::FeatureHistogram(GridDomain domain, double alpha)
    : domain_(domain),
      alpha_(alpha),
      hist_(static_cast<std::size_t>(domain.omega()), 0.0),
      ood_a_(domain.a()),
      ood_b_(domain.b())
{
    check_alpha(alpha);
}

FeatureHistogram FeatureHistogram::from_state(GridDomain domain, double alpha,
                                              std::vector<double> hist,
                                              std::array<double, 2> ood_hist,
                                              double ood_a, double ood_b) {
    FeatureHistogram h(domain, alpha);
    h.hist_ = std::move(hist);
    h.ood_hist_ = ood_hist;
    h.ood_a_ = ood_a;
    h.ood_b_ = ood_b;
    h.check_invariants();
    return h;
}

void FeatureHistogram::check_invariants() const {
    if (hist_.size() != static_cast<std::size_t>(domain_.omega())) {
        throw ConfigError("histogram has " + std::to_string(hist_.size()) +
                          " bins but the grid has " + std::to_string(domain_.omega()));
    }
    auto bad = [](double v) { return !std::isfinite(v) || v < 0.0; };
    if (std::any_of(hist_.begin(), hist_.end(), bad) || bad(ood_hist_[0]) || bad(ood_hist_[1])) {
        throw ConfigError("histogram counts must be finite and nonnegative");
    }
    if (!(ood_a_ <= domain_.a()) || !(ood_b_ >= domain_.b())) {
        throw ConfigError("histogram extremes must satisfy ood_a <= a and ood_b >= b");
    }
}

void FeatureHistogram::set_alpha(double alpha) {
    check_alpha(alpha);
    alpha_ = alpha;
}

double FeatureHistogram::in_domain_total() const noexcept {
    return std::accumulate(hist_.begin(), hist_.end(), 0.0);
}

double FeatureHistogram::total() const noexcept {
    return in_domain_total() + ood_hist_[0] + ood_hist_[1];
}

void FeatureHistogram::update(std::span<const double> batch) {
    check_finite(batch);
    std::vector<double> batch_hist(hist_.size(), 0.0);
    double below = 0.0;
    double above = 0.0;
    for (double x : batch) {
        if (x < domain_.a()) {
            below += 1.0;
            ood_a_ = std::min(ood_a_, x);
        } else if (x > domain_.b()) {
            above += 1.0;
            ood_b_ = std::max(ood_b_, x);
        } else {
            batch_hist[static_cast<std::size_t>(bin_index(x, domain_))] += 1.0;
        }
    }
    const double keep = 1.0 - alpha_;
    for (std::size_t i = 0; i < hist_.size(); ++i) {
        hist_[i] = keep * hist_[i] + alpha_ * batch_hist[i];
    }
    ood_hist_[0] = keep * ood_hist_[0] + alpha_ * below;
    ood_hist_[1] = keep * ood_hist_[1] + alpha_ * above;
}

void FeatureHistogram::reset_from(std::span<const double> batch) {
    hist_ = create_histogram(batch, domain_);
    ood_hist_ = {0.0, 0.0};
    ood_a_ = domain_.a();
    ood_b_ = domain_.b();
}

FeatureHistogram refit_histogram(const FeatureHistogram& h, const GridDomain& new_dom, Resize kind) {
    const GridDomain& old = h.domain();
    const std::span<const double> old_hist = h.counts();
    const double before = h.total();

    std::vector<double> hist(static_cast<std::size_t>(new_dom.omega()), 0.0);
    if (old == new_dom) {
        hist.assign(old_hist.begin(), old_hist.end());
    } else {
        const double ratio = new_dom.width() / old.width();
        for (int i = 0; i < new_dom.omega(); ++i) {
            const double centre = new_dom.a() + (i + 0.5) * new_dom.width();
            hist[static_cast<std::size_t>(i)] = ratio * sample_old(old_hist, old, centre);
        }
    }

    std::array<double, 2> ood = h.ood_counts();
    double ood_a = h.ood_a();
    double ood_b = h.ood_b();

    if (kind == Resize::shrink) {
        for (int i = 0; i < old.omega(); ++i) {
            const double lo = old.edge(i);
            const double hi = old.edge(i + 1);
            const double v = old_hist[static_cast<std::size_t>(i)];
            ood[0] += v * std::clamp((new_dom.a() - lo) / old.width(), 0.0, 1.0);
            ood[1] += v * std::clamp((hi - new_dom.b()) / old.width(), 0.0, 1.0);
        }
        if (new_dom.a() != old.a()) ood_a = new_dom.a();
        if (new_dom.b() != old.b()) ood_b = new_dom.b();
    } else if (kind == Resize::stretch) {
        const auto deposit = [&](double where, double mass) {
            const double z = std::clamp(where, new_dom.a(), new_dom.b());
            hist[static_cast<std::size_t>(bin_index(z, new_dom))] += mass;
        };
        deposit(h.ood_a(), ood[0]);
        deposit(h.ood_b(), ood[1]);
        ood = {0.0, 0.0};
        ood_a = new_dom.a();
        ood_b = new_dom.b();
    }
    ood_a = std::min(ood_a, new_dom.a());
    ood_b = std::max(ood_b, new_dom.b());

    const double after = std::accumulate(hist.begin(), hist.end(), 0.0) + ood[0] + ood[1];
    if (after > 0.0 && before > 0.0 && after != before) {
        const double scale = before / after;
        for (double& v : hist) v *= scale;
        ood[0] *= scale;
        ood[1] *= scale;
    }
    return FeatureHistogram::from_state(new_dom, h.alpha(), std::move(hist), ood, ood_a, ood_b);
}

double marginal_prob(const FeatureHistogram& h, double x) {
    const GridDomain& dom = h.domain();
    if (!dom.contains(x)) return kProbFloor;
    const double total = h.in_domain_total();
    if (!(total > 0.0)) return kProbFloor;
    const double p = h.counts()[static_cast<std::size_t>(bin_index(x, dom))] / total;
    return std::max(p, kProbFloor);
}

}  // namespace adaptkan
