#include "adaptkan/ood.hpp"

#include "adaptkan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace adaptkan {

OodScorer OodScorer::fit(const Matrix& features, int bins,
                         const std::optional<std::vector<Bounds>>& bounds) {
    const auto rows = static_cast<std::size_t>(features.rows());
    const auto cols = static_cast<std::size_t>(features.cols());
    if (rows == 0 || cols == 0) throw DataError("ood fit: empty feature matrix");
    if (bins < 1) throw ConfigError("ood fit: bins must be >= 1");
    if (bounds && bounds->size() != cols) {
        throw ConfigError("ood fit: " + std::to_string(bounds->size()) + " bounds for " +
                          std::to_string(cols) + " features");
    }
    if (!features.allFinite()) throw DataError("ood fit: features contain non-finite values");

    OodScorer out;
    for (std::size_t j = 0; j < cols; ++j) {
        const auto col = features.col(static_cast<Eigen::Index>(j));
        const double lo_data = col.minCoeff();
        const double hi_data = col.maxCoeff();
        double lo = bounds ? (*bounds)[j].lo : lo_data;
        double hi = bounds ? (*bounds)[j].hi : hi_data;
        if (!(lo < hi)) {
            if (bounds && lo > hi) throw ConfigError("ood fit: bounds must satisfy lo <= hi");
            lo -= 1e-6;
            hi += 1e-6;
            out.widened_.push_back(j);
        }
        const GridDomain dom(lo, hi, bins);
        std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
        std::array<double, 2> ood{0.0, 0.0};
        for (std::size_t r = 0; r < rows; ++r) {
            const double x = col(static_cast<Eigen::Index>(r));
            if (x < lo) {
                ood[0] += 1.0;
            } else if (x > hi) {
                ood[1] += 1.0;
            } else {
                counts[static_cast<std::size_t>(bin_index(x, dom))] += 1.0;
            }
        }
        if (std::accumulate(counts.begin(), counts.end(), 0.0) <= 0.0) {
            throw DataError("ood fit: feature " + std::to_string(j) + " has no samples inside its bounds");
        }
        out.hists_.push_back(FeatureHistogram::from_state(dom, 1.0, std::move(counts), ood,
                                                          std::min(lo, lo_data),
                                                          std::max(hi, hi_data)));
    }
    return out;
}

OodScorer OodScorer::from_histograms(std::vector<FeatureHistogram> histograms) {
    if (histograms.empty()) throw ConfigError("ood scorer needs at least one feature");
    for (const FeatureHistogram& h : histograms) {
        if (!(h.in_domain_total() > 0.0)) throw DataError("ood scorer: empty histogram");
    }
    OodScorer out;
    out.hists_ = std::move(histograms);
    return out;
}

double OodScorer::score_hist(std::span<const double> x) const {
    if (x.size() != hists_.size()) {
        throw ConfigError("ood score: expected " + std::to_string(hists_.size()) +
                          " features, got " + std::to_string(x.size()));
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        sum += std::log(marginal_prob(hists_[j], x[j]));
    }
    return sum / static_cast<double>(x.size());
}

double OodScorer::score_hist_msp(std::span<const double> x, std::span<const double> logits,
                                 double lambda) const {
    if (!(lambda >= 0.0)) throw ConfigError("ood score: lambda must be nonnegative");
    const double base = score_hist(x);
    if (lambda == 0.0) return base;
    return base + lambda * log_max_softmax(logits);
}

std::vector<double> OodScorer::score_all(const Matrix& features) const {
    std::vector<double> out(static_cast<std::size_t>(features.rows()));
    std::vector<double> row(static_cast<std::size_t>(features.cols()));
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        for (Eigen::Index c = 0; c < features.cols(); ++c) row[static_cast<std::size_t>(c)] = features(r, c);
        out[static_cast<std::size_t>(r)] = score_hist(row);
    }
    return out;
}

double log_max_softmax(std::span<const double> logits) {
    if (logits.empty()) throw ConfigError("softmax of an empty logit vector");
    const double top = *std::max_element(logits.begin(), logits.end());
    if (std::isinf(top) && top > 0.0) return 0.0;
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - top);
    return -std::log(denom);
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
    if (id_scores.empty() || ood_scores.empty()) throw DataError("auroc needs both score sets");
    // Rank-sum form: sort the OOD scores once and count below/equal per ID score.
    std::vector<double> sorted(ood_scores.begin(), ood_scores.end());
    std::sort(sorted.begin(), sorted.end());
    double wins = 0.0;
    for (double s : id_scores) {
        const auto lo = std::lower_bound(sorted.begin(), sorted.end(), s);
        const auto hi = std::upper_bound(lo, sorted.end(), s);
        wins += static_cast<double>(lo - sorted.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return wins / (static_cast<double>(id_scores.size()) * static_cast<double>(sorted.size()));
}

}  // namespace adaptkan
