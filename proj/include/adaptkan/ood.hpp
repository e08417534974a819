#pragma once

#include "adaptkan/histogram.hpp"
#include "adaptkan/network.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace adaptkan {

inline constexpr int kOodBinsHist = 200;
inline constexpr int kOodBinsMsp = 50;
inline constexpr double kOodMspLambda = 0.1;

struct Bounds {
    double lo;
    double hi;
};

/// Per-feature histograms of training features for post-hoc OOD scoring.
/// Higher scores look more in-distribution.
class OodScorer {
public:
    /// One-pass histograms over `features` (N x N_F). Without `bounds` each
    /// feature spans its own [min, max]; a constant feature is widened by
    /// 1e-6 on both sides. Samples outside supplied bounds land in the
    /// out-of-domain tallies.
    static OodScorer fit(const Matrix& features, int bins,
                         const std::optional<std::vector<Bounds>>& bounds = std::nullopt);

    static OodScorer from_histograms(std::vector<FeatureHistogram> histograms);

    std::size_t num_features() const noexcept { return hists_.size(); }
    const FeatureHistogram& histogram(std::size_t j) const { return hists_.at(j); }
    /// Features whose fitted range was degenerate and had to be widened.
    const std::vector<std::size_t>& widened() const noexcept { return widened_; }

    /// Mean over features of log P_j(x_j).
    double score_hist(std::span<const double> x) const;
    /// score_hist + lambda * log(max softmax(logits)).
    double score_hist_msp(std::span<const double> x, std::span<const double> logits,
                          double lambda = kOodMspLambda) const;

    std::vector<double> score_all(const Matrix& features) const;

private:
    std::vector<FeatureHistogram> hists_;
    std::vector<std::size_t> widened_;
};

/// log of the largest softmax probability, computed stably.
double log_max_softmax(std::span<const double> logits);

/// P(random ID score > random OOD score), ties counted one half.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

}  // namespace adaptkan
