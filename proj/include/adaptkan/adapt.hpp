#pragma once

#include "adaptkan/histogram.hpp"
#include "adaptkan/spline.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace adaptkan {

/// When out-of-domain tallies are large enough to widen the domain.
enum class StretchMode {
    max,       ///< tally exceeds the largest bin
    half_max,  ///< tally exceeds half the largest bin
    mean,      ///< tally exceeds the mean bin
    edge,      ///< tally exceeds the bin on its own side
};

enum class ShrinkRule {
    fixed,     ///< N (1 - alpha)^p alpha
    relative,  ///< max(hist) alpha
};

enum class RefitMode { exact_lsq, greville };

struct AdaptConfig {
    double alpha = 1e-3;
    int prune_patience = 1;
    StretchMode stretch_mode = StretchMode::half_max;
    ShrinkRule shrink_rule = ShrinkRule::fixed;
    RefitMode refit_mode = RefitMode::exact_lsq;
    int outlier_count = 1;

    /// Throws ConfigError on alpha outside (0, 1], patience or count < 1.
    void validate() const;
};

std::string_view to_string(StretchMode mode) noexcept;
std::string_view to_string(ShrinkRule rule) noexcept;
std::string_view to_string(RefitMode mode) noexcept;
StretchMode parse_stretch_mode(std::string_view text);
ShrinkRule parse_shrink_rule(std::string_view text);
RefitMode parse_refit_mode(std::string_view text);

/// Edge-bin staleness threshold. The fixed rule is computed as alpha scaled
/// by (1 - alpha) p times in sequence, i.e. bit-identical to a single count
/// decayed by p clean EMA updates, then multiplied by N.
double shrink_threshold(const AdaptConfig& cfg, std::span<const double> hist);

enum class DecisionKind { none, shrink, stretch };

struct Decision {
    DecisionKind kind = DecisionKind::none;
    double a = 0.0;
    double b = 0.0;
    /// Set when a candidate resize was rejected.
    std::string diagnostic;
};

/// Domain resize decision for one histogram.
///
/// Shrink when an edge bin and its out-of-domain tally are both at or below
/// the threshold; the new bounds are the outer edges of the first and last
/// bins above it. A stretch to [ood_a, ood_b] is checked afterwards and wins.
Decision decide(const FeatureHistogram& h, const AdaptConfig& cfg);

/// Everything attached to one input feature of a layer: the domain lives in
/// the histogram, `coef` holds one row of domain().num_weights() entries per
/// layer output.
struct FeatureState {
    FeatureHistogram histogram;
    std::vector<double> coef;

    const GridDomain& domain() const noexcept { return histogram.domain(); }
    std::size_t rows() const noexcept { return coef.size() / domain().num_weights(); }
};

struct AdaptOutcome {
    bool changed = false;
    double residual = 0.0;
    bool rank_deficient = false;
    std::string diagnostic;
};

/// Moves the feature to the decided domain: coefficients refit by
/// cfg.refit_mode, histogram refit with the matching out-of-domain
/// bookkeeping. The interval count never changes.
AdaptOutcome apply_adapt(FeatureState& state, const Decision& decision, const AdaptConfig& cfg);

/// Baseline: set the domain to [min(batch), max(batch)], refit the
/// coefficients and rebuild the histogram from the batch alone. A constant
/// batch is widened by 1e-6 on both sides.
AdaptOutcome manual_adapt(FeatureState& state, std::span<const double> batch, const AdaptConfig& cfg);

}  // namespace adaptkan
