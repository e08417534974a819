#pragma once

#include "adaptkan/spline.hpp"

#include <array>
#include <span>
#include <vector>

namespace adaptkan {

/// Floor applied to normalised bin probabilities so log scores stay finite.
inline constexpr double kProbFloor = 1e-12;

/// Uniform-width bin counts of `samples` over the domain. Every sample must
/// lie in [a, b]; a sample equal to b lands in the last bin.
std::vector<double> create_histogram(std::span<const double> samples, const GridDomain& dom);

/// How the domain changed, which decides the out-of-domain bookkeeping.
enum class Resize {
    none,     ///< plain re-binning (e.g. grid refinement)
    stretch,  ///< out-of-domain tallies are absorbed into the new bins
    shrink,   ///< in-domain mass cut off by the new bounds moves out-of-domain
};

/// Exponential-moving-average histogram of one input feature.
///
/// Besides the in-domain bins it keeps two out-of-domain tallies (below a,
/// above b) and the most extreme values ever seen on either side. The
/// extremes start at a and b.
class FeatureHistogram {
public:
    FeatureHistogram(GridDomain domain, double alpha);

    /// Rebuilds a histogram from serialised state, validating invariants.
    static FeatureHistogram from_state(GridDomain domain, double alpha,
                                       std::vector<double> hist,
                                       std::array<double, 2> ood_hist,
                                       double ood_a, double ood_b);

    const GridDomain& domain() const noexcept { return domain_; }
    std::span<const double> counts() const noexcept { return hist_; }
    const std::array<double, 2>& ood_counts() const noexcept { return ood_hist_; }
    double ood_a() const noexcept { return ood_a_; }
    double ood_b() const noexcept { return ood_b_; }
    double alpha() const noexcept { return alpha_; }
    void set_alpha(double alpha);

    /// Sum of in-domain bins.
    double in_domain_total() const noexcept;
    /// In-domain bins plus both out-of-domain tallies.
    double total() const noexcept;

    /// hist <- (1 - alpha) hist + alpha batch_hist, same for the two
    /// out-of-domain tallies; extremes track the running min/max outside
    /// [a, b]. Throws DataError on non-finite input.
    void update(std::span<const double> batch);

    /// Replaces the state wholesale with counts built from one batch
    /// (out-of-domain tallies zeroed, extremes reset to the bounds).
    void reset_from(std::span<const double> batch);

private:
    void check_invariants() const;

    GridDomain domain_;
    double alpha_ = 1.0;
    std::vector<double> hist_;
    std::array<double, 2> ood_hist_{0.0, 0.0};
    double ood_a_ = 0.0;
    double ood_b_ = 1.0;
};

/// Re-bins a histogram onto `new_dom` (which may have a different bin count).
///
/// Bin values are linearly interpolated between old bin centres (constant
/// out to the old bounds, zero beyond them) at the new centres and scaled by
/// the bin width ratio. The total count (bins plus out-of-domain tallies)
/// is rescaled to its value before the refit. Extremes are reset to the
/// new bounds on the sides that moved after a stretch or shrink.
FeatureHistogram refit_histogram(const FeatureHistogram& h, const GridDomain& new_dom, Resize kind);

/// Normalised in-domain bin value at x, floored at kProbFloor. Out-of-domain
/// x and empty histograms give the floor.
double marginal_prob(const FeatureHistogram& h, double x);

}  // namespace adaptkan
