#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace adaptkan {

/// Spline degree supported by the non-recursive basis below.
inline constexpr int kSplineDegree = 3;

/// Uniform grid over [a, b] with `omega` intervals of width d = (b - a) / omega.
///
/// Every activation defined on the grid carries omega + degree coefficients.
class GridDomain {
public:
    /// Throws ConfigError unless a < b (both finite), omega >= 1 and degree == 3.
    GridDomain(double a, double b, int omega, int degree = kSplineDegree);

    double a() const noexcept { return a_; }
    double b() const noexcept { return b_; }
    int omega() const noexcept { return omega_; }
    int degree() const noexcept { return degree_; }
    double width() const noexcept { return width_; }
    std::size_t num_weights() const noexcept {
        return static_cast<std::size_t>(omega_ + degree_);
    }

    /// Left edge of interval i (i may equal omega for the right bound).
    double edge(int i) const noexcept { return a_ + i * width_; }

    bool contains(double z) const noexcept { return z >= a_ && z <= b_; }

    friend bool operator==(const GridDomain&, const GridDomain&) = default;

private:
    double a_;
    double b_;
    int omega_;
    int degree_;
    double width_;
};

using BasisMatrix = std::array<std::array<double, 4>, 4>;

/// Coefficient matrix of the cubic uniform B-spline. Row s weights the
/// coefficient at offset s of the active window; columns multiply
/// [theta^3, theta^2, theta, 1].
const BasisMatrix& basis_matrix() noexcept;

/// The k + 1 nonzero basis values (or their derivatives) at a point, starting
/// at coefficient index `offset`.
struct SplineBasis {
    std::size_t offset = 0;
    std::array<double, 4> values{};
};

/// Interval index min(floor((z - a) / d), omega - 1), clamped to 0 below a.
int bin_index(double z, const GridDomain& dom) noexcept;

/// (z - a) / d - bin_index(z). Lies in [0, 1) inside the domain, equals 1 at
/// z == b, and falls outside [0, 1] for out-of-domain z.
double interp_value(double z, const GridDomain& dom) noexcept;

/// Basis values at z. theta is clamped to [0, 1], so the spline extends as a
/// constant beyond [a, b].
SplineBasis activation_dw(double z, const GridDomain& dom) noexcept;

/// d/dz of the basis values; zero outside [a, b], right limit at knots.
SplineBasis basis_dz(double z, const GridDomain& dom) noexcept;

/// d2/dz2 of the basis values; zero outside [a, b], right limit at knots.
SplineBasis basis_d2z(double z, const GridDomain& dom) noexcept;

double eval_activation(double z, std::span<const double> weights, const GridDomain& dom);
double activation_dz(double z, std::span<const double> weights, const GridDomain& dom);
double activation_d2z(double z, std::span<const double> weights, const GridDomain& dom);

/// Dot product of an active window with a basis (no size checks).
inline double apply_basis(const SplineBasis& basis, const double* weights) noexcept {
    const double* w = weights + basis.offset;
    return w[0] * basis.values[0] + w[1] * basis.values[1] +
           w[2] * basis.values[2] + w[3] * basis.values[3];
}

/// Knot averages of the uniformly extended knot vector t_i = a + (i - k) d.
/// Returns omega + k strictly increasing points spaced by d.
std::vector<double> greville_abscissae(const GridDomain& dom);

/// Result of moving one or more coefficient rows onto another grid.
struct RefitResult {
    /// Row-major, rows x new_dom.num_weights().
    std::vector<double> weights;
    /// Largest |new - old| over the fit samples, their midpoints and the
    /// old knots that fall inside the new domain.
    double max_residual = 0.0;
    /// The least-squares system was rank deficient and a minimum-norm
    /// solution was used.
    bool rank_deficient = false;
};

/// Samples used per new interval by the least-squares refits.
inline constexpr int kSamplesPerInterval = 10;

/// Least-squares fit of new coefficients on `new_dom` to the old spline,
/// sampled uniformly over the new domain. `old_weights` holds whole rows of
/// old_dom.num_weights() entries; all rows share one factorisation.
RefitResult refit_least_squares(std::span<const double> old_weights,
                                const GridDomain& old_dom,
                                const GridDomain& new_dom);

/// Treats old coefficients as samples at the old Greville points and
/// linearly interpolates them at the new Greville points (clamping outside).
RefitResult refit_greville(std::span<const double> old_weights,
                           const GridDomain& old_dom,
                           const GridDomain& new_dom);

struct RefineResult {
    GridDomain domain;
    RefitResult fit;
};

/// Same [a, b], more intervals; coefficients refit by least squares.
/// Throws ConfigError unless new_omega > old_dom.omega().
RefineResult refine_grid(std::span<const double> old_weights,
                         const GridDomain& old_dom,
                         int new_omega);

}  // namespace adaptkan
