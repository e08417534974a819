#include "adaptkan/spline.hpp"

#include "adaptkan/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace adaptkan {

GridDomain::GridDomain(double a, double b, int omega, int degree)
    : a_(a), b_(b), omega_(omega), degree_(degree), width_(0.0)
{
    if (!std::isfinite(a) || !std::isfinite(b) || !(a < b)) {
        throw ConfigError("grid domain requires finite a < b, got [" +
                          std::to_string(a) + ", " + std::to_string(b) + "]");
    }
    if (omega < 1) {
        throw ConfigError("grid domain requires omega >= 1, got " + std::to_string(omega));
    }
    if (degree != kSplineDegree) {
        throw ConfigError("only cubic splines (degree 3) are supported, got degree " +
                          std::to_string(degree));
    }
    width_ = (b - a) / omega;
    if (!(width_ > 0.0) || !std::isfinite(width_)) {
        throw ConfigError("grid domain interval width underflows");
    }
}

const BasisMatrix& basis_matrix() noexcept {
    static constexpr BasisMatrix m = {{
        {-2.0 / 12.0, 6.0 / 12.0, -6.0 / 12.0, 2.0 / 12.0},
        {6.0 / 12.0, -12.0 / 12.0, 0.0, 8.0 / 12.0},
        {-6.0 / 12.0, 6.0 / 12.0, 6.0 / 12.0, 2.0 / 12.0},
        {2.0 / 12.0, 0.0, 0.0, 0.0},
    }};
    return m;
}

namespace {

struct Located {
    int bin;
    double theta;  // unclamped
    bool inside;
};

Located locate(double z, const GridDomain& dom) noexcept {
    const double t = (z - dom.a()) / dom.width();
    const double last = static_cast<double>(dom.omega() - 1);
    double fl = std::floor(t);
    if (!(fl >= 0.0)) {
        fl = 0.0;  // also catches NaN
    } else if (fl > last) {
        fl = last;
    }
    return {static_cast<int>(fl), t - fl, dom.contains(z)};
}

double clamp_unit(double theta) noexcept {
    if (theta < 0.0) return 0.0;
    if (theta > 1.0) return 1.0;
    return theta;  // NaN passes through
}

SplineBasis combine(std::size_t offset, const std::array<double, 4>& powers) noexcept {
    const auto& m = basis_matrix();
    SplineBasis out;
    out.offset = offset;
    for (int s = 0; s < 4; ++s) {
        out.values[s] = m[s][0] * powers[0] + m[s][1] * powers[1] +
                        m[s][2] * powers[2] + m[s][3] * powers[3];
    }
    return out;
}

void check_row(std::span<const double> weights, const GridDomain& dom) {
    if (weights.size() != dom.num_weights()) {
        throw ConfigError("weight row has " + std::to_string(weights.size()) +
                          " entries, grid expects " + std::to_string(dom.num_weights()));
    }
}

std::size_t row_count(std::span<const double> weights, const GridDomain& dom) {
    const std::size_t width = dom.num_weights();
    if (weights.empty() || weights.size() % width != 0) {
        throw ConfigError("weight block of size " + std::to_string(weights.size()) +
                          " is not a whole number of rows of " + std::to_string(width));
    }
    return weights.size() / width;
}

std::vector<double> fit_samples(const GridDomain& dom) {
    const int count = kSamplesPerInterval * dom.omega() + 1;
    std::vector<double> z(static_cast<std::size_t>(count));
    const double step = (dom.b() - dom.a()) / (count - 1);
    for (int s = 0; s < count; ++s) {
        z[static_cast<std::size_t>(s)] = dom.a() + s * step;
    }
    z.back() = dom.b();
    return z;
}

double max_deviation(std::span<const double> old_weights, const GridDomain& old_dom,
                     std::span<const double> new_weights, const GridDomain& new_dom,
                     std::size_t rows) {
    std::vector<double> points = fit_samples(new_dom);
    const std::size_t n = points.size();
    for (std::size_t s = 0; s + 1 < n; ++s) {
        points.push_back(0.5 * (points[s] + points[s + 1]));
    }
    for (int i = 0; i <= old_dom.omega(); ++i) {
        const double knot = old_dom.edge(i);
        if (new_dom.contains(knot)) points.push_back(knot);
    }

    const std::size_t w_old = old_dom.num_weights();
    const std::size_t w_new = new_dom.num_weights();
    double worst = 0.0;
    for (double z : points) {
        const SplineBasis bo = activation_dw(z, old_dom);
        const SplineBasis bn = activation_dw(z, new_dom);
        for (std::size_t r = 0; r < rows; ++r) {
            const double before = apply_basis(bo, old_weights.data() + r * w_old);
            const double after = apply_basis(bn, new_weights.data() + r * w_new);
            worst = std::max(worst, std::abs(after - before));
        }
    }
    return worst;
}

}  // namespace

int bin_index(double z, const GridDomain& dom) noexcept {
    return locate(z, dom).bin;
}

double interp_value(double z, const GridDomain& dom) noexcept {
    return locate(z, dom).theta;
}

SplineBasis activation_dw(double z, const GridDomain& dom) noexcept {
    const Located loc = locate(z, dom);
    const double th = clamp_unit(loc.theta);
    return combine(static_cast<std::size_t>(loc.bin), {th * th * th, th * th, th, 1.0});
}

SplineBasis basis_dz(double z, const GridDomain& dom) noexcept {
    const Located loc = locate(z, dom);
    if (!loc.inside) {
        SplineBasis zero;
        zero.offset = static_cast<std::size_t>(loc.bin);
        if (std::isnan(z)) zero.values.fill(z);
        return zero;
    }
    const double th = clamp_unit(loc.theta);
    const double inv = 1.0 / dom.width();
    return combine(static_cast<std::size_t>(loc.bin),
                   {3.0 * th * th * inv, 2.0 * th * inv, inv, 0.0});
}

SplineBasis basis_d2z(double z, const GridDomain& dom) noexcept {
    const Located loc = locate(z, dom);
    if (!loc.inside) {
        SplineBasis zero;
        zero.offset = static_cast<std::size_t>(loc.bin);
        if (std::isnan(z)) zero.values.fill(z);
        return zero;
    }
    const double th = clamp_unit(loc.theta);
    const double inv2 = 1.0 / (dom.width() * dom.width());
    return combine(static_cast<std::size_t>(loc.bin), {6.0 * th * inv2, 2.0 * inv2, 0.0, 0.0});
}

double eval_activation(double z, std::span<const double> weights, const GridDomain& dom) {
    check_row(weights, dom);
    return apply_basis(activation_dw(z, dom), weights.data());
}

double activation_dz(double z, std::span<const double> weights, const GridDomain& dom) {
    check_row(weights, dom);
    return apply_basis(basis_dz(z, dom), weights.data());
}

double activation_d2z(double z, std::span<const double> weights, const GridDomain& dom) {
    check_row(weights, dom);
    return apply_basis(basis_d2z(z, dom), weights.data());
}

std::vector<double> greville_abscissae(const GridDomain& dom) {
    const int k = dom.degree();
    std::vector<double> points(dom.num_weights());
    for (std::size_t i = 0; i < points.size(); ++i) {
        // mean of knots t_{i+1} .. t_{i+k} with t_l = a + (l - k) d
        const double first = static_cast<double>(i) + 1.0 - k;
        const double last = static_cast<double>(i);
        points[i] = dom.a() + 0.5 * (first + last) * dom.width();
    }
    return points;
}

RefitResult refit_least_squares(std::span<const double> old_weights,
                                const GridDomain& old_dom,
                                const GridDomain& new_dom) {
    const std::size_t rows = row_count(old_weights, old_dom);
    const std::size_t w_old = old_dom.num_weights();
    const std::size_t w_new = new_dom.num_weights();
    const std::vector<double> samples = fit_samples(new_dom);
    const auto n = static_cast<Eigen::Index>(samples.size());

    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(w_new));
    Eigen::MatrixXd target(n, static_cast<Eigen::Index>(rows));
    for (Eigen::Index s = 0; s < n; ++s) {
        const double z = samples[static_cast<std::size_t>(s)];
        const SplineBasis bn = activation_dw(z, new_dom);
        for (int t = 0; t < 4; ++t) {
            design(s, static_cast<Eigen::Index>(bn.offset) + t) = bn.values[t];
        }
        const SplineBasis bo = activation_dw(z, old_dom);
        for (std::size_t r = 0; r < rows; ++r) {
            target(s, static_cast<Eigen::Index>(r)) =
                apply_basis(bo, old_weights.data() + r * w_old);
        }
    }

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
    const Eigen::MatrixXd solution = cod.solve(target);

    RefitResult out;
    out.rank_deficient = cod.rank() < static_cast<Eigen::Index>(w_new);
    out.weights.resize(rows * w_new);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < w_new; ++c) {
            out.weights[r * w_new + c] =
                solution(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r));
        }
    }
    out.max_residual = max_deviation(old_weights, old_dom, out.weights, new_dom, rows);
    return out;
}

RefitResult refit_greville(std::span<const double> old_weights,
                           const GridDomain& old_dom,
                           const GridDomain& new_dom) {
    const std::size_t rows = row_count(old_weights, old_dom);
    const std::size_t w_old = old_dom.num_weights();
    const std::size_t w_new = new_dom.num_weights();

    RefitResult out;
    if (old_dom == new_dom) {
        out.weights.assign(old_weights.begin(), old_weights.end());
        return out;
    }

    const std::vector<double> g_old = greville_abscissae(old_dom);
    const std::vector<double> g_new = greville_abscissae(new_dom);
    out.weights.resize(rows * w_new);
    for (std::size_t c = 0; c < w_new; ++c) {
        const double q = g_new[c];
        std::size_t lo = 0;
        double frac = 0.0;
        if (q <= g_old.front()) {
            lo = 0;
        } else if (q >= g_old.back()) {
            lo = w_old - 1;
        } else {
            const double u = (q - g_old.front()) / old_dom.width();
            lo = std::min(static_cast<std::size_t>(std::floor(u)), w_old - 2);
            frac = std::clamp(u - static_cast<double>(lo), 0.0, 1.0);
        }
        for (std::size_t r = 0; r < rows; ++r) {
            const double* w = old_weights.data() + r * w_old;
            const double hi = lo + 1 < w_old ? w[lo + 1] : w[lo];
            out.weights[r * w_new + c] = (1.0 - frac) * w[lo] + frac * hi;
        }
    }
    out.max_residual = max_deviation(old_weights, old_dom, out.weights, new_dom, rows);
    return out;
}

RefineResult refine_grid(std::span<const double> old_weights,
                         const GridDomain& old_dom,
                         int new_omega) {
    if (new_omega <= old_dom.omega()) {
        throw ConfigError("grid refinement needs more intervals: " +
                          std::to_string(new_omega) + " <= " +
                          std::to_string(old_dom.omega()));
    }
    GridDomain fine(old_dom.a(), old_dom.b(), new_omega, old_dom.degree());
    return {fine, refit_least_squares(old_weights, old_dom, fine)};
}

}  // namespace adaptkan
