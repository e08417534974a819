#pragma once

// Independent reference computations used to freeze expected values.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

/// Cox-de Boor recursion for B-spline basis i of degree k on `knots`
/// (half-open support [t_i, t_{i+k+1})).
inline double cox_de_boor(std::size_t i, int k, double z, const std::vector<double>& t) {
    if (k == 0) return (t[i] <= z && z < t[i + 1]) ? 1.0 : 0.0;
    double left = 0.0;
    double right = 0.0;
    const double dl = t[i + k] - t[i];
    const double dr = t[i + k + 1] - t[i + 1];
    if (dl > 0.0) left = (z - t[i]) / dl * cox_de_boor(i, k - 1, z, t);
    if (dr > 0.0) right = (t[i + k + 1] - z) / dr * cox_de_boor(i + 1, k - 1, z, t);
    return left + right;
}

/// Uniform cubic knots t_l = a + (l - 3) d, l = 0 .. omega + 6.
inline std::vector<double> uniform_knots(double a, double b, int omega) {
    const double d = (b - a) / omega;
    std::vector<double> t(static_cast<std::size_t>(omega) + 7);
    for (std::size_t l = 0; l < t.size(); ++l) t[l] = a + (static_cast<double>(l) - 3.0) * d;
    return t;
}

/// Spline value via Cox-de Boor with the same weights layout as the library.
inline double spline_value(const std::vector<double>& w, double a, double b, int omega, double z) {
    const std::vector<double> t = uniform_knots(a, b, omega);
    // evaluate the right end as a left limit
    if (z >= b) z = std::nextafter(b, a);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * cox_de_boor(i, 3, z, t);
    return s;
}

inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline bool close_rel(double got, double want, double rel, double abs_floor) {
    return std::abs(got - want) <= rel * std::max(std::abs(got), std::abs(want)) + abs_floor;
}

}  // namespace oracle
