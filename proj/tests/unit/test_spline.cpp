#include "adaptkan/errors.hpp"
#include "adaptkan/spline.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace adaptkan;

namespace {

std::vector<double> line_weights(const GridDomain& dom, double slope, double icpt) {
    std::vector<double> w;
    for (double g : greville_abscissae(dom)) w.push_back(slope * g + icpt);
    return w;
}

std::vector<double> random_weights(const GridDomain& dom, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> w(dom.num_weights());
    for (double& v : w) v = n(rng);
    return w;
}

}  // namespace

TEST_CASE("grid domain validation") {
    CHECK_THROWS_AS(GridDomain(1.0, 1.0, 3), ConfigError);
    CHECK_THROWS_AS(GridDomain(0.0, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(GridDomain(0.0, NAN, 3), ConfigError);
    CHECK_THROWS_AS(GridDomain(0.0, 1.0, 3, 2), ConfigError);
    const GridDomain d(0.0, 1.0, 4);
    CHECK(d.num_weights() == 7);
    CHECK(d.width() == 0.25);
}

TEST_CASE("basis matrix columns sum to 0,0,0,1") {
    const auto& m = basis_matrix();
    for (int c = 0; c < 4; ++c) {
        double s = 0.0;
        for (int r = 0; r < 4; ++r) s += m[r][c];
        CHECK(s == doctest::Approx(c == 3 ? 1.0 : 0.0).epsilon(1e-15));
    }
    CHECK(m[0][0] == -2.0 / 12.0);
    CHECK(m[1][3] == 8.0 / 12.0);
}

TEST_CASE("bin index and interpolation value") {
    const GridDomain d(0.0, 1.0, 4);
    CHECK(bin_index(0.3, d) == 1);
    CHECK(bin_index(1.0, d) == 3);
    CHECK(bin_index(0.0, d) == 0);
    CHECK(bin_index(-5.0, d) == 0);
    CHECK(bin_index(7.0, d) == 3);
    CHECK(interp_value(0.3, d) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(interp_value(0.25, d) == 0.0);
    CHECK(interp_value(1.0, d) == 1.0);
}

TEST_CASE("basis at a knot is the last column of M") {
    const GridDomain d(0.0, 1.0, 4);
    const SplineBasis b = activation_dw(0.25, d);
    CHECK(b.offset == 1);
    CHECK(b.values[0] == doctest::Approx(2.0 / 12.0));
    CHECK(b.values[1] == doctest::Approx(8.0 / 12.0));
    CHECK(b.values[2] == doctest::Approx(2.0 / 12.0));
    CHECK(b.values[3] == 0.0);

    std::vector<double> e0(7, 0.0);
    e0[0] = 1.0;
    CHECK(eval_activation(0.0, e0, d) == doctest::Approx(2.0 / 12.0).epsilon(1e-15));
}

TEST_CASE("evaluation agrees with Cox-de Boor on the domain") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double a = -3.0 + 2.0 * u(rng);
        const double b = a + 0.1 + 4.0 * u(rng);
        const int omega = 1 + static_cast<int>(u(rng) * 12);
        const GridDomain d(a, b, omega);
        const std::vector<double> w = random_weights(d, rng);
        const double z = a + (b - a) * u(rng);
        const double want = oracle::spline_value(w, a, b, omega, z);
        CHECK(std::abs(eval_activation(z, w, d) - want) <= 1e-12 * (1.0 + std::abs(want)));
    }
}

TEST_CASE("partition of unity and nonnegative basis") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const double a = -10.0 + 20.0 * u(rng);
        const GridDomain d(a, a + 0.01 + 10.0 * u(rng), 1 + static_cast<int>(u(rng) * 50));
        const double z = d.a() - 1.0 + (d.b() - d.a() + 2.0) * u(rng);
        const SplineBasis b = activation_dw(z, d);
        double s = 0.0;
        for (double v : b.values) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
        const double c = -5.0 + 10.0 * u(rng);
        const std::vector<double> w(d.num_weights(), c);
        CHECK(std::abs(eval_activation(z, w, d) - c) <= 1e-12 * std::max(1.0, std::abs(c)));
        CHECK(std::abs(activation_dz(z, w, d)) <= 1e-9);
    }
}

TEST_CASE("continuity at interior knots") {
    std::mt19937_64 rng(5);
    const GridDomain d(-1.0, 2.0, 7);
    const std::vector<double> w = random_weights(d, rng);
    for (int i = 1; i < d.omega(); ++i) {
        const double knot = d.edge(i);
        const double left = eval_activation(std::nextafter(knot, -INFINITY), w, d);
        const double right = eval_activation(knot, w, d);
        CHECK(std::abs(left - right) <= 1e-12);
    }
}

TEST_CASE("constant extension outside the domain") {
    std::mt19937_64 rng(7);
    const GridDomain d(0.0, 1.0, 5);
    const std::vector<double> w = random_weights(d, rng);
    CHECK(eval_activation(-3.0, w, d) == eval_activation(0.0, w, d));
    CHECK(eval_activation(4.0, w, d) == eval_activation(1.0, w, d));
    CHECK(activation_dz(-3.0, w, d) == 0.0);
    CHECK(activation_d2z(4.0, w, d) == 0.0);
}

TEST_CASE("linear reproduction at Greville coefficients") {
    const GridDomain d(-2.0, 3.0, 6);
    const std::vector<double> w = line_weights(d, 2.0, -0.5);
    for (int s = 0; s <= 1000; ++s) {
        const double z = -2.0 + 5.0 * s / 1000.0;
        CHECK(std::abs(eval_activation(z, w, d) - (2.0 * z - 0.5)) <= 1e-9);
        if (s > 0 && s < 1000) {
            CHECK(activation_dz(z, w, d) == doctest::Approx(2.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("derivatives match central differences away from knots") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const GridDomain d(-1.0, 1.0, 8);
    for (int trial = 0; trial < 300; ++trial) {
        const std::vector<double> w = random_weights(d, rng);
        const int bin = static_cast<int>(u(rng) * 8);
        const double z = d.edge(bin) + d.width() * (0.05 + 0.9 * u(rng));
        const auto f = [&](double x) { return eval_activation(x, w, d); };
        const auto df = [&](double x) { return activation_dz(x, w, d); };
        CHECK(oracle::close_rel(activation_dz(z, w, d), oracle::central_diff(f, z, 1e-6), 1e-6, 1e-8));
        CHECK(oracle::close_rel(activation_d2z(z, w, d), oracle::central_diff(df, z, 1e-6), 1e-6, 1e-6));
    }
}

TEST_CASE("weight gradient matches finite differences") {
    std::mt19937_64 rng(13);
    const GridDomain d(0.0, 2.0, 5);
    std::vector<double> w = random_weights(d, rng);
    const double z = 1.337;
    const SplineBasis b = activation_dw(z, d);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double keep = w[i];
        w[i] = keep + 1e-6;
        const double up = eval_activation(z, w, d);
        w[i] = keep - 1e-6;
        const double down = eval_activation(z, w, d);
        w[i] = keep;
        const double fd = (up - down) / 2e-6;
        const double exact = (i >= b.offset && i < b.offset + 4) ? b.values[i - b.offset] : 0.0;
        CHECK(std::abs(fd - exact) <= 1e-8);
    }
}

TEST_CASE("Greville abscissae") {
    const std::vector<double> g = greville_abscissae(GridDomain(0.0, 1.0, 2));
    const std::vector<double> want{-0.5, 0.0, 0.5, 1.0, 1.5};
    REQUIRE(g.size() == want.size());
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(want[i]));

    const std::vector<double> g4 = greville_abscissae(GridDomain(0.0, 1.0, 4));
    REQUIRE(g4.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(g4[i] + g4[6 - i] == doctest::Approx(1.0));
        if (i > 0) CHECK(g4[i] - g4[i - 1] == doctest::Approx(0.25));
    }
}

TEST_CASE("least-squares refit") {
    std::mt19937_64 rng(17);
    const GridDomain old(0.0, 1.0, 6);

    SUBCASE("constant survives any domain change") {
        const std::vector<double> w(old.num_weights(), 2.5);
        const RefitResult r = refit_least_squares(w, old, GridDomain(-3.0, 0.4, 6));
        for (double v : r.weights) CHECK(v == doctest::Approx(2.5).epsilon(1e-10));
        CHECK(r.max_residual <= 1e-10);
        CHECK_FALSE(r.rank_deficient);
    }
    SUBCASE("identical domain is an identity on the function") {
        const std::vector<double> w = random_weights(old, rng);
        const RefitResult r = refit_least_squares(w, old, old);
        for (int s = 0; s <= 500; ++s) {
            const double z = s / 500.0;
            CHECK(std::abs(eval_activation(z, r.weights, old) - eval_activation(z, w, old)) <= 1e-10);
        }
    }
    SUBCASE("line reproduced on the overlap after a stretch") {
        const std::vector<double> w = line_weights(old, -1.5, 0.25);
        const GridDomain wide(-0.5, 1.0, 6);
        const RefitResult r = refit_least_squares(w, old, wide);
        // the old spline is constant left of 0, so compare on the overlap only
        for (int s = 0; s <= 200; ++s) {
            const double z = 0.5 + 0.5 * s / 200.0;
            CHECK(std::abs(eval_activation(z, r.weights, wide) - (-1.5 * z + 0.25)) <= 1e-2);
        }
        const GridDomain inner(0.1, 0.9, 6);
        const RefitResult ri = refit_least_squares(w, old, inner);
        for (int s = 0; s <= 200; ++s) {
            const double z = 0.1 + 0.8 * s / 200.0;
            CHECK(std::abs(eval_activation(z, ri.weights, inner) - (-1.5 * z + 0.25)) <= 1e-8);
        }
    }
    SUBCASE("multi-row blocks are fit row by row") {
        std::vector<double> w = random_weights(old, rng);
        const std::vector<double> w2 = random_weights(old, rng);
        w.insert(w.end(), w2.begin(), w2.end());
        const GridDomain nd(0.2, 0.7, 6);
        const RefitResult r = refit_least_squares(w, old, nd);
        const RefitResult r2 = refit_least_squares(w2, old, nd);
        for (std::size_t i = 0; i < w2.size(); ++i) {
            CHECK(r.weights[old.num_weights() + i] == doctest::Approx(r2.weights[i]).epsilon(1e-10));
        }
    }
    CHECK_THROWS_AS(refit_least_squares(std::vector<double>(5, 0.0), old, old), ConfigError);
}

TEST_CASE("Greville refit") {
    const GridDomain old(0.0, 1.0, 4);
    std::mt19937_64 rng(19);
    const std::vector<double> w = random_weights(old, rng);
    CHECK(refit_greville(w, old, old).weights == w);

    const std::vector<double> c(old.num_weights(), -0.75);
    for (double v : refit_greville(c, old, GridDomain(-2.0, 5.0, 4)).weights) CHECK(v == -0.75);

    // shift by one interval: weights move over by one, last clamps
    const std::vector<double> lin = line_weights(old, 3.0, 1.0);
    const GridDomain shifted(0.25, 1.25, 4);
    const RefitResult r = refit_greville(lin, old, shifted);
    for (std::size_t i = 0; i + 1 < lin.size(); ++i) CHECK(r.weights[i] == doctest::Approx(lin[i + 1]));
    CHECK(r.weights.back() == doctest::Approx(lin.back()));

    // half-interval shift lands between old points
    const RefitResult h = refit_greville(lin, old, GridDomain(0.125, 1.125, 4));
    CHECK(h.weights[0] == doctest::Approx(0.5 * (lin[0] + lin[1])));
}

TEST_CASE("grid refinement") {
    const GridDomain d(-1.0, 1.0, 3);
    const std::vector<double> c(d.num_weights(), 4.0);
    const RefineResult r = refine_grid(c, d, 5);
    CHECK(r.domain.omega() == 5);
    CHECK(r.domain.a() == -1.0);
    for (double v : r.fit.weights) CHECK(v == doctest::Approx(4.0).epsilon(1e-10));

    std::mt19937_64 rng(23);
    const std::vector<double> w = random_weights(d, rng);
    const RefineResult fine = refine_grid(w, d, 50);
    double lo = INFINITY;
    double hi = -INFINITY;
    double worst = 0.0;
    for (int s = 0; s <= 2000; ++s) {
        const double z = -1.0 + 2.0 * s / 2000.0;
        const double before = eval_activation(z, w, d);
        lo = std::min(lo, before);
        hi = std::max(hi, before);
        worst = std::max(worst, std::abs(eval_activation(z, fine.fit.weights, fine.domain) - before));
    }
    CHECK(worst <= 1e-3 * (hi - lo));
    for (int i = 0; i <= 3; ++i) {
        const double z = d.edge(i);
        CHECK(std::abs(eval_activation(z, fine.fit.weights, fine.domain) - eval_activation(z, w, d)) <=
              fine.fit.max_residual + 1e-15);
    }
    CHECK_THROWS_AS(refine_grid(w, d, 3), ConfigError);
}
