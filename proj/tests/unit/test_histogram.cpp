#include "adaptkan/errors.hpp"
#include "adaptkan/histogram.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace adaptkan;

namespace {

double sum(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

TEST_CASE("create_histogram") {
    const GridDomain two(0.0, 1.0, 2);
    CHECK(create_histogram(std::vector<double>{0.1, 0.1, 0.9}, two) == std::vector<double>{2.0, 1.0});
    CHECK(create_histogram(std::vector<double>{}, two) == std::vector<double>{0.0, 0.0});
    const GridDomain four(0.0, 1.0, 4);
    CHECK(create_histogram(std::vector<double>{1.0}, four) == std::vector<double>{0, 0, 0, 1});
    CHECK_THROWS_AS(create_histogram(std::vector<double>{1.5}, four), DataError);
}

TEST_CASE("EMA update") {
    const GridDomain d(0.0, 1.0, 2);

    SUBCASE("blend of raw counts") {
        FeatureHistogram h = FeatureHistogram::from_state(d, 0.5, {4.0, 0.0}, {0.0, 0.0}, 0.0, 1.0);
        h.update(std::vector<double>{0.1, 0.2});
        CHECK(h.counts()[0] == 3.0);
        CHECK(h.counts()[1] == 0.0);
    }
    SUBCASE("out-of-domain tallies and extremes") {
        FeatureHistogram h(d, 1.0);
        h.update(std::vector<double>{-0.5, 0.2, 1.5, 0.7});
        CHECK(h.ood_counts()[0] == 1.0);
        CHECK(h.ood_counts()[1] == 1.0);
        CHECK(h.ood_a() == -0.5);
        CHECK(h.ood_b() == 1.5);
        h.update(std::vector<double>{-0.2, 3.0});
        CHECK(h.ood_a() == -0.5);
        CHECK(h.ood_b() == 3.0);
    }
    SUBCASE("alpha one forgets everything") {
        FeatureHistogram h = FeatureHistogram::from_state(d, 1.0, {9.0, 9.0}, {3.0, 3.0}, -1.0, 2.0);
        const std::vector<double> batch{0.1, 0.6, 0.7};
        h.update(batch);
        CHECK(std::vector<double>(h.counts().begin(), h.counts().end()) == create_histogram(batch, d));
        CHECK(h.ood_counts()[0] == 0.0);
    }
    SUBCASE("non-finite input") {
        FeatureHistogram h(d, 0.1);
        CHECK_THROWS_AS(h.update(std::vector<double>{0.5, NAN}), DataError);
        CHECK_THROWS_AS(h.update(std::vector<double>{INFINITY}), DataError);
    }
    CHECK_THROWS_AS(FeatureHistogram(d, 0.0), ConfigError);
    CHECK_THROWS_AS(FeatureHistogram(d, 1.5), ConfigError);
}

TEST_CASE("geometric convergence towards a repeated batch") {
    const GridDomain d(0.0, 1.0, 4);
    const double alpha = 0.25;  // (1 - alpha)^t exact in binary
    FeatureHistogram h = FeatureHistogram::from_state(d, alpha, {8.0, 0.0, 4.0, 0.0}, {0.0, 0.0}, 0.0, 1.0);
    const std::vector<double> batch{0.1, 0.3, 0.3, 0.9};
    const std::vector<double> target = create_histogram(batch, d);
    std::vector<double> gap0(4);
    for (std::size_t i = 0; i < 4; ++i) gap0[i] = h.counts()[i] - target[i];
    double decay = 1.0;
    for (int t = 1; t <= 30; ++t) {
        h.update(batch);
        decay *= 1.0 - alpha;
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(std::abs((h.counts()[i] - target[i]) - decay * gap0[i]) <= 1e-12 * std::abs(gap0[i]));
        }
    }
}

TEST_CASE("refit_histogram") {
    const GridDomain d(0.0, 1.0, 4);

    SUBCASE("identity") {
        const FeatureHistogram h = FeatureHistogram::from_state(d, 0.1, {1, 2, 3, 4}, {0.5, 0.25}, -1.0, 2.0);
        const FeatureHistogram r = refit_histogram(h, d, Resize::none);
        CHECK(std::vector<double>(r.counts().begin(), r.counts().end()) == std::vector<double>{1, 2, 3, 4});
        CHECK(r.total() == h.total());
    }
    SUBCASE("stretch deposits the low tally where ood_a now lives") {
        const FeatureHistogram h = FeatureHistogram::from_state(d, 0.1, {1, 1, 1, 1}, {5.0, 0.0}, -2.0, 1.0);
        const GridDomain wide(-2.0, 1.0, 4);
        const FeatureHistogram r = refit_histogram(h, wide, Resize::stretch);
        CHECK(r.counts()[0] > r.counts()[1]);
        CHECK(r.ood_counts()[0] == 0.0);
        CHECK(r.ood_counts()[1] == 0.0);
        CHECK(r.ood_a() == -2.0);
        CHECK(r.ood_b() == 1.0);
        CHECK(r.total() == doctest::Approx(h.total()).epsilon(1e-12));
    }
    SUBCASE("shrink moves cut mass to the tallies") {
        const FeatureHistogram h = FeatureHistogram::from_state(d, 0.1, {0, 5, 5, 0}, {0.0, 0.0}, 0.0, 1.0);
        const GridDomain inner(0.25, 0.75, 4);
        const FeatureHistogram r = refit_histogram(h, inner, Resize::shrink);
        CHECK(r.ood_counts()[0] == 0.0);
        CHECK(r.total() == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(r.ood_a() == 0.25);
        CHECK(r.ood_b() == 0.75);
    }
    SUBCASE("conservation over random refits") {
        std::mt19937_64 rng(29);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 500; ++trial) {
            const int bins = 1 + static_cast<int>(u(rng) * 20);
            const GridDomain from(-1.0, 1.0, bins);
            std::vector<double> counts(static_cast<std::size_t>(bins));
            for (double& c : counts) c = 10.0 * u(rng);
            const FeatureHistogram h = FeatureHistogram::from_state(
                from, 0.01, counts, {u(rng), u(rng)}, -1.0 - 2.0 * u(rng), 1.0 + 2.0 * u(rng));
            const double lo = -3.0 + 2.5 * u(rng);
            const GridDomain to(lo, lo + 0.1 + 3.0 * u(rng), bins);
            const Resize kind = trial % 3 == 0 ? Resize::none : (trial % 3 == 1 ? Resize::stretch : Resize::shrink);
            const FeatureHistogram r = refit_histogram(h, to, kind);
            CHECK(std::abs(r.total() - h.total()) <= 1e-9 * h.total());
            for (double c : r.counts()) CHECK(c >= 0.0);
            CHECK(r.ood_a() <= to.a());
            CHECK(r.ood_b() >= to.b());
        }
    }
}

TEST_CASE("marginal probability") {
    const GridDomain d10(0.0, 1.0, 10);
    const FeatureHistogram u = FeatureHistogram::from_state(d10, 1.0, std::vector<double>(10, 3.0), {0, 0}, 0.0, 1.0);
    CHECK(marginal_prob(u, 0.55) == doctest::Approx(0.1));
    CHECK(marginal_prob(u, -0.1) == kProbFloor);
    const FeatureHistogram h = FeatureHistogram::from_state(GridDomain(0.0, 1.0, 2), 1.0, {3, 1}, {0, 0}, 0.0, 1.0);
    CHECK(marginal_prob(h, 0.75) == 0.25);

    double total = 0.0;
    for (int i = 0; i < 10; ++i) total += marginal_prob(u, 0.05 + 0.1 * i);
    CHECK(total <= 1.0 + 10 * kProbFloor + 1e-15);
    CHECK(sum(u.counts()) == 30.0);
}

TEST_CASE("from_state validates invariants") {
    const GridDomain d(0.0, 1.0, 2);
    CHECK_THROWS_AS(FeatureHistogram::from_state(d, 0.1, {1.0}, {0, 0}, 0.0, 1.0), ConfigError);
    CHECK_THROWS_AS(FeatureHistogram::from_state(d, 0.1, {1.0, -1.0}, {0, 0}, 0.0, 1.0), ConfigError);
    CHECK_THROWS_AS(FeatureHistogram::from_state(d, 0.1, {1.0, 1.0}, {0, 0}, 0.5, 1.0), ConfigError);
}
