#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cardiokit/mathutil.hpp"
#include "cardiokit/rng.hpp"

using namespace cardiokit;

TEST_CASE("normal cdf/ppf round trip") {
    for (double p : {1e-9, 1e-4, 0.025, 0.2, 0.5, 0.8, 0.975, 0.9999, 1.0 - 1e-9}) {
        const double z = normal_ppf(p);
        REQUIRE(normal_cdf(z) == Catch::Approx(p).epsilon(1e-10));
    }
    REQUIRE(normal_ppf(0.5) == Catch::Approx(0.0).margin(1e-12));
    // Known quantile
    REQUIRE(normal_ppf(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-12));
    REQUIRE_THROWS_AS(normal_ppf(0.0), config_error);
    REQUIRE_THROWS_AS(normal_ppf(1.0), config_error);
}

TEST_CASE("student t two-sided p matches reference") {
    // scipy.stats.ttest_ind([1,2,3],[2,3,4]) -> p = 0.2878641347266908
    REQUIRE(t_two_sided_p(-1.224744871391589, 4.0) ==
            Catch::Approx(0.2878641347266908).epsilon(1e-10));
    // scipy.stats.pearsonr 5-point sample below: t = r*sqrt(3/(1-r^2))
    const double r = 0.824163383692134;
    const double t = r * std::sqrt(3.0 / (1.0 - r * r));
    REQUIRE(t_two_sided_p(t, 3.0) == Catch::Approx(0.08613863131395952).epsilon(1e-9));
    REQUIRE(t_two_sided_p(0.0, 10.0) == Catch::Approx(1.0));
}

TEST_CASE("incomplete beta basic identities") {
    REQUIRE(ibeta(2.0, 3.0, 0.0) == 0.0);
    REQUIRE(ibeta(2.0, 3.0, 1.0) == 1.0);
    // I_x(1, 1) = x
    for (double x : {0.1, 0.37, 0.62, 0.9})
        REQUIRE(ibeta(1.0, 1.0, x) == Catch::Approx(x).epsilon(1e-12));
    // Symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
    REQUIRE(ibeta(2.5, 1.75, 0.3) ==
            Catch::Approx(1.0 - ibeta(1.75, 2.5, 0.7)).epsilon(1e-12));
}

TEST_CASE("average ranks with ties") {
    const std::vector<double> x = {3.0, 1.0, 4.0, 1.0, 5.0};
    const std::vector<double> r = average_ranks(x);
    REQUIRE(r == std::vector<double>{3.0, 1.5, 4.0, 1.5, 5.0});
}

TEST_CASE("percentile linear interpolation") {
    std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    REQUIRE(percentile(x, 0.0) == 1.0);
    REQUIRE(percentile(x, 100.0) == 4.0);
    REQUIRE(percentile(x, 50.0) == Catch::Approx(2.5));
    REQUIRE(percentile(x, 25.0) == Catch::Approx(1.75));
}

TEST_CASE("rng determinism and ranges") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i)
        REQUIRE(a.next() == b.next());
    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(r.below(10) < 10);
    }
    // derive_seed separates streams
    REQUIRE(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    REQUIRE(derive_seed(1, {2}) != derive_seed(2, {2}));
}

TEST_CASE("rng normal moments") {
    Rng r(123);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        s2 += v * v;
    }
    REQUIRE(s / n == Catch::Approx(0.0).margin(0.01));
    REQUIRE(s2 / n == Catch::Approx(1.0).margin(0.02));
}
