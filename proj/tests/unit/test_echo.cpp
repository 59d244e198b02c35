#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stldac/echo.hpp"
#include "stldac/error.hpp"

using namespace stldac;

namespace {

double mean_of(const std::vector<long>& v) {
    double s = 0.0;
    for (long x : v) s += static_cast<double>(x);
    return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<long>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (long x : v) s += (static_cast<double>(x) - m) * (static_cast<double>(x) - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

MatrixD rows(std::initializer_list<std::vector<double>> r) {
    MatrixD m(r.size(), r.begin()->size());
    std::size_t i = 0;
    for (const auto& row : r) {
        std::copy(row.begin(), row.end(), m.row(i).begin());
        ++i;
    }
    return m;
}

}  // namespace

TEST_CASE("one topic is covered by the first draw") {
    const std::vector<double> p{1.0};
    const auto s = coverage_time_average(p, 50, 100, 1);
    for (long d : s.draws) CHECK(d == 1);
}

TEST_CASE("two topics: P(time = 2) = 2 p1 p2") {
    const std::vector<double> p{0.3, 0.7};
    const std::size_t n = 200000;
    const auto s = coverage_time_average(p, n, 1000, 4);
    double hits = 0.0;
    for (long d : s.draws) {
        CHECK(d >= 2);
        hits += d == 2 ? 1.0 : 0.0;
    }
    const double want = 2.0 * 0.3 * 0.7;
    CHECK(std::abs(hits / n - want) < 4.0 * std::sqrt(want * (1.0 - want) / n));
}

TEST_CASE("equal probabilities: mean T H_T") {
    for (std::size_t T : {3u, 6u}) {
        const std::vector<double> p(T, 1.0 / static_cast<double>(T));
        const auto s = coverage_time_average(p, 20000, 100000, 7);
        double h = 0.0;
        for (std::size_t k = 1; k <= T; ++k) h += 1.0 / static_cast<double>(k);
        const double se = sd_of(s.draws) / std::sqrt(20000.0);
        CHECK(std::abs(mean_of(s.draws) - static_cast<double>(T) * h) < 4.0 * se);
    }
}

TEST_CASE("unequal probabilities match inclusion-exclusion") {
    const std::vector<double> p{0.05, 0.15, 0.3, 0.5};
    const auto s = coverage_time_average(p, 20000, 100000, 8);
    const double se = sd_of(s.draws) / std::sqrt(20000.0);
    CHECK(std::abs(mean_of(s.draws) - oracle::coverage_mean(p)) < 4.0 * se);
}

TEST_CASE("zero probability topics are rejected") {
    const std::vector<double> p{0.5, 0.5, 0.0};
    CHECK_THROWS_AS(coverage_time_average(p, 10, 100, 1), DomainError);
}

TEST_CASE("replicates hitting the cap are counted as truncated") {
    const std::vector<double> p{0.999, 0.001};
    const auto s = coverage_time_average(p, 200, 3, 2);
    CHECK(s.truncated > 150);
    for (long d : s.draws) CHECK(d <= 3);
}

TEST_CASE("averaging cluster rows") {
    const std::vector<std::vector<double>> r{{1.0, 3.0}, {5.0, 5.0}};
    const auto p = combine_clusters_average(r);
    CHECK(p[0] == doctest::Approx(0.5 * 0.25 + 0.5 * 0.5));
}

TEST_CASE("mixture proportions are a mean of Dirichlet draws") {
    const std::vector<std::vector<double>> r{{2.0, 2.0, 6.0}};
    const std::vector<std::size_t> sizes{3};
    Rng rng(3);
    double m2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) m2 += draw_mixture_proportions(r, sizes, rng)[2] / n;
    CHECK(m2 == doctest::Approx(0.6).epsilon(0.01));
}

TEST_CASE("quantiles interpolate linearly") {
    const std::vector<long> v{4, 1, 3, 2};
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 4.0);
    CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
    CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("report rows, identical clusters share Pr(First)") {
    EchoConfig cfg;
    cfg.alpha = rows({{2.0, 2.0, 2.0}, {2.0, 2.0, 2.0}});
    cfg.cluster_sizes = {5, 5};
    cfg.n_mc = 4000;
    const auto rep = echo_report(cfg, 11);
    // singletons {0}, {1} then the pair {0, 1}, each with two regimes
    REQUIRE(rep.rows.size() == 6);
    CHECK(rep.rows[0].regime == "average");
    CHECK(rep.rows[1].regime == "mixture");
    CHECK(rep.rows[0].pr_first + rep.rows[2].pr_first == doctest::Approx(1.0));
    CHECK(rep.rows[0].pr_first == doctest::Approx(0.5).epsilon(0.1));
    CHECK(rep.rows[4].pr_first == 1.0);
    CHECK(rep.rows[0].median >= 3.0);
}

TEST_CASE("reports do not depend on seed reuse or thread count") {
    EchoConfig cfg;
    cfg.alpha = rows({{1.0, 4.0, 2.0}, {3.0, 0.5, 2.0}});
    cfg.cluster_sizes = {4, 6};
    cfg.n_mc = 300;
    const auto a = echo_report(cfg, 5);
    cfg.threads = 3;
    const auto b = echo_report(cfg, 5);
    CHECK(echo_csv(a) == echo_csv(b));
    CHECK(to_json(a) == to_json(b));
    const auto c = echo_report(cfg, 6);
    CHECK(echo_csv(a) != echo_csv(c));
}

TEST_CASE("echo config validation") {
    EchoConfig cfg;
    cfg.alpha = rows({{1.0, 1.0}});
    cfg.cluster_sizes = {2};
    CHECK_NOTHROW(cfg.validate());
    cfg.cluster_sets = {{3}};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.cluster_sets.clear();
    cfg.cap = 1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
