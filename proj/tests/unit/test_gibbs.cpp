#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "stldac/error.hpp"
#include "stldac/generator.hpp"
#include "stldac/gibbs.hpp"

using namespace stldac;

namespace {

GibbsState state_for(const Corpus& c, const Hyperparams& hp, std::vector<int> z, std::vector<int> g, MatrixD alpha) {
    GibbsConfig cfg;
    Rng rng(1);
    GibbsState s = initialize_state(c, hp, cfg, rng);
    s.z = std::move(z);
    s.g = std::move(g);
    s.alpha = std::move(alpha);
    s.stats = SufficientStats::from_assignments(c, s.z, s.g, hp.T, hp.G);
    return s;
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

std::vector<long> counts_of(const GibbsState& s, std::size_t u) {
    const auto r = s.stats.user_topic_counts.row(u);
    return {r.begin(), r.end()};
}

}  // namespace

TEST_CASE("topic conditional hand example") {
    // one document (word 0) under consideration; the user's other documents
    // sit three on topic 0 and one on topic 1, topic 1 holds word 0 four times
    const Corpus c = oracle::make_corpus({{{0}}}, 2);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 1;
    GibbsState s = state_for(c, hp, {0}, {0}, rows({{1.0, 1.0}}));
    s.stats = SufficientStats::zeros(1, 2, 2, 1);
    s.stats.user_topic_counts(0, 0) = 3;
    s.stats.user_topic_counts(0, 1) = 1;
    s.stats.topic_word_counts(1, 0) = 4;
    s.stats.topic_totals = {0, 4};
    s.stats.cluster_counts = {1};
    const auto p = topic_full_conditional(s, c, hp, 0, 0);
    CHECK(p[0] == doctest::Approx(6.0 / 11.0));
    CHECK(p[1] == doctest::Approx(5.0 / 11.0));
}

TEST_CASE("topic conditional matches ratios of the collapsed joint") {
    const Corpus c = oracle::make_corpus({{{0, 1, 1}, {2}, {0, 3}}, {{3, 3}, {1, 2, 0}}}, 4);
    Hyperparams hp;
    hp.T = 3;
    hp.G = 2;
    hp.eta = 0.7;
    const std::vector<double> a0{0.5, 1.5, 2.0}, a1{3.0, 0.2, 1.0};
    const std::vector<int> z{0, 2, 1, 1, 0};
    GibbsState s = state_for(c, hp, z, {0, 1}, rows({a0, a1}));
    for (std::size_t u = 0; u < 2; ++u)
        for (std::size_t d = 0; d < c.num_docs(u); ++d) {
            const std::size_t i = c.doc_offset(u) + d;
            GibbsState removed = s;
            removed.stats.apply_document(c.doc(u, d), u, static_cast<std::size_t>(z[i]), -1);
            const auto p = topic_full_conditional(removed, c, hp, u, d);
            std::vector<double> logs;
            for (int t = 0; t < 3; ++t) {
                auto zt = z;
                zt[i] = t;
                double l = oracle::collapsed_words(c, zt, 3, hp.eta);
                const auto n = oracle::user_topic_counts(c, zt, 3);
                l += oracle::dirmult(n[0], a0) + oracle::dirmult(n[1], a1);
                logs.push_back(l);
            }
            const auto want = oracle::normalize_logs(logs);
            for (int t = 0; t < 3; ++t) CHECK(p[t] == doctest::Approx(want[t]).epsilon(1e-10));
        }
}

TEST_CASE("negative counts are reported") {
    const Corpus c = oracle::make_corpus({{{0}}}, 2);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 1;
    GibbsState s = state_for(c, hp, {0}, {0}, rows({{1.0, 1.0}}));
    s.stats.apply_document(c.doc(0, 0), 0, 0, -1);
    s.stats.apply_document(c.doc(0, 0), 0, 0, -1);
    CHECK_THROWS_AS(topic_full_conditional(s, c, hp, 0, 0), ConsistencyError);
}

TEST_CASE("user cluster probabilities follow phi times the Dirichlet-multinomial") {
    const Corpus c = oracle::make_corpus({{{0}, {1}, {1}}, {{0}, {0}}}, 2);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 3;
    const std::vector<std::vector<double>> a{{1.0, 1.0}, {5.0, 0.5}, {0.3, 2.0}};
    GibbsState s = state_for(c, hp, {0, 1, 1, 0, 0}, {0, 2}, rows({a[0], a[1], a[2]}));
    s.phi = {0.2, 0.5, 0.3};
    for (std::size_t u = 0; u < 2; ++u) {
        const auto p = user_cluster_probs(s, u);
        std::vector<double> logs;
        for (std::size_t g = 0; g < 3; ++g) logs.push_back(std::log(s.phi[g]) + oracle::dirmult(counts_of(s, u), a[g]));
        const auto want = oracle::normalize_logs(logs);
        for (std::size_t g = 0; g < 3; ++g) CHECK(p[g] == doctest::Approx(want[g]).epsilon(1e-12));
    }
}

TEST_CASE("alpha target differences: likelihood ratio 0.9 example") {
    const Corpus c = oracle::make_corpus({{{0}, {0}}}, 2);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 1;
    const GibbsState s = state_for(c, hp, {0, 0}, {0}, rows({{1.0, 1.0}}));
    const std::vector<double> a{1.0, 1.0}, b{2.0, 2.0};
    // prior and Jacobian at (m, c): truncated normal density of c, uniform m,
    // Jacobian c * m_1 * m_2 for the log/logit coordinates
    auto extra = [&](double m, double cc) {
        return std::log(oracle::truncated_normal_pdf(cc, hp.alpha_prior.c_mean, hp.alpha_prior.c_sd)) +
               std::log(cc) + std::log(m) + std::log(1.0 - m);
    };
    const double diff = alpha_log_target(s, hp, 0, b) - alpha_log_target(s, hp, 0, a);
    CHECK(diff == doctest::Approx(std::log(0.9) + extra(0.5, 4.0) - extra(0.5, 2.0)).epsilon(1e-10));
}

TEST_CASE("empty clusters redraw alpha from the prior") {
    const Corpus c = oracle::make_corpus({{{0}}}, 2);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 2;
    GibbsState s = state_for(c, hp, {0}, {0}, rows({{1.0, 1.0}, {1.0, 1.0}}));
    Rng rng(17);
    const int n = 20000;
    double mean_c = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto out = mh_update_alpha(s, hp, 1, rng);
        CHECK(out.from_prior);
        mean_c += (s.alpha(1, 0) + s.alpha(1, 1)) / n;
    }
    const double want = oracle::integrate_alpha_prior_t2(100.0, 50.0, [](double, double cc) { return cc; });
    CHECK(mean_c == doctest::Approx(want).epsilon(0.02));
}

TEST_CASE("alpha Metropolis chain targets the quadrature posterior") {
    // one user with topic counts (3, 1) and a prior pulled toward small c
    const Corpus c = oracle::make_corpus({{{0}, {0}, {0}, {1}}}, 2);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 1;
    hp.alpha_prior.c_mean = 2.0;
    hp.alpha_prior.c_sd = 2.0;
    GibbsState s = state_for(c, hp, {0, 0, 0, 1}, {0}, rows({{1.0, 1.0}}));
    s.step_m = {0.8};
    s.step_c = {0.8};
    auto lik = [](double m, double cc) { return std::exp(oracle::dirmult({3, 1}, {m * cc, (1.0 - m) * cc})); };
    const double Z = oracle::integrate_alpha_prior_t2(2.0, 2.0, lik);
    const double want_m = oracle::integrate_alpha_prior_t2(2.0, 2.0, [&](double m, double cc) { return m * lik(m, cc); }) / Z;
    const double want_c = oracle::integrate_alpha_prior_t2(2.0, 2.0, [&](double m, double cc) { return cc * lik(m, cc); }) / Z;
    Rng rng(23);
    const int n = 200000;
    double m_sum = 0.0, c_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        mh_update_alpha(s, hp, 0, rng);
        const double cc = s.alpha(0, 0) + s.alpha(0, 1);
        m_sum += s.alpha(0, 0) / cc;
        c_sum += cc;
    }
    CHECK(m_sum / n == doctest::Approx(want_m).epsilon(0.02));
    CHECK(c_sum / n == doctest::Approx(want_c).epsilon(0.03));
}

TEST_CASE("fixed-alpha chain reproduces the enumerated topic posterior") {
    const Corpus c = oracle::make_corpus({{{0, 0}, {1}}, {{0, 1}, {1, 1}}}, 2);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 1;
    const std::vector<double> a{0.8, 1.3};
    GibbsConfig cfg;
    cfg.n_sweeps = 100000;
    cfg.burn_in = 100;
    cfg.thin = 1;
    cfg.inner_updates_per_sweep = 1;
    cfg.topic_split_merge = 0;
    cfg.fixed_alpha = rows({a});
    const auto trace = run_chain(c, hp, cfg, 3);
    const auto labs = oracle::all_labelings(4, 2);
    std::vector<double> logs;
    for (const auto& z : labs) logs.push_back(oracle::joint_fixed_alpha(c, z, a, hp.eta));
    const auto exact = oracle::normalize_logs(logs);
    std::vector<double> freq(labs.size(), 0.0);
    for (std::size_t k = 0; k < trace.num_samples; ++k) {
        const auto zs = trace.z_sample(k);
        freq[oracle::labeling_index({zs.begin(), zs.end()}, 2)] += 1.0 / static_cast<double>(trace.num_samples);
    }
    CHECK(oracle::total_variation(exact, freq) < 0.01);
}

TEST_CASE("topic split-merge moves leave the topic posterior invariant") {
    const Corpus c = oracle::make_corpus({{{0, 0}, {1, 2}}, {{0, 1}, {2, 2}}}, 3);
    Hyperparams hp;
    hp.T = 3;
    hp.G = 1;
    const std::vector<double> a{0.6, 0.6, 0.6};
    GibbsState s = state_for(c, hp, {0, 0, 0, 0}, {0, 0}, rows({a}));
    Rng rng(8);
    const auto labs = oracle::all_labelings(4, 3);
    std::vector<double> freq(labs.size(), 0.0);
    long accepted = 0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        // the sweep alone is irreducible; the moves must not bias it
        if (i % 4 == 0) sweep_topics(s, c, hp, rng);
        accepted += topic_split_merge(s, c, hp, rng).accepted ? 1 : 0;
        freq[oracle::labeling_index(s.z, 3)] += 1.0 / n;
    }
    std::vector<double> logs;
    for (const auto& z : labs) logs.push_back(oracle::joint_fixed_alpha(c, z, a, hp.eta));
    CHECK(accepted > 100);
    CHECK(oracle::total_variation(oracle::normalize_logs(logs), freq) < 0.015);
}

TEST_CASE("cluster split-merge moves leave the partition posterior invariant") {
    // three single-word-document users with topic counts (9,1), (7,3), (2,8)
    std::vector<std::vector<std::vector<WordId>>> docs;
    std::vector<int> z;
    for (auto [a, b] : std::vector<std::pair<int, int>>{{9, 1}, {7, 3}, {2, 8}}) {
        std::vector<std::vector<WordId>> ds;
        for (int i = 0; i < a + b; ++i) {
            ds.push_back({static_cast<WordId>(i < a ? 0 : 1)});
            z.push_back(i < a ? 0 : 1);
        }
        docs.push_back(ds);
    }
    const Corpus c = oracle::make_corpus(docs, 2);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 2;
    hp.alpha_prior.c_mean = 2.0;
    hp.alpha_prior.c_sd = 2.0;
    const std::vector<std::vector<long>> counts{{9, 1}, {7, 3}, {2, 8}};

    // exact partition probabilities: phi integrated against Dir(1, 1), alpha
    // integrated against its prior for every block
    auto block = [&](const std::vector<int>& members) {
        if (members.empty()) return 1.0;
        return oracle::integrate_alpha_prior_t2(2.0, 2.0, [&](double m, double cc) {
            double l = 0.0;
            for (int u : members) l += oracle::dirmult(counts[static_cast<std::size_t>(u)], {m * cc, (1.0 - m) * cc});
            return std::exp(l);
        }, 300, 1500);
    };
    // partition key: 0 = everyone together, 1 + u = user u alone
    auto key_of = [](const std::vector<int>& g) {
        if (g[0] == g[1] && g[1] == g[2]) return 0;
        for (int u = 0; u < 3; ++u)
            if (g[u] != g[(u + 1) % 3] && g[u] != g[(u + 2) % 3]) return 1 + u;
        return -1;
    };
    std::vector<double> exact(4, 0.0);
    for (const auto& g : oracle::all_labelings(3, 2)) {
        std::vector<int> s0, s1;
        for (int u = 0; u < 3; ++u) (g[u] == 0 ? s0 : s1).push_back(u);
        const double n0 = static_cast<double>(s0.size()), n1 = static_cast<double>(s1.size());
        const double phi = std::exp(std::lgamma(1.0 + n0) + std::lgamma(1.0 + n1) - std::lgamma(5.0));
        exact[static_cast<std::size_t>(key_of(g))] += phi * block(s0) * block(s1);
    }
    const double total = std::accumulate(exact.begin(), exact.end(), 0.0);
    for (double& e : exact) e /= total;

    GibbsState s = state_for(c, hp, z, {0, 0, 0}, rows({{1.0, 1.0}, {1.0, 1.0}}));
    Rng rng(5);
    std::vector<double> freq(4, 0.0);
    long accepted = 0;
    const int n = 150000;
    for (int i = 0; i < n; ++i) {
        accepted += cluster_split_merge(s, hp, rng).accepted ? 1 : 0;
        resample_phi(s, hp, rng);
        for (std::size_t u = 0; u < 3; ++u) resample_user_cluster(s, hp, u, rng);
        for (std::size_t g = 0; g < 2; ++g) mh_update_alpha(s, hp, g, rng);
        freq[static_cast<std::size_t>(key_of(s.g))] += 1.0 / n;
    }
    CHECK(accepted > 0);
    CHECK(oracle::total_variation(exact, freq) < 0.01);
}

TEST_CASE("log joint differences match the oracle") {
    const Corpus c = oracle::make_corpus({{{0, 1}, {1}}, {{2, 0}}}, 3);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 1;
    const std::vector<double> a{1.2, 0.4};
    const GibbsState s1 = state_for(c, hp, {0, 1, 1}, {0, 0}, rows({a}));
    const GibbsState s2 = state_for(c, hp, {1, 1, 0}, {0, 0}, rows({a}));
    const double want = oracle::joint_fixed_alpha(c, {1, 1, 0}, a, hp.eta) - oracle::joint_fixed_alpha(c, {0, 1, 1}, a, hp.eta);
    CHECK(log_joint(s2, c, hp) - log_joint(s1, c, hp) == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("chain configuration validation") {
    GibbsConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.burn_in = cfg.n_sweeps;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = GibbsConfig{};
    cfg.thin = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = GibbsConfig{};
    cfg.mh_step_c = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = GibbsConfig{};
    cfg.n_sweeps = 0;
    cfg.burn_in = 0;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("zero-sweep chain returns the initialization") {
    const Corpus c = oracle::make_corpus({{{0}, {1}}, {{1}}}, 2);
    Hyperparams hp;
    hp.T = 2;
    hp.G = 2;
    GibbsConfig cfg;
    cfg.n_sweeps = 0;
    cfg.burn_in = 0;
    const auto trace = run_chain(c, hp, cfg, 9);
    CHECK(trace.num_samples == 1);
    CHECK(trace.log_joint.size() == 1);
}

TEST_CASE("chains are deterministic under a seed") {
    SimConfig sc = preset_config("paper-stldac");
    sc.users_per_cluster.assign(4, 2);
    sc.docs_per_user = 10;
    const auto sim = simulate(sc, 4);
    Hyperparams hp;
    GibbsConfig cfg;
    cfg.n_sweeps = 30;
    cfg.burn_in = 10;
    cfg.thin = 5;
    const auto a = run_chain(sim.corpus, hp, cfg, 12);
    const auto b = run_chain(sim.corpus, hp, cfg, 12);
    CHECK(a.z == b.z);
    CHECK(a.g == b.g);
    CHECK(a.alpha == b.alpha);
    CHECK(a.log_joint == b.log_joint);
    const auto c = run_chain(sim.corpus, hp, cfg, 13);
    CHECK(c.log_joint != a.log_joint);
}

TEST_CASE("cluster alignment recovers a relabeling") {
    const std::vector<int> ref{0, 0, 1, 1, 2, 2};
    const std::vector<int> cur{2, 2, 0, 0, 1, 1};
    const auto perm = align_clusters(ref, cur, 3);
    CHECK(perm == std::vector<int>{1, 2, 0});
    const std::vector<int> partial{1, 1, 1, 1, 1, 1};
    const auto p2 = align_clusters(ref, partial, 3);
    std::vector<int> sorted = p2;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2});
}
