#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "stldac/error.hpp"
#include "stldac/model.hpp"

using namespace stldac;

TEST_CASE("alpha prior density integrates to one on T = 2") {
    AlphaPrior prior;
    prior.c_mean = 20.0;
    prior.c_sd = 15.0;
    const int nm = 200, nc = 4000;
    const double c_max = 20.0 + 12.0 * 15.0;
    double total = 0.0;
    for (int i = 0; i < nm; ++i) {
        const double m = (i + 0.5) / nm;
        for (int j = 0; j < nc; ++j) {
            const double c = (j + 0.5) * c_max / nc;
            AlphaPoint p{{m, 1.0 - m}, c};
            total += std::exp(alpha_prior_log_density(p, prior)) * (1.0 / nm) * (c_max / nc);
        }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("prior draws match the truncated normal mean") {
    AlphaPrior prior;  // c ~ N(100, 50) on c > 0
    Rng rng(4);
    const int n = 40000;
    double mean_c = 0.0, mean_m0 = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto p = sample_alpha_prior(4, prior, rng);
        CHECK(p.concentration > 0.0);
        mean_c += p.concentration / n;
        mean_m0 += p.mean[0] / n;
    }
    // mu + sigma * pdf(2) / cdf(2)
    const double pdf2 = std::exp(-2.0) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf2 = 0.5 * std::erfc(-2.0 / std::numbers::sqrt2);
    CHECK(mean_c == doctest::Approx(100.0 + 50.0 * pdf2 / cdf2).epsilon(0.01));
    CHECK(mean_m0 == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("alpha point decomposition round trips") {
    const std::vector<double> alpha{2.0, 6.0};
    const auto p = AlphaPoint::from_alpha(alpha);
    CHECK(p.concentration == doctest::Approx(8.0));
    CHECK(p.mean[0] == doctest::Approx(0.25));
    CHECK(p.alpha()[1] == doctest::Approx(6.0));
}

TEST_CASE("hyperparameter validation") {
    Hyperparams hp;
    CHECK_NOTHROW(hp.validate());
    hp.eta = 0.0;
    CHECK_THROWS_AS(hp.validate(), ValidationError);
    hp = Hyperparams{};
    hp.G = 0;
    CHECK_THROWS_AS(hp.validate(), ValidationError);
}

TEST_CASE("model parameter validation names the violation") {
    Hyperparams hp;
    hp.T = 2;
    hp.G = 1;
    ModelParams p;
    p.alpha = MatrixD(1, 2, 1.0);
    p.beta = MatrixD(2, 3, 1.0 / 3.0);
    p.phi = {1.0};
    CHECK_NOTHROW(validate(p, hp, 3));
    p.alpha(0, 1) = -1.0;
    CHECK_THROWS_WITH_AS(validate(p, hp, 3), doctest::Contains("positivity"), ValidationError);
    p.alpha(0, 1) = 1.0;
    p.beta(1, 0) = 0.9;
    CHECK_THROWS_WITH_AS(validate(p, hp, 3), doctest::Contains("simplex"), ValidationError);
}

TEST_CASE("sufficient statistics from assignments and incremental updates") {
    const std::vector<WordId> t0{0, 0, 1}, t1{2};
    std::vector<std::vector<Document>> docs{{Document::from_tokens("a", "u", t0), Document::from_tokens("b", "u", t1)},
                                            {Document::from_tokens("c", "v", t1)}};
    const Corpus corpus(Vocabulary({"x", "y", "z"}), {"u", "v"}, docs);
    const std::vector<int> z{1, 0, 1}, g{0, 0};
    auto s = SufficientStats::from_assignments(corpus, z, g, 2, 2);
    CHECK(s.user_topic_counts(0, 0) == 1);
    CHECK(s.user_topic_counts(0, 1) == 1);
    CHECK(s.topic_word_counts(1, 0) == 2);
    CHECK(s.topic_word_counts(1, 2) == 1);
    CHECK(s.topic_totals[1] == 4);
    CHECK(s.cluster_counts[0] == 2);

    auto moved = s;
    moved.apply_document(corpus.doc(0, 0), 0, 1, -1);
    moved.apply_document(corpus.doc(0, 0), 0, 0, +1);
    const std::vector<int> z2{0, 0, 1};
    CHECK(moved == SufficientStats::from_assignments(corpus, z2, g, 2, 2));
    const std::vector<int> bad{2, 0, 1};
    CHECK_THROWS(SufficientStats::from_assignments(corpus, bad, g, 2, 2));
}

TEST_CASE("model parameters survive a file round trip") {
    ModelParams p;
    p.alpha = MatrixD(2, 2);
    p.alpha(0, 0) = 1.5;
    p.alpha(0, 1) = 0.25;
    p.alpha(1, 0) = 3.0;
    p.alpha(1, 1) = 7.0;
    p.beta = MatrixD(2, 2, 0.5);
    p.phi = {0.3, 0.7};
    const auto path = std::filesystem::temp_directory_path() / "stldac_params_roundtrip.json";
    save_params(p, path);
    const auto back = load_params(path);
    CHECK(back.alpha == p.alpha);
    CHECK(back.beta == p.beta);
    CHECK(back.phi == p.phi);
    std::filesystem::remove(path);

    io::json wrong = to_json(p);
    wrong["schema_version"] = 99;
    CHECK_THROWS_AS(model_params_from_json(wrong), SchemaError);
}
