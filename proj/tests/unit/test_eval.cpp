#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "stldac/error.hpp"
#include "stldac/eval.hpp"
#include "stldac/generator.hpp"

using namespace stldac;

namespace {

double nmi_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    std::map<int, double> pa, pb;
    std::map<std::pair<int, int>, double> pab;
    for (std::size_t i = 0; i < a.size(); ++i) {
        pa[a[i]] += 1.0 / n;
        pb[b[i]] += 1.0 / n;
        pab[{a[i], b[i]}] += 1.0 / n;
    }
    double mi = 0.0, ha = 0.0, hb = 0.0;
    for (auto [k, p] : pab) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
    for (auto [k, p] : pa) ha -= p * std::log(p);
    for (auto [k, p] : pb) hb -= p * std::log(p);
    return mi / (0.5 * (ha + hb));
}

}  // namespace

TEST_CASE("NMI against a direct computation") {
    const std::vector<int> a{0, 0, 1, 1, 2, 2, 2, 0};
    const std::vector<int> b{1, 1, 0, 2, 2, 2, 0, 1};
    CHECK(nmi(LabelAssignment::from_labels(a), LabelAssignment::from_labels(b)) ==
          doctest::Approx(nmi_oracle(a, b)).epsilon(1e-12));
    const std::vector<int> relabeled{5, 5, 3, 3, 9, 9, 9, 5};
    CHECK(nmi(LabelAssignment::from_labels(a), LabelAssignment::from_labels(relabeled)) == doctest::Approx(1.0));
    const std::vector<int> constant(8, 4);
    CHECK(nmi(LabelAssignment::from_labels(constant), LabelAssignment::from_labels(constant)) == 1.0);
    CHECK(nmi(LabelAssignment::from_labels(a), LabelAssignment::from_labels(constant)) == doctest::Approx(0.0));
}

TEST_CASE("NMI normalizations and item matching") {
    const std::vector<int> a{0, 0, 1, 1}, b{0, 1, 1, 1};
    const double geo = nmi(LabelAssignment::from_labels(a), LabelAssignment::from_labels(b), NmiNorm::geometric);
    const double mx = nmi(LabelAssignment::from_labels(a), LabelAssignment::from_labels(b), NmiNorm::max);
    const double mn = nmi(LabelAssignment::from_labels(a), LabelAssignment::from_labels(b), NmiNorm::min);
    CHECK(mx <= geo);
    CHECK(geo <= mn);
    CHECK(parse_nmi_norm("geometric") == NmiNorm::geometric);
    CHECK_THROWS_AS(parse_nmi_norm("median"), ValidationError);

    // items matched by name, not position
    const LabelAssignment x({"p", "q", "r"}, {0, 0, 1});
    const LabelAssignment y({"r", "p", "q"}, {7, 3, 3});
    CHECK(nmi(x, y) == doctest::Approx(1.0));
    const LabelAssignment z({"p", "q", "s"}, {0, 0, 1});
    CHECK_THROWS_AS(nmi(x, z), ValidationError);
}

TEST_CASE("cluster confusion rates") {
    const auto truth = LabelAssignment::from_labels({0, 0, 1, 1, 2, 2});
    const auto est = LabelAssignment::from_labels({5, 5, 5, 5, 7, 7});
    const auto rates = cluster_confusion(truth, est);
    REQUIRE(rates.size() == 3);
    CHECK(rates[0].matched_label == 5);
    CHECK(rates[0].tpr == 1.0);
    CHECK(rates[0].fpr == doctest::Approx(0.5));
    CHECK(rates[2].matched_label == 7);
    CHECK(rates[2].tpr == 1.0);
    CHECK(rates[2].fpr == 0.0);
    CHECK(rates[2].size == 2);
}

TEST_CASE("top words break ties by word id") {
    const std::vector<double> row{0.2, 0.3, 0.3, 0.2};
    CHECK(top_words(row, 3) == std::vector<WordId>{1, 2, 0});
    CHECK(top_words(row, 10).size() == 4);
}

TEST_CASE("coherence hand example") {
    // documents {0, 1}, {0}, {1, 2}; topic ranks words 0, 1, 2
    const Corpus ref = oracle::make_corpus({{{0, 1}, {0}, {1, 2}}}, 3);
    MatrixD beta(1, 3);
    beta(0, 0) = 0.5;
    beta(0, 1) = 0.3;
    beta(0, 2) = 0.2;
    CoherenceConfig cfg;
    cfg.top_words = 3;
    const auto coh = topic_coherence(beta, ref, cfg);
    // pairs (1|0): log(2/2), (2|0): log(1/2), (2|1): log(2/2) in count form
    CHECK(coh.scores[0] == doctest::Approx(std::log(0.5)));
    CHECK(coh.mean == doctest::Approx(std::log(0.5)));
    CHECK_FALSE(coh.guarded[0]);
}

TEST_CASE("coherence guards words missing from the reference corpus") {
    const Corpus ref = oracle::make_corpus({{{0, 1}, {1}}}, 3);
    MatrixD beta(1, 3);
    beta(0, 0) = 0.2;
    beta(0, 1) = 0.3;
    beta(0, 2) = 0.5;
    CoherenceConfig cfg;
    cfg.top_words = 3;
    const auto coh = topic_coherence(beta, ref, cfg);
    CHECK(coh.guarded[0]);
    CHECK(std::isfinite(coh.scores[0]));
}

TEST_CASE("reference corpus shape and determinism") {
    const MatrixD beta = make_synthetic_beta(3, 40, 0.2, 1);
    MatrixD theta(2, 3, 1.0 / 3.0);
    const Corpus a = coherence_reference_corpus(theta, beta, 5, 20, 9);
    const Corpus b = coherence_reference_corpus(theta, beta, 5, 20, 9);
    CHECK(a == b);
    CHECK(a.total_docs() == 10);
    CHECK(a.doc(1, 4).length() == 20);
}

TEST_CASE("argmax ties go to the lowest index") {
    MatrixD p(2, 3, 0.0);
    p(0, 1) = 0.5;
    p(0, 2) = 0.5;
    p(1, 0) = 1.0;
    CHECK(argmax_rows(p) == std::vector<int>{1, 0});
}
