#include "stldac/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "stldac/error.hpp"
#include "stldac/generator.hpp"
#include "stldac/mathcore.hpp"
#include "stldac/rng.hpp"

namespace stldac {

namespace {

// Labels of b rearranged into the item order of a.
std::vector<int> matched_labels(const LabelAssignment& a, const LabelAssignment& b) {
    if (a.size() != b.size()) throw ValidationError("label assignments cover different item sets");
    if (a.items == b.items) return b.labels;
    std::unordered_map<std::string, int> lookup;
    lookup.reserve(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) lookup.emplace(b.items[i], b.labels[i]);
    std::vector<int> out;
    out.reserve(a.size());
    for (const auto& item : a.items) {
        const auto it = lookup.find(item);
        if (it == lookup.end()) throw ValidationError("label assignments cover different item sets: '" + item + "'");
        out.push_back(it->second);
    }
    return out;
}

double entropy(const std::map<int, long>& counts, double n) {
    double h = 0.0;
    for (const auto& [label, c] : counts) {
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

LabelAssignment::LabelAssignment(std::vector<std::string> items_in, std::vector<int> labels_in)
    : items(std::move(items_in)), labels(std::move(labels_in)) {
    if (items.size() != labels.size()) throw ValidationError("every item needs exactly one label");
    for (int l : labels)
        if (l < 0) throw ValidationError("labels must be nonnegative");
}

LabelAssignment LabelAssignment::from_labels(std::vector<int> labels) {
    std::vector<std::string> items(labels.size());
    for (std::size_t i = 0; i < items.size(); ++i) items[i] = std::to_string(i);
    return {std::move(items), std::move(labels)};
}

NmiNorm parse_nmi_norm(const std::string& name) {
    if (name == "arithmetic") return NmiNorm::arithmetic;
    if (name == "geometric") return NmiNorm::geometric;
    if (name == "min") return NmiNorm::min;
    if (name == "max") return NmiNorm::max;
    throw ValidationError("unknown NMI normalization '" + name + "'");
}

double nmi(const LabelAssignment& a, const LabelAssignment& b, NmiNorm norm) {
    const std::vector<int> lb = matched_labels(a, b);
    if (a.size() == 0) throw ValidationError("nmi: no items");
    const double n = static_cast<double>(a.size());
    std::map<int, long> ca, cb;
    std::map<std::pair<int, int>, long> joint;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++ca[a.labels[i]];
        ++cb[lb[i]];
        ++joint[{a.labels[i], lb[i]}];
    }
    const double ha = entropy(ca, n), hb = entropy(cb, n);
    if (ha == 0.0 && hb == 0.0) return 1.0;
    double mi = 0.0;
    for (const auto& [key, c] : joint) {
        const double pxy = static_cast<double>(c) / n;
        const double px = static_cast<double>(ca[key.first]) / n;
        const double py = static_cast<double>(cb[key.second]) / n;
        mi += pxy * std::log(pxy / (px * py));
    }
    double denom = 0.0;
    switch (norm) {
        case NmiNorm::arithmetic: denom = 0.5 * (ha + hb); break;
        case NmiNorm::geometric: denom = std::sqrt(ha * hb); break;
        case NmiNorm::min: denom = std::min(ha, hb); break;
        case NmiNorm::max: denom = std::max(ha, hb); break;
    }
    if (denom <= 0.0) return 0.0;
    return std::clamp(mi / denom, 0.0, 1.0);
}

std::vector<ClusterRates> cluster_confusion(const LabelAssignment& truth, const LabelAssignment& est) {
    const std::vector<int> le = matched_labels(truth, est);
    std::map<int, std::map<int, long>> table;
    std::map<int, long> est_totals;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++table[truth.labels[i]][le[i]];
        ++est_totals[le[i]];
    }
    const auto n = static_cast<long>(truth.size());
    std::vector<ClusterRates> out;
    for (const auto& [c, row] : table) {
        long size = 0, best = -1;
        int best_label = 0;
        for (const auto& [e, cnt] : row) {
            size += cnt;
            if (cnt > best) {
                best = cnt;
                best_label = e;
            }
        }
        ClusterRates r;
        r.true_label = c;
        r.matched_label = best_label;
        r.size = static_cast<std::size_t>(size);
        r.tpr = static_cast<double>(best) / static_cast<double>(size);
        const long outside = n - size;
        r.fpr = outside > 0 ? static_cast<double>(est_totals[best_label] - best) / static_cast<double>(outside) : 0.0;
        out.push_back(r);
    }
    return out;
}

std::vector<WordId> top_words(std::span<const double> beta_row, std::size_t n) {
    std::vector<WordId> ids(beta_row.size());
    std::iota(ids.begin(), ids.end(), WordId{0});
    n = std::min(n, ids.size());
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), [&](WordId a, WordId b) {
        return beta_row[a] != beta_row[b] ? beta_row[a] > beta_row[b] : a < b;
    });
    ids.resize(n);
    return ids;
}

TopicCoherence topic_coherence(const MatrixD& beta, const Corpus& reference, const CoherenceConfig& cfg) {
    if (cfg.top_words < 2) throw ValidationError("coherence: top_words must be at least 2");
    if (reference.total_docs() == 0) throw ValidationError("coherence: the reference corpus is empty");
    if (beta.cols() != reference.vocab_size())
        throw ValidationError("coherence: beta and the reference corpus use different vocabularies");
    const double D = static_cast<double>(reference.total_docs());

    TopicCoherence out;
    std::vector<std::size_t> position(beta.cols(), SIZE_MAX);
    for (std::size_t t = 0; t < beta.rows(); ++t) {
        const auto words = top_words(beta.row(t), cfg.top_words);
        const std::size_t k = words.size();
        for (std::size_t i = 0; i < k; ++i) position[words[i]] = i;
        std::vector<long> single(k, 0);
        MatrixI pair(k, k, 0);
        std::vector<std::size_t> present;
        for (std::size_t u = 0; u < reference.num_users(); ++u)
            for (const Document& doc : reference.docs(u)) {
                present.clear();
                for (WordId w : doc.words)
                    if (position[w] != SIZE_MAX) present.push_back(position[w]);
                for (std::size_t a = 0; a < present.size(); ++a) {
                    ++single[present[a]];
                    for (std::size_t b = 0; b < present.size(); ++b)
                        if (a != b) ++pair(present[a], present[b]);
                }
            }
        for (WordId w : words) position[w] = SIZE_MAX;

        double score = 0.0;
        bool guarded = false;
        for (std::size_t i = 1; i < k; ++i)
            for (std::size_t j = 0; j < i; ++j) {
                double pj = static_cast<double>(single[j]) / D;
                if (pj == 0.0) {
                    pj = cfg.epsilon;
                    guarded = true;
                }
                score += std::log((static_cast<double>(pair(i, j)) / D + 1.0 / D) / pj);
            }
        out.scores.push_back(score);
        out.top_words.push_back(words);
        out.guarded.push_back(guarded);
    }
    out.mean = out.scores.empty() ? 0.0
                                  : std::accumulate(out.scores.begin(), out.scores.end(), 0.0) /
                                        static_cast<double>(out.scores.size());
    return out;
}

Corpus coherence_reference_corpus(const MatrixD& theta, const MatrixD& beta, std::size_t n_docs, std::size_t doc_len,
                                  std::uint64_t seed, const Vocabulary* vocab) {
    if (vocab && vocab->size() != beta.cols()) throw ValidationError("reference corpus: vocabulary size differs from beta");
    if (theta.cols() != beta.rows()) throw ValidationError("reference corpus: theta and beta disagree on T");
    if (n_docs < 1 || doc_len < 1) throw ValidationError("reference corpus: n_docs and doc_len must be positive");
    std::vector<CategoricalSampler> words;
    for (std::size_t t = 0; t < beta.rows(); ++t) words.emplace_back(beta.row(t));
    std::vector<std::string> users;
    std::vector<std::vector<Document>> docs(theta.rows());
    std::vector<WordId> tokens(doc_len);
    for (std::size_t u = 0; u < theta.rows(); ++u) {
        users.push_back("r" + std::to_string(u));
        Rng rng = Rng::substream(seed, u, 7);
        const CategoricalSampler topic_of(theta.row(u));
        for (std::size_t d = 0; d < n_docs; ++d) {
            for (auto& w : tokens) w = static_cast<WordId>(words[topic_of(rng)](rng));
            docs[u].push_back(Document::from_tokens(users.back() + "_d" + std::to_string(d), users.back(), tokens));
        }
    }
    return Corpus(vocab ? *vocab : synthetic_vocabulary(beta.cols()), std::move(users), std::move(docs));
}

std::vector<int> argmax_rows(const MatrixD& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const auto row = probs.row(r);
        out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

LabelAssignment doc_labels(const Corpus& corpus, std::vector<int> labels) {
    std::vector<std::string> items;
    items.reserve(corpus.total_docs());
    for (std::size_t u = 0; u < corpus.num_users(); ++u)
        for (const Document& doc : corpus.docs(u)) items.push_back(doc.doc_id);
    return {std::move(items), std::move(labels)};
}

LabelAssignment user_labels(const Corpus& corpus, std::vector<int> labels) {
    return {corpus.users(), std::move(labels)};
}

Classification classify(const PosteriorSummary& summary, const Corpus& corpus) {
    return {doc_labels(corpus, argmax_rows(summary.doc_topic_probs)),
            user_labels(corpus, argmax_rows(summary.user_cluster_probs))};
}

}  // namespace stldac
