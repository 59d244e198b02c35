#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stldac/corpus.hpp"
#include "stldac/matrix.hpp"
#include "stldac/model.hpp"

namespace stldac {

/// Integer labels for a set of named items (documents or users).
struct LabelAssignment {
    std::vector<std::string> items;
    std::vector<int> labels;

    LabelAssignment() = default;
    LabelAssignment(std::vector<std::string> items, std::vector<int> labels);
    /// Items named "0", "1", ... for quick construction from bare labels.
    static LabelAssignment from_labels(std::vector<int> labels);
    std::size_t size() const noexcept { return labels.size(); }
};

enum class NmiNorm { arithmetic, geometric, min, max };

NmiNorm parse_nmi_norm(const std::string& name);

/// Mutual information normalized to [0, 1]; 1 when both labelings are constant.
/// Items are matched by name; differing item sets raise ValidationError.
double nmi(const LabelAssignment& a, const LabelAssignment& b, NmiNorm norm = NmiNorm::arithmetic);

struct ClusterRates {
    int true_label = 0;
    int matched_label = 0;
    double tpr = 0.0;
    double fpr = 0.0;
    std::size_t size = 0;
};

/// For each true cluster c the estimated cluster capturing most of its
/// members; TPR is that share and FPR the share of items outside c that also
/// carry the matched label. Clusters are reported in increasing label order.
std::vector<ClusterRates> cluster_confusion(const LabelAssignment& truth, const LabelAssignment& est);

struct CoherenceConfig {
    std::size_t top_words = 15;
    /// Stand-in for p(w_j) when a top word never occurs in the reference corpus.
    double epsilon = 1e-12;
};

struct TopicCoherence {
    std::vector<double> scores;
    std::vector<std::vector<WordId>> top_words;
    /// Topics where the epsilon guard was used.
    std::vector<bool> guarded;
    double mean = 0.0;
};

/// Highest-probability words of a beta row, ties broken by smaller word id.
std::vector<WordId> top_words(std::span<const double> beta_row, std::size_t n);

/// sum over i > j of log((p(w_i, w_j) + 1/D) / p(w_j)) with document-presence
/// frequencies on the reference corpus. Less negative is more coherent.
TopicCoherence topic_coherence(const MatrixD& beta, const Corpus& reference, const CoherenceConfig& cfg = {});

/// n_docs documents of doc_len words per user, each word with its own topic
/// drawn from theta_u. Uses synthetic tokens unless a vocabulary is given.
Corpus coherence_reference_corpus(const MatrixD& theta, const MatrixD& beta, std::size_t n_docs,
                                  std::size_t doc_len, std::uint64_t seed, const Vocabulary* vocab = nullptr);

/// Argmax of every row, ties to the lowest index.
std::vector<int> argmax_rows(const MatrixD& probs);

struct Classification {
    LabelAssignment doc_topics;
    LabelAssignment user_clusters;
};

Classification classify(const PosteriorSummary& summary, const Corpus& corpus);

/// Labels for the documents and users of a corpus in its own order.
LabelAssignment doc_labels(const Corpus& corpus, std::vector<int> labels);
LabelAssignment user_labels(const Corpus& corpus, std::vector<int> labels);

}  // namespace stldac
