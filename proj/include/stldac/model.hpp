#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "stldac/corpus.hpp"
#include "stldac/json_io.hpp"
#include "stldac/matrix.hpp"
#include "stldac/rng.hpp"

namespace stldac {

/// Prior over a cluster's Dirichlet parameter written as alpha_g = m_g * c_g:
/// m_g ~ Dir(m_concentration), c_g ~ Normal(c_mean, c_sd) truncated to c > 0.
struct AlphaPrior {
    std::vector<double> m_concentration;  // empty means all ones
    double c_mean = 100.0;
    double c_sd = 50.0;

    std::vector<double> m_concentration_for(std::size_t T) const;
};

struct Hyperparams {
    std::size_t T = 10;
    std::size_t G = 4;
    double eta = 1.0;
    double nu = 1.0;
    AlphaPrior alpha_prior;

    /// Throws ValidationError naming the first violated constraint.
    void validate() const;
};

/// Decomposition of a positive alpha row into mean and concentration.
struct AlphaPoint {
    std::vector<double> mean;
    double concentration = 0.0;

    static AlphaPoint from_alpha(std::span<const double> alpha);
    std::vector<double> alpha() const;
};

/// log prior density of (m, c) including the truncation normalizer.
double alpha_prior_log_density(const AlphaPoint& point, const AlphaPrior& prior);
AlphaPoint sample_alpha_prior(std::size_t T, const AlphaPrior& prior, Rng& rng);

struct ModelParams {
    MatrixD alpha;             // G x T, positive
    MatrixD beta;              // T x V, rows on the simplex
    std::vector<double> phi;   // G, on the simplex
};

/// Checks dimensions, positivity of alpha, and simplex rows of beta and phi.
void validate(const ModelParams& params, const Hyperparams& hp, std::size_t V);

/// Integer counts maintained by the collapsed sampler.
struct SufficientStats {
    MatrixI user_topic_counts;       // U x T
    MatrixI topic_word_counts;       // T x V
    std::vector<long> topic_totals;  // T
    std::vector<long> cluster_counts;  // G

    static SufficientStats zeros(std::size_t U, std::size_t T, std::size_t V, std::size_t G);
    /// z is indexed in user-major global document order; g per user.
    static SufficientStats from_assignments(const Corpus& corpus, std::span<const int> z, std::span<const int> g,
                                            std::size_t T, std::size_t G);

    /// sign = +1 adds the document under topic t, -1 removes it.
    void apply_document(const Document& doc, std::size_t u, std::size_t t, int sign);

    friend bool operator==(const SufficientStats&, const SufficientStats&) = default;
};

struct PosteriorSummary {
    MatrixD doc_topic_probs;     // D x T
    MatrixD user_cluster_probs;  // U x G
    MatrixD theta_mean;          // U x T
    MatrixD beta_mean;           // T x V
    MatrixD alpha_mean;          // G x T
    std::vector<double> phi_mean;  // G
};

void validate(const PosteriorSummary& summary);

// Serialization -------------------------------------------------------------

inline constexpr int kModelSchemaVersion = 1;

io::json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const io::json& value);

io::json to_json(const ModelParams& params);
ModelParams model_params_from_json(const io::json& value);
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

io::json to_json(const PosteriorSummary& summary);
PosteriorSummary posterior_summary_from_json(const io::json& value);
void save_summary(const PosteriorSummary& summary, const std::filesystem::path& path);
PosteriorSummary load_summary(const std::filesystem::path& path);

}  // namespace stldac
