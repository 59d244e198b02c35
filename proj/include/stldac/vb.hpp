#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stldac/corpus.hpp"
#include "stldac/json_io.hpp"
#include "stldac/mathcore.hpp"
#include "stldac/model.hpp"

namespace stldac {

/// Per-user variational factors q(g | lambda) q(theta | gamma) prod_d q(z_d | xi_d).
struct UserVariational {
    SimplexVector lambda;            // G
    PositiveVector gamma;            // T
    std::vector<SimplexVector> xi;   // one T-simplex per document

    /// lambda and xi uniform, gamma = sum_g lambda_g alpha_g + n_docs / T.
    static UserVariational initial(const ModelParams& params, std::size_t n_docs);
};

struct VBConfig {
    std::size_t max_outer_iters = 500;
    std::size_t max_inner_iters = 50;
    double elbo_rel_tol = 1e-6;
    /// Per-user inner loop stops when the user's bound moves less than this
    /// fraction of its magnitude.
    double inner_rel_tol = 1e-8;
    std::size_t newton_max_iters = 100;
    double newton_tol = 1e-6;
    /// Clusters whose expected size sum_u lambda_ug is below this keep their alpha.
    double empty_cluster_eps = 1e-8;
    /// beta rows start at normalized 1 + Uniform(0, beta_init_noise).
    double beta_init_noise = 0.5;
    /// Independent initializations; the fit with the highest final bound wins.
    std::size_t n_restarts = 1;
    /// Also refit each user from every one-hot lambda and keep the best bound.
    bool cluster_multistart = true;
    /// After convergence, up to this many trials that move an empty cluster onto
    /// a poorly fitted user and rerun; a trial is kept only if the bound improves.
    std::size_t reseed_attempts = 3;
    std::size_t threads = 1;

    void validate() const;
};

/// The seven bound terms, in order: cluster assignment, theta prior,
/// topic assignment, words, cluster entropy, theta entropy, topic entropy.
inline constexpr std::size_t kElboTerms = 7;
inline constexpr std::array<std::string_view, kElboTerms> kElboTermNames = {
    "cluster", "theta_prior", "topic", "words", "cluster_entropy", "theta_entropy", "topic_entropy"};

using ElboTerms = std::array<double, kElboTerms>;

struct ElboBreakdown {
    std::vector<ElboTerms> per_user;
    ElboTerms totals{};

    double total() const;
};

/// Model parameters with the logs and normalizers the updates reuse.
struct PreparedParams {
    ModelParams params;
    MatrixD log_beta;                  // T x V, -inf where beta is zero
    std::vector<double> log_phi;       // G
    std::vector<double> alpha_log_norm;  // G: log Gamma(sum alpha_g) - sum log Gamma(alpha_gt)
    std::vector<bool> word_seen;       // V: some topic gives the word positive mass

    explicit PreparedParams(ModelParams p);
};

SimplexVector update_lambda(const UserVariational& user, const PreparedParams& pp);
PositiveVector update_gamma(const UserVariational& user, const PreparedParams& pp);
/// Words no topic can emit are skipped. Throws NumericalError naming a word
/// when every topic is excluded by some word of the document.
SimplexVector update_xi(const UserVariational& user, const PreparedParams& pp, const Document& doc,
                        const Vocabulary* vocab = nullptr);

ElboTerms user_elbo(const UserVariational& user, const PreparedParams& pp, std::span<const Document> docs);

/// Called with a rule name and the bound value after that rule was applied.
using ElboObserver = std::function<void(std::string_view rule, double elbo)>;

struct FitUserResult {
    UserVariational user;
    std::size_t cycles = 0;
    double elbo = 0.0;
};

/// Cycles xi (every document), gamma, lambda until converged. When observe is
/// set it receives the user's own bound plus `offset` after every rule.
FitUserResult fit_user(UserVariational user, const PreparedParams& pp, std::span<const Document> docs,
                       const VBConfig& cfg, const ElboObserver& observe = {}, double offset = 0.0);

/// fit_user from the current state and from lambda = e_g, gamma = alpha_g +
/// sum_d xi_d for every cluster g; returns the fit with the highest bound.
/// Only the winner is reported to observe, under the rule "multistart".
FitUserResult fit_user_multistart(UserVariational user, const PreparedParams& pp, std::span<const Document> docs,
                                  const VBConfig& cfg, const ElboObserver& observe = {}, double offset = 0.0);

SimplexVector update_phi_model(std::span<const UserVariational> users);
/// Rows of expected word counts, normalized; rows with no mass become uniform.
MatrixD update_beta(std::span<const UserVariational> users, const Corpus& corpus, std::size_t T);

/// The alpha_g part of the bound: M_g (log Gamma(sum a) - sum log Gamma(a_t)) + sum_t (a_t - 1) s_t,
/// where M_g = sum_u lambda_ug and s_t = sum_u lambda_ug E[log theta_ut].
struct AlphaObjective {
    double mass = 0.0;
    std::vector<double> stats;

    double value(std::span<const double> alpha) const;
    std::vector<double> gradient(std::span<const double> alpha) const;
};

AlphaObjective alpha_objective(std::span<const UserVariational> users, std::size_t g);

struct NewtonResult {
    MatrixD alpha;
    std::size_t iterations = 0;
    bool line_search_exhausted = false;
};

NewtonResult update_alpha_newton(std::span<const UserVariational> users, const MatrixD& alpha, const VBConfig& cfg);

/// Maximizes one cluster's objective from `start`.
std::vector<double> newton_maximize(const AlphaObjective& objective, std::span<const double> start,
                                    const VBConfig& cfg, std::size_t* iterations = nullptr,
                                    bool* exhausted = nullptr);

ElboBreakdown compute_elbo(std::span<const UserVariational> users, const PreparedParams& pp, const Corpus& corpus);

struct ElboTraceRow {
    std::size_t iteration = 0;
    ElboTerms terms{};
    double total = 0.0;
};

struct VBResult {
    ModelParams params;
    std::vector<UserVariational> users;
    std::vector<ElboTraceRow> trace;
    std::size_t iterations = 0;
    bool converged = false;
    bool newton_warning = false;
    std::size_t restart = 0;  // which initialization produced this fit
    std::size_t reseeds = 0;  // accepted empty-cluster trials
};

/// Random initial alpha (c_mean times a Dirichlet(1) point per row), perturbed
/// beta rows and uniform phi.
ModelParams vb_initial_params(const Hyperparams& hp, std::size_t V, const VBConfig& cfg, Rng& rng);

/// Variational EM from `init`. observe, when set, sees the corpus bound after
/// every single update rule (and forces a sequential E-step).
VBResult fit_from(const Corpus& corpus, const Hyperparams& hp, const VBConfig& cfg, ModelParams init,
                  const ElboObserver& observe = {});

VBResult fit(const Corpus& corpus, const Hyperparams& hp, const VBConfig& cfg, std::uint64_t seed,
             const ElboObserver& observe = {});

PosteriorSummary summarize(const VBResult& result, const Corpus& corpus);

io::json to_json(const VBConfig& cfg);
VBConfig vb_config_from_json(const io::json& value);

inline constexpr int kVariationalSchemaVersion = 1;
io::json variational_to_json(const VBResult& result, const Corpus& corpus);
void save_variational(const VBResult& result, const Corpus& corpus, const std::filesystem::path& path);
/// iter, the seven terms, total.
void save_elbo_trace(std::span<const ElboTraceRow> trace, const std::filesystem::path& path);

}  // namespace stldac
