#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "stldac/corpus.hpp"
#include "stldac/json_io.hpp"
#include "stldac/mathcore.hpp"
#include "stldac/model.hpp"
#include "stldac/rng.hpp"

namespace stldac {

struct GibbsConfig {
    std::size_t n_sweeps = 2000;
    std::size_t burn_in = 1000;
    std::size_t thin = 10;
    /// Rounds of {phi, every G_u, every alpha_g} after each topic sweep.
    std::size_t inner_updates_per_sweep = 5;
    /// Random-walk scales on the logit coordinates of m_g and on log c_g.
    double mh_step_m = 0.1;
    double mh_step_c = 0.1;
    /// Rescale MH steps during burn-in toward 20-40% acceptance.
    bool adapt_steps = true;
    /// Visit documents in a fresh random order each sweep instead of user-major order.
    bool random_scan = false;
    /// Topic-only sweeps (users ignored) run before the chain starts.
    std::size_t init_dmm_sweeps = 0;
    /// Relabel clusters of each stored sample to match the previous one.
    bool align_labels = true;
    /// Split-merge Metropolis-Hastings proposals per sweep. Topic moves split a
    /// topic into an empty one or merge two topics; cluster moves do the same
    /// for user clusters, drawing the new alphas log-normally around a
    /// Dirichlet-multinomial fit to the member users' counts.
    std::size_t topic_split_merge = 10;
    std::size_t cluster_split_merge = 10;
    /// Hold alpha at this G x T matrix instead of sampling it.
    std::optional<MatrixD> fixed_alpha;

    /// n_sweeps > burn_in, except n_sweeps == burn_in == 0 which returns the
    /// initialization alone; thin >= 1; positive step sizes.
    void validate() const;
};

struct GibbsState {
    std::vector<int> z;  // per document, user-major order
    std::vector<int> g;  // per user
    MatrixD alpha;       // G x T
    std::vector<double> phi;
    SufficientStats stats;
    std::size_t iteration = 0;
    std::vector<double> step_m;  // per cluster
    std::vector<double> step_c;
};

/// Uniform random z and g, alpha and phi from their priors.
GibbsState initialize_state(const Corpus& corpus, const Hyperparams& hp, const GibbsConfig& cfg, Rng& rng);

/// Full conditional of document (u, d)'s topic. The document must already be
/// removed from state.stats; negative counts raise ConsistencyError.
SimplexVector topic_full_conditional(const GibbsState& state, const Corpus& corpus, const Hyperparams& hp,
                                     std::size_t u, std::size_t d);

/// One sequential pass over all documents.
void sweep_topics(GibbsState& state, const Corpus& corpus, const Hyperparams& hp, Rng& rng,
                  bool random_scan = false);

void resample_phi(GibbsState& state, const Hyperparams& hp, Rng& rng);

/// Probabilities proportional to phi_g * DirMult(Z_u; alpha_g).
std::vector<double> user_cluster_probs(const GibbsState& state, std::size_t u);
int resample_user_cluster(GibbsState& state, const Hyperparams& hp, std::size_t u, Rng& rng);

struct MhOutcome {
    bool accepted = false;
    bool from_prior = false;  // empty cluster: alpha_g redrawn from its prior
};

/// log target of alpha_g in the proposal coordinates: DirMult likelihood of the
/// cluster's users, prior density of (m, c), and the Jacobian log c + sum log m.
double alpha_log_target(const GibbsState& state, const Hyperparams& hp, std::size_t g, std::span<const double> alpha);

/// Random-walk proposal on logit(m_g) and log(c_g) with the given step sizes.
std::vector<double> propose_alpha(std::span<const double> alpha, double step_m, double step_c, Rng& rng);

MhOutcome mh_update_alpha(GibbsState& state, const Hyperparams& hp, std::size_t g, Rng& rng);

struct SplitMergeOutcome {
    bool proposed = false;  // false when no move was possible (e.g. no empty topic for a split)
    bool split = false;
    bool accepted = false;
};

SplitMergeOutcome topic_split_merge(GibbsState& state, const Corpus& corpus, const Hyperparams& hp, Rng& rng);
SplitMergeOutcome cluster_split_merge(GibbsState& state, const Hyperparams& hp, Rng& rng);

/// log p(W, Z, G, phi, alpha) up to no constant (sequence convention for W).
double log_joint(const GibbsState& state, const Corpus& corpus, const Hyperparams& hp);

struct GibbsTrace {
    Hyperparams hp;
    std::size_t num_docs = 0;
    std::size_t num_users = 0;
    std::size_t num_samples = 0;
    std::vector<int> z;          // num_samples x num_docs
    std::vector<int> g;          // num_samples x num_users, aligned labels
    std::vector<double> alpha;   // num_samples x G x T, aligned
    std::vector<double> phi;     // num_samples x G, aligned
    std::vector<double> log_joint;  // one entry per sweep
    std::vector<long> mh_proposed;  // per cluster, after burn-in
    std::vector<long> mh_accepted;
    long topic_moves_proposed = 0;
    long topic_moves_accepted = 0;
    long cluster_moves_proposed = 0;
    long cluster_moves_accepted = 0;
    std::size_t alignment_changes = 0;
    GibbsState final_state;

    std::span<const int> z_sample(std::size_t s) const;
    std::span<const int> g_sample(std::size_t s) const;
    MatrixD alpha_sample(std::size_t s) const;
    std::span<const double> phi_sample(std::size_t s) const;
    void add_sample(std::span<const int> z_s, std::span<const int> g_s, const MatrixD& alpha_s,
                    std::span<const double> phi_s);
};

/// Greedy matching of current cluster labels onto reference labels by user
/// overlap. Returns perm with perm[current] = reference label.
std::vector<int> align_clusters(std::span<const int> reference, std::span<const int> current, std::size_t G);

GibbsTrace run_chain(const Corpus& corpus, const Hyperparams& hp, const GibbsConfig& cfg, std::uint64_t seed);

PosteriorSummary summarize(const GibbsTrace& trace, const Corpus& corpus);

/// Posterior means packaged as model parameters.
ModelParams point_estimate(const PosteriorSummary& summary);

io::json to_json(const GibbsConfig& cfg);
GibbsConfig gibbs_config_from_json(const io::json& value);

inline constexpr int kTraceSchemaVersion = 1;
io::json to_json(const GibbsTrace& trace);
void save_trace(const GibbsTrace& trace, const std::filesystem::path& path);

}  // namespace stldac
