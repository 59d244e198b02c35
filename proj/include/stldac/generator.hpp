#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stldac/corpus.hpp"
#include "stldac/json_io.hpp"
#include "stldac/matrix.hpp"
#include "stldac/model.hpp"

namespace stldac {

struct SimConfig {
    /// Generative process: "stldac", "stlda" or "clda".
    std::string process = "stldac";
    Hyperparams hp;
    std::size_t V = 4534;
    /// Fixed cluster sizes. When empty, phi ~ Dir(nu) and G_u ~ Cat(phi) for num_users users.
    std::vector<std::size_t> users_per_cluster;
    std::size_t num_users = 0;
    std::size_t docs_per_user = 100;
    std::size_t words_per_doc = 13;
    double beta_sparsity = 0.1;
    /// Used instead of a synthetic beta when set.
    std::optional<MatrixD> beta;
    /// G x T, nonnegative; zero entries are structural zeros of theta.
    MatrixD alpha_spec;

    void validate() const;
    std::size_t total_users() const;
};

struct SimTruth {
    std::vector<std::string> user_ids;
    std::vector<std::string> doc_ids;   // user-major global order
    std::vector<int> z;                 // per document
    std::vector<int> g;                 // per user
    MatrixD theta;                      // U x T
    MatrixD beta;                       // T x V
    MatrixD alpha;                      // G x T, may contain zeros
    std::vector<double> phi;
    /// Per-word topics for each document; only filled by the concatenated-document generator.
    std::vector<std::vector<int>> word_topics;
};

struct Simulation {
    Corpus corpus;
    SimTruth truth;
};

Simulation simulate_stldac(const SimConfig& cfg, std::uint64_t seed);
/// Single cluster with theta_u ~ Dir(1, ..., 1); cfg.alpha_spec is ignored.
Simulation simulate_stlda(const SimConfig& cfg, std::uint64_t seed);
/// One long document per user with per-word topics, chunked sequentially
/// into words_per_doc-word documents. z holds each chunk's majority topic.
Simulation simulate_clda(const SimConfig& cfg, std::uint64_t seed);

/// Dispatches on cfg.process.
Simulation simulate(const SimConfig& cfg, std::uint64_t seed);

/// Sparse topics: ceil(sparsity * V) support words per row with Zipf-shaped
/// jittered weights; rows are redrawn until every pair is at least 0.5 apart
/// in total variation.
MatrixD make_synthetic_beta(std::size_t T, std::size_t V, double sparsity, std::uint64_t seed);

/// Tokens "w0000", "w0001", ...
Vocabulary synthetic_vocabulary(std::size_t V);

double total_variation(std::span<const double> p, std::span<const double> q);

/// Four clusters over ten topics: all topics at 10; topics 0-4 at 20;
/// topics 5-9 at 20; topics 1-4 at 25.
MatrixD four_cluster_alpha();
/// Three clusters over ten topics: all topics at 10; topics 0-4 at 20; topics 5-9 at 20.
MatrixD three_cluster_alpha();

io::json to_json(const SimConfig& cfg);
/// Missing fields keep their defaults; "preset" selects the starting point.
SimConfig sim_config_from_json(const io::json& value);

/// Named presets: "paper-stldac", "paper-stlda", "paper-clda".
SimConfig preset_config(const std::string& name);
bool is_preset(const std::string& name);

inline constexpr int kTruthSchemaVersion = 1;
io::json to_json(const SimTruth& truth);
SimTruth truth_from_json(const io::json& value);
void save_truth(const SimTruth& truth, const std::filesystem::path& path);
SimTruth load_truth(const std::filesystem::path& path);

}  // namespace stldac
