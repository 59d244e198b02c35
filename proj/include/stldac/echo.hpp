#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stldac/json_io.hpp"
#include "stldac/mathcore.hpp"
#include "stldac/matrix.hpp"
#include "stldac/rng.hpp"

namespace stldac {

/// Number of categorical draws until every topic has appeared at least once.
struct CoverageTime {
    long draws = 0;
    bool truncated = false;  // hit the cap before full coverage
};

/// One coverage time under Cat(p). Every p_t must be positive.
CoverageTime draw_coverage_time(const CategoricalSampler& sampler, long cap, Rng& rng);

/// Topic proportions seen by a reader of n users drawn from the given
/// clusters: theta_i ~ Dir(alpha_g) per user, each post from a uniformly
/// chosen user. Returns the mean of the user distributions, which is the
/// per-post topic law given the users.
std::vector<double> draw_mixture_proportions(std::span<const std::vector<double>> alpha_rows,
                                             std::span<const std::size_t> sizes, Rng& rng);

struct CoverageSample {
    std::vector<long> draws;
    std::size_t truncated = 0;
};

/// n replicates under fixed probabilities p. Replicate r uses its own
/// substream of seed, so results do not depend on threads.
CoverageSample coverage_time_average(std::span<const double> p, std::size_t n, long cap, std::uint64_t seed,
                                     std::size_t threads = 1);

/// n replicates; each draws fresh user distributions for the given clusters.
CoverageSample coverage_time_mixture(std::span<const std::vector<double>> alpha_rows,
                                     std::span<const std::size_t> sizes, std::size_t n, long cap,
                                     std::uint64_t seed, std::size_t threads = 1);

/// Average of the normalized rows.
SimplexVector combine_clusters_average(std::span<const std::vector<double>> alpha_rows);

/// Linear interpolation between order statistics (q in [0, 1]).
double quantile(std::vector<long> values, double q);

struct EchoConfig {
    MatrixD alpha;                         // G x T
    std::vector<std::size_t> cluster_sizes;  // users per cluster for the mixture regime
    /// Cluster sets to evaluate; empty means every singleton then every pair.
    std::vector<std::vector<std::size_t>> cluster_sets;
    std::size_t n_mc = 1000;
    long cap = 1'000'000;
    std::size_t threads = 1;

    void validate() const;
    std::vector<std::vector<std::size_t>> resolved_sets() const;
};

struct EchoRow {
    std::vector<std::size_t> clusters;
    std::string regime;  // "average" or "mixture"
    double median = 0.0;
    double lo = 0.0;     // 2.5th percentile
    double hi = 0.0;     // 97.5th percentile
    double mean = 0.0;
    /// Share of replicates in which this set covered all topics first among
    /// the sets of the same size; ties split equally.
    double pr_first = 0.0;
    std::size_t truncated = 0;
};

struct EchoReport {
    std::vector<EchoRow> rows;
};

EchoReport echo_report(const EchoConfig& cfg, std::uint64_t seed);

io::json to_json(const EchoReport& report);
/// One line per cluster set with the average-regime columns followed by the
/// mixture-regime columns (median, lo, hi, mean, pr_first, truncated).
std::string echo_csv(const EchoReport& report);

/// Reads n_mc, cap, threads, cluster_sizes and cluster_sets; alpha is
/// supplied separately by the caller.
EchoConfig echo_config_from_json(const io::json& value, MatrixD alpha);

}  // namespace stldac
