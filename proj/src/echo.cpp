#include "stldac/echo.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "parallel.hpp"
#include "stldac/error.hpp"

namespace stldac {

namespace {

constexpr std::uint64_t kAverageTag = 21;
constexpr std::uint64_t kMixtureTag = 22;

void require_positive(std::span<const double> p) {
    if (p.empty()) throw DomainError("coverage time: no topics");
    for (std::size_t t = 0; t < p.size(); ++t)
        if (!(p[t] > 0.0))
            throw DomainError("coverage time is infinite: topic " + std::to_string(t) + " has zero probability");
}

void check_rows(std::span<const std::vector<double>> rows, std::span<const std::size_t> sizes) {
    if (rows.empty()) throw ValidationError("coverage time: no clusters");
    if (rows.size() != sizes.size()) throw ValidationError("coverage time: one size per alpha row required");
    for (const auto& row : rows) {
        if (row.size() != rows.front().size()) throw ValidationError("coverage time: alpha rows differ in length");
        for (double a : row)
            if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("coverage time: alpha must be positive");
    }
}

CoverageSample run_replicates(std::size_t n, std::size_t threads,
                              const std::function<CoverageTime(std::size_t)>& one) {
    if (n == 0) throw ValidationError("coverage time: need at least one replicate");
    std::vector<CoverageTime> results(n);
    detail::parallel_for(n, threads, [&](std::size_t r) { results[r] = one(r); });
    CoverageSample out;
    out.draws.reserve(n);
    for (const auto& c : results) {
        out.draws.push_back(c.draws);
        if (c.truncated) ++out.truncated;
    }
    return out;
}

double mean_of(const std::vector<long>& v) {
    double s = 0.0;
    for (long x : v) s += static_cast<double>(x);
    return s / static_cast<double>(v.size());
}

std::string set_label(const std::vector<std::size_t>& set) {
    std::string out;
    for (std::size_t k = 0; k < set.size(); ++k) out += (k ? "+" : "") + std::to_string(set[k]);
    return out;
}

}  // namespace

CoverageTime draw_coverage_time(const CategoricalSampler& sampler, long cap, Rng& rng) {
    const std::size_t T = sampler.dim();
    std::vector<char> seen(T, 0);
    std::size_t remaining = T;
    CoverageTime out;
    while (remaining > 0) {
        if (out.draws >= cap) {
            out.truncated = true;
            return out;
        }
        const std::size_t t = sampler(rng);
        ++out.draws;
        if (!seen[t]) {
            seen[t] = 1;
            --remaining;
        }
    }
    return out;
}

std::vector<double> draw_mixture_proportions(std::span<const std::vector<double>> alpha_rows,
                                             std::span<const std::size_t> sizes, Rng& rng) {
    check_rows(alpha_rows, sizes);
    const std::size_t T = alpha_rows.front().size();
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total == 0) throw ValidationError("coverage time: mixture needs at least one user");
    std::vector<double> mix(T, 0.0);
    for (std::size_t k = 0; k < alpha_rows.size(); ++k) {
        for (std::size_t i = 0; i < sizes[k]; ++i) {
            // A draw with an entry that underflowed to zero is redrawn.
            SimplexVector theta = sample_dirichlet(alpha_rows[k], rng);
            for (int attempt = 0; attempt < 100; ++attempt) {
                const auto& v = theta.values();
                if (std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; })) break;
                theta = sample_dirichlet(alpha_rows[k], rng);
            }
            for (std::size_t t = 0; t < T; ++t) mix[t] += theta[t] / static_cast<double>(total);
        }
    }
    return mix;
}

CoverageSample coverage_time_average(std::span<const double> p, std::size_t n, long cap, std::uint64_t seed,
                                     std::size_t threads) {
    require_positive(p);
    if (cap < static_cast<long>(p.size())) throw ValidationError("coverage time: cap must be at least T");
    const CategoricalSampler sampler(p);
    return run_replicates(n, threads, [&](std::size_t r) {
        Rng rng = Rng::substream(seed, r, kAverageTag);
        return draw_coverage_time(sampler, cap, rng);
    });
}

CoverageSample coverage_time_mixture(std::span<const std::vector<double>> alpha_rows,
                                     std::span<const std::size_t> sizes, std::size_t n, long cap,
                                     std::uint64_t seed, std::size_t threads) {
    check_rows(alpha_rows, sizes);
    if (cap < static_cast<long>(alpha_rows.front().size()))
        throw ValidationError("coverage time: cap must be at least T");
    return run_replicates(n, threads, [&](std::size_t r) {
        Rng rng = Rng::substream(seed, r, kMixtureTag);
        const auto p = draw_mixture_proportions(alpha_rows, sizes, rng);
        require_positive(p);
        return draw_coverage_time(CategoricalSampler(p), cap, rng);
    });
}

SimplexVector combine_clusters_average(std::span<const std::vector<double>> alpha_rows) {
    if (alpha_rows.empty()) throw ValidationError("combine_clusters_average: no rows");
    const std::size_t T = alpha_rows.front().size();
    std::vector<double> p(T, 0.0);
    for (const auto& row : alpha_rows) {
        if (row.size() != T) throw ValidationError("combine_clusters_average: rows differ in length");
        const double total = std::accumulate(row.begin(), row.end(), 0.0);
        if (!(total > 0.0)) throw ValidationError("combine_clusters_average: row has no mass");
        for (std::size_t t = 0; t < T; ++t) p[t] += row[t] / total / static_cast<double>(alpha_rows.size());
    }
    return SimplexVector::from_weights(p);
}

double quantile(std::vector<long> values, double q) {
    if (values.empty()) throw DomainError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return static_cast<double>(values[lo]) + frac * static_cast<double>(values[hi] - values[lo]);
}

void EchoConfig::validate() const {
    const std::size_t G = alpha.rows();
    if (G == 0 || alpha.cols() == 0) throw ValidationError("echo: alpha is empty");
    for (double a : alpha.data())
        if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("echo: alpha entries must be positive");
    if (cluster_sizes.size() != G) throw ValidationError("echo: cluster_sizes needs one entry per cluster");
    if (n_mc == 0) throw ValidationError("echo: n_mc must be at least 1");
    if (cap < static_cast<long>(alpha.cols())) throw ValidationError("echo: cap must be at least T");
    if (threads == 0) throw ValidationError("echo: threads must be positive");
    for (const auto& set : cluster_sets) {
        if (set.empty()) throw ValidationError("echo: empty cluster set");
        for (std::size_t g : set)
            if (g >= G) throw ValidationError("echo: cluster " + std::to_string(g) + " out of range");
    }
}

std::vector<std::vector<std::size_t>> EchoConfig::resolved_sets() const {
    if (!cluster_sets.empty()) return cluster_sets;
    std::vector<std::vector<std::size_t>> sets;
    const std::size_t G = alpha.rows();
    for (std::size_t g = 0; g < G; ++g) sets.push_back({g});
    for (std::size_t a = 0; a < G; ++a)
        for (std::size_t b = a + 1; b < G; ++b) sets.push_back({a, b});
    return sets;
}

EchoReport echo_report(const EchoConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto sets = cfg.resolved_sets();
    const char* regimes[] = {"average", "mixture"};

    EchoReport report;
    std::vector<std::vector<long>> samples;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        std::vector<std::vector<double>> rows;
        std::vector<std::size_t> sizes;
        for (std::size_t g : sets[s]) {
            rows.emplace_back(cfg.alpha.row(g).begin(), cfg.alpha.row(g).end());
            sizes.push_back(cfg.cluster_sizes[g]);
        }
        for (std::size_t regime = 0; regime < 2; ++regime) {
            const std::uint64_t stream_seed = Rng::substream(seed, s, regime).next_u64();
            CoverageSample sample =
                regime == 0 ? coverage_time_average(combine_clusters_average(rows).span(), cfg.n_mc, cfg.cap,
                                                    stream_seed, cfg.threads)
                            : coverage_time_mixture(rows, sizes, cfg.n_mc, cfg.cap, stream_seed, cfg.threads);
            EchoRow row;
            row.clusters = sets[s];
            row.regime = regimes[regime];
            row.median = quantile(sample.draws, 0.5);
            row.lo = quantile(sample.draws, 0.025);
            row.hi = quantile(sample.draws, 0.975);
            row.mean = mean_of(sample.draws);
            row.truncated = sample.truncated;
            report.rows.push_back(std::move(row));
            samples.push_back(std::move(sample.draws));
        }
    }

    // Cohorts: sets of equal size within one regime. Replicate r pits the
    // r-th draw of every member against each other.
    for (std::size_t regime = 0; regime < 2; ++regime) {
        std::vector<std::size_t> sizes_seen;
        for (const auto& set : sets)
            if (std::find(sizes_seen.begin(), sizes_seen.end(), set.size()) == sizes_seen.end())
                sizes_seen.push_back(set.size());
        for (std::size_t size : sizes_seen) {
            std::vector<std::size_t> members;
            for (std::size_t s = 0; s < sets.size(); ++s)
                if (sets[s].size() == size) members.push_back(2 * s + regime);
            std::vector<double> credit(members.size(), 0.0);
            for (std::size_t r = 0; r < cfg.n_mc; ++r) {
                long best = samples[members[0]][r];
                for (std::size_t idx : members) best = std::min(best, samples[idx][r]);
                std::size_t ties = 0;
                for (std::size_t idx : members) ties += samples[idx][r] == best;
                for (std::size_t k = 0; k < members.size(); ++k)
                    if (samples[members[k]][r] == best) credit[k] += 1.0 / static_cast<double>(ties);
            }
            for (std::size_t k = 0; k < members.size(); ++k)
                report.rows[members[k]].pr_first = credit[k] / static_cast<double>(cfg.n_mc);
        }
    }
    return report;
}

io::json to_json(const EchoReport& report) {
    io::json rows = io::json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"clusters", r.clusters}, {"regime", r.regime}, {"median", r.median}, {"lo", r.lo},
                        {"hi", r.hi}, {"mean", r.mean}, {"pr_first", r.pr_first}, {"truncated", r.truncated}});
    io::json out{{"rows", std::move(rows)}};
    io::stamp_schema(out, "stldac.echo_report", 1);
    return out;
}

std::string echo_csv(const EchoReport& report) {
    std::ostringstream out;
    out.precision(10);
    out << "clusters";
    for (const char* regime : {"average", "mixture"})
        for (const char* col : {"median", "lo", "hi", "mean", "pr_first", "truncated"}) out << ',' << regime << '_' << col;
    out << '\n';
    // Rows come in (average, mixture) pairs per cluster set.
    for (std::size_t i = 0; i + 1 < report.rows.size(); i += 2) {
        out << set_label(report.rows[i].clusters);
        for (std::size_t k = i; k < i + 2; ++k) {
            const auto& r = report.rows[k];
            out << ',' << r.median << ',' << r.lo << ',' << r.hi << ',' << r.mean << ',' << r.pr_first << ','
                << r.truncated;
        }
        out << '\n';
    }
    return out.str();
}

EchoConfig echo_config_from_json(const io::json& value, MatrixD alpha) {
    if (!value.is_object()) throw ValidationError("echo config must be an object");
    EchoConfig cfg;
    cfg.alpha = std::move(alpha);
    try {
        cfg.n_mc = value.value("n_mc", cfg.n_mc);
        cfg.cap = value.value("cap", cfg.cap);
        cfg.threads = value.value("threads", cfg.threads);
        if (value.contains("cluster_sizes"))
            cfg.cluster_sizes = value.at("cluster_sizes").get<std::vector<std::size_t>>();
        if (value.contains("cluster_sets"))
            cfg.cluster_sets = value.at("cluster_sets").get<std::vector<std::vector<std::size_t>>>();
    } catch (const io::json::exception& e) {
        throw ValidationError(std::string("echo config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace stldac
