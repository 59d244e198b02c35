#include "stldac/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "stldac/error.hpp"
#include "stldac/mathcore.hpp"
#include "stldac/rng.hpp"

namespace stldac {

namespace {

constexpr std::uint64_t kTagUser = 1;
constexpr std::uint64_t kTagBeta = 2;
constexpr std::uint64_t kTagGlobal = 3;

// theta ~ Dir(alpha) restricted to the coordinates with positive alpha.
std::vector<double> draw_theta(std::span<const double> alpha, Rng& rng) {
    std::vector<std::size_t> support;
    std::vector<double> positive;
    for (std::size_t t = 0; t < alpha.size(); ++t)
        if (alpha[t] > 0.0) {
            support.push_back(t);
            positive.push_back(alpha[t]);
        }
    if (support.empty()) throw ValidationError("alpha row is entirely zero");
    const SimplexVector draw = sample_dirichlet(positive, rng);
    std::vector<double> theta(alpha.size(), 0.0);
    for (std::size_t i = 0; i < support.size(); ++i) theta[support[i]] = draw[i];
    return theta;
}

std::string user_name(std::size_t u) { return "u" + std::to_string(u); }
std::string doc_name(std::size_t u, std::size_t d) { return user_name(u) + "_d" + std::to_string(d); }

struct Layout {
    std::vector<int> g;
    std::vector<double> phi;
};

Layout assign_clusters(const SimConfig& cfg, std::uint64_t seed) {
    Layout layout;
    const std::size_t G = cfg.alpha_spec.rows();
    if (!cfg.users_per_cluster.empty()) {
        const double total = static_cast<double>(cfg.total_users());
        for (std::size_t c = 0; c < G; ++c) {
            layout.phi.push_back(static_cast<double>(cfg.users_per_cluster[c]) / total);
            layout.g.insert(layout.g.end(), cfg.users_per_cluster[c], static_cast<int>(c));
        }
        return layout;
    }
    Rng rng = Rng::substream(seed, 0, kTagGlobal);
    layout.phi = sample_dirichlet(G, cfg.hp.nu, rng).values();
    const CategoricalSampler pick(layout.phi);
    for (std::size_t u = 0; u < cfg.num_users; ++u) layout.g.push_back(static_cast<int>(pick(rng)));
    return layout;
}

MatrixD resolve_beta(const SimConfig& cfg, std::uint64_t seed) {
    if (cfg.beta) return *cfg.beta;
    const std::uint64_t beta_seed = Rng::substream(seed, 0, kTagBeta).next_u64();
    return make_synthetic_beta(cfg.hp.T, cfg.V, cfg.beta_sparsity, beta_seed);
}

SimTruth start_truth(const SimConfig& cfg, const Layout& layout, MatrixD beta) {
    SimTruth truth;
    const std::size_t U = layout.g.size();
    truth.g = layout.g;
    truth.phi = layout.phi;
    truth.alpha = cfg.alpha_spec;
    truth.beta = std::move(beta);
    truth.theta = MatrixD(U, cfg.hp.T, 0.0);
    for (std::size_t u = 0; u < U; ++u) truth.user_ids.push_back(user_name(u));
    return truth;
}

std::vector<CategoricalSampler> topic_samplers(const MatrixD& beta) {
    std::vector<CategoricalSampler> out;
    out.reserve(beta.rows());
    for (std::size_t t = 0; t < beta.rows(); ++t) out.emplace_back(beta.row(t));
    return out;
}

}  // namespace

void SimConfig::validate() const {
    hp.validate();
    if (process != "stldac" && process != "stlda" && process != "clda")
        throw ValidationError("unknown generative process '" + process + "'");
    if (V < 1) throw ValidationError("V must be at least 1");
    if (docs_per_user < 1) throw ValidationError("docs_per_user must be at least 1");
    if (words_per_doc < 1) throw ValidationError("words_per_doc must be at least 1");
    if (!(beta_sparsity > 0.0 && beta_sparsity <= 1.0)) throw ValidationError("beta_sparsity must lie in (0, 1]");
    if (beta) {
        if (beta->rows() != hp.T || beta->cols() != V) throw ValidationError("provided beta must be T x V");
        for (std::size_t t = 0; t < hp.T; ++t)
            if (!is_simplex(beta->row(t), 1e-8))
                throw ValidationError("provided beta row " + std::to_string(t) + " is not on the simplex");
    }
    if (process == "stlda") {
        if (users_per_cluster.empty() && num_users == 0) throw ValidationError("no users configured");
        return;
    }
    if (alpha_spec.rows() != hp.G || alpha_spec.cols() != hp.T)
        throw ValidationError("alpha_spec must be G x T");
    for (std::size_t g = 0; g < hp.G; ++g) {
        bool any = false;
        for (double a : alpha_spec.row(g)) {
            if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("alpha_spec entries must be nonnegative");
            any = any || a > 0.0;
        }
        if (!any) throw ValidationError("alpha_spec row " + std::to_string(g) + " is entirely zero");
    }
    if (!users_per_cluster.empty() && users_per_cluster.size() != hp.G)
        throw ValidationError("users_per_cluster must have G entries");
    if (total_users() == 0) throw ValidationError("no users configured");
}

std::size_t SimConfig::total_users() const {
    if (users_per_cluster.empty()) return num_users;
    return std::accumulate(users_per_cluster.begin(), users_per_cluster.end(), std::size_t{0});
}

Vocabulary synthetic_vocabulary(std::size_t V) {
    int width = 4;
    for (std::size_t cap = 10000; V > cap; cap *= 10) ++width;
    std::vector<std::string> tokens;
    tokens.reserve(V);
    char buf[32];
    for (std::size_t j = 0; j < V; ++j) {
        std::snprintf(buf, sizeof buf, "w%0*zu", width, j);
        tokens.emplace_back(buf);
    }
    return Vocabulary(std::move(tokens));
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw DomainError("total_variation: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

MatrixD make_synthetic_beta(std::size_t T, std::size_t V, double sparsity, std::uint64_t seed) {
    if (!(sparsity > 0.0 && sparsity <= 1.0)) throw DomainError("sparsity must lie in (0, 1]");
    if (T < 1 || V < 1) throw DomainError("make_synthetic_beta: T and V must be positive");
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(sparsity * static_cast<double>(V))));
    Rng rng(seed);
    MatrixD beta(T, V, 0.0);
    std::vector<WordId> ids(V);
    std::vector<double> row(V);
    constexpr int kMaxTries = 1000;
    for (std::size_t t = 0; t < T; ++t) {
        bool accepted = false;
        for (int attempt = 0; attempt < kMaxTries && !accepted; ++attempt) {
            std::iota(ids.begin(), ids.end(), WordId{0});
            for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + rng.uniform_index(V - i)]);
            std::fill(row.begin(), row.end(), 0.0);
            double total = 0.0;
            for (std::size_t r = 0; r < k; ++r) {
                const double w = -std::log(rng.uniform_open()) / static_cast<double>(r + 1);
                row[ids[r]] = w;
                total += w;
            }
            for (double& x : row) x /= total;
            accepted = true;
            for (std::size_t s = 0; s < t && accepted; ++s)
                accepted = total_variation(row, beta.row(s)) >= 0.5;
        }
        if (!accepted)
            throw NumericalError("make_synthetic_beta: could not separate topic " + std::to_string(t) +
                                 "; increase V or lower sparsity");
        std::copy(row.begin(), row.end(), beta.row(t).begin());
    }
    return beta;
}

Simulation simulate_stldac(const SimConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Layout layout = assign_clusters(cfg, seed);
    SimTruth truth = start_truth(cfg, layout, resolve_beta(cfg, seed));
    const auto samplers = topic_samplers(truth.beta);
    const std::size_t U = layout.g.size();

    std::vector<std::vector<Document>> docs(U);
    std::vector<WordId> tokens(cfg.words_per_doc);
    for (std::size_t u = 0; u < U; ++u) {
        Rng rng = Rng::substream(seed, u, kTagUser);
        const auto theta = draw_theta(cfg.alpha_spec.row(static_cast<std::size_t>(layout.g[u])), rng);
        std::copy(theta.begin(), theta.end(), truth.theta.row(u).begin());
        const CategoricalSampler topic_of(theta);
        for (std::size_t d = 0; d < cfg.docs_per_user; ++d) {
            const std::size_t t = topic_of(rng);
            for (auto& w : tokens) w = static_cast<WordId>(samplers[t](rng));
            docs[u].push_back(Document::from_tokens(doc_name(u, d), truth.user_ids[u], tokens));
            truth.doc_ids.push_back(doc_name(u, d));
            truth.z.push_back(static_cast<int>(t));
        }
    }
    return {Corpus(synthetic_vocabulary(cfg.V), truth.user_ids, std::move(docs)), std::move(truth)};
}

Simulation simulate_stlda(const SimConfig& cfg, std::uint64_t seed) {
    SimConfig single = cfg;
    single.process = "stldac";
    single.hp.G = 1;
    single.alpha_spec = MatrixD(1, cfg.hp.T, 1.0);
    single.users_per_cluster = {cfg.total_users()};
    return simulate_stldac(single, seed);
}

Simulation simulate_clda(const SimConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Layout layout = assign_clusters(cfg, seed);
    SimTruth truth = start_truth(cfg, layout, resolve_beta(cfg, seed));
    const auto samplers = topic_samplers(truth.beta);
    const std::size_t U = layout.g.size();
    const std::size_t T = cfg.hp.T;

    std::vector<std::vector<Document>> docs(U);
    std::vector<WordId> tokens(cfg.words_per_doc);
    std::vector<int> topics(cfg.words_per_doc);
    std::vector<long> tally(T);
    for (std::size_t u = 0; u < U; ++u) {
        Rng rng = Rng::substream(seed, u, kTagUser);
        const auto theta = draw_theta(cfg.alpha_spec.row(static_cast<std::size_t>(layout.g[u])), rng);
        std::copy(theta.begin(), theta.end(), truth.theta.row(u).begin());
        const CategoricalSampler topic_of(theta);
        // The long document is generated word by word and cut into consecutive chunks.
        for (std::size_t d = 0; d < cfg.docs_per_user; ++d) {
            std::fill(tally.begin(), tally.end(), 0);
            for (std::size_t i = 0; i < cfg.words_per_doc; ++i) {
                const std::size_t t = topic_of(rng);
                topics[i] = static_cast<int>(t);
                tokens[i] = static_cast<WordId>(samplers[t](rng));
                ++tally[t];
            }
            const auto majority = std::max_element(tally.begin(), tally.end()) - tally.begin();
            docs[u].push_back(Document::from_tokens(doc_name(u, d), truth.user_ids[u], tokens));
            truth.doc_ids.push_back(doc_name(u, d));
            truth.z.push_back(static_cast<int>(majority));
            truth.word_topics.push_back(topics);
        }
    }
    return {Corpus(synthetic_vocabulary(cfg.V), truth.user_ids, std::move(docs)), std::move(truth)};
}

Simulation simulate(const SimConfig& cfg, std::uint64_t seed) {
    if (cfg.process == "stlda") return simulate_stlda(cfg, seed);
    if (cfg.process == "clda") return simulate_clda(cfg, seed);
    return simulate_stldac(cfg, seed);
}

MatrixD four_cluster_alpha() {
    MatrixD a(4, 10, 0.0);
    for (std::size_t t = 0; t < 10; ++t) {
        a(0, t) = 10.0;
        if (t < 5) a(1, t) = 20.0;
        if (t >= 5) a(2, t) = 20.0;
        if (t >= 1 && t <= 4) a(3, t) = 25.0;
    }
    return a;
}

MatrixD three_cluster_alpha() {
    MatrixD a(3, 10, 0.0);
    for (std::size_t t = 0; t < 10; ++t) {
        a(0, t) = 10.0;
        if (t < 5) a(1, t) = 20.0;
        if (t >= 5) a(2, t) = 20.0;
    }
    return a;
}

bool is_preset(const std::string& name) {
    return name == "paper-stldac" || name == "paper-stlda" || name == "paper-clda";
}

SimConfig preset_config(const std::string& name) {
    SimConfig cfg;
    cfg.hp.T = 10;
    cfg.V = 4534;
    cfg.docs_per_user = 100;
    cfg.words_per_doc = 13;
    if (name == "paper-stldac" || name == "paper-clda") {
        cfg.process = name == "paper-stldac" ? "stldac" : "clda";
        cfg.hp.G = 4;
        cfg.alpha_spec = four_cluster_alpha();
        cfg.users_per_cluster = {10, 10, 10, 10};
        return cfg;
    }
    if (name == "paper-stlda") {
        cfg.process = "stlda";
        cfg.hp.G = 1;
        cfg.alpha_spec = MatrixD(1, 10, 1.0);
        cfg.users_per_cluster = {40};
        return cfg;
    }
    throw ValidationError("unknown preset '" + name + "'");
}

namespace {

io::json rows_to_json(const MatrixD& m) {
    io::json rows = io::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

MatrixD rows_from_json(const io::json& value, const char* what) {
    if (!value.is_array() || value.empty()) throw ValidationError(std::string(what) + " must be a nonempty array of rows");
    const std::size_t cols = value.front().size();
    MatrixD m(value.size(), cols);
    for (std::size_t r = 0; r < value.size(); ++r) {
        if (!value[r].is_array() || value[r].size() != cols)
            throw ValidationError(std::string(what) + " rows must be arrays of equal length");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = value[r][c].get<double>();
    }
    return m;
}

}  // namespace

io::json to_json(const SimConfig& cfg) {
    io::json out{{"process", cfg.process},
                 {"hyperparams", to_json(cfg.hp)},
                 {"V", cfg.V},
                 {"users_per_cluster", cfg.users_per_cluster},
                 {"num_users", cfg.num_users},
                 {"docs_per_user", cfg.docs_per_user},
                 {"words_per_doc", cfg.words_per_doc},
                 {"beta_sparsity", cfg.beta_sparsity},
                 {"alpha", rows_to_json(cfg.alpha_spec)}};
    if (cfg.beta) out["beta"] = rows_to_json(*cfg.beta);
    return out;
}

SimConfig sim_config_from_json(const io::json& value) {
    if (!value.is_object()) throw ValidationError("simulation config must be an object");
    SimConfig cfg;
    if (value.contains("preset")) cfg = preset_config(value.at("preset").get<std::string>());
    try {
        cfg.process = value.value("process", cfg.process);
        if (value.contains("hyperparams")) {
            io::json merged = to_json(cfg.hp);
            merged.merge_patch(value.at("hyperparams"));
            cfg.hp = hyperparams_from_json(merged);
        }
        cfg.V = value.value("V", cfg.V);
        cfg.users_per_cluster = value.value("users_per_cluster", cfg.users_per_cluster);
        cfg.num_users = value.value("num_users", cfg.num_users);
        cfg.docs_per_user = value.value("docs_per_user", cfg.docs_per_user);
        cfg.words_per_doc = value.value("words_per_doc", cfg.words_per_doc);
        cfg.beta_sparsity = value.value("beta_sparsity", cfg.beta_sparsity);
        if (value.contains("alpha")) cfg.alpha_spec = rows_from_json(value.at("alpha"), "alpha");
        if (value.contains("beta")) cfg.beta = rows_from_json(value.at("beta"), "beta");
    } catch (const io::json::exception& e) {
        throw ValidationError(std::string("simulation config: ") + e.what());
    }
    if (cfg.process == "stlda") cfg.hp.G = 1;
    cfg.validate();
    return cfg;
}

io::json to_json(const SimTruth& truth) {
    io::json users = io::json::array();
    for (std::size_t u = 0; u < truth.user_ids.size(); ++u) {
        const auto theta = truth.theta.row(u);
        users.push_back({{"user_id", truth.user_ids[u]},
                         {"cluster", truth.g[u]},
                         {"theta", std::vector<double>(theta.begin(), theta.end())}});
    }
    io::json docs = io::json::array();
    for (std::size_t i = 0; i < truth.doc_ids.size(); ++i) {
        io::json d{{"doc_id", truth.doc_ids[i]}, {"topic", truth.z[i]}};
        if (!truth.word_topics.empty()) d["word_topics"] = truth.word_topics[i];
        docs.push_back(std::move(d));
    }
    io::json out{{"users", std::move(users)},
                 {"docs", std::move(docs)},
                 {"alpha", io::to_json(truth.alpha)},
                 {"beta", io::to_json(truth.beta)},
                 {"phi", truth.phi}};
    io::stamp_schema(out, "stldac.truth", kTruthSchemaVersion);
    return out;
}

SimTruth truth_from_json(const io::json& value) {
    io::check_schema(value, "stldac.truth", kTruthSchemaVersion);
    SimTruth truth;
    truth.alpha = io::matrix_from_json(value.at("alpha"));
    truth.beta = io::matrix_from_json(value.at("beta"));
    truth.phi = io::field<std::vector<double>>(value, "phi");
    const auto& users = value.at("users");
    const std::size_t T = truth.beta.rows();
    truth.theta = MatrixD(users.size(), T, 0.0);
    for (std::size_t u = 0; u < users.size(); ++u) {
        truth.user_ids.push_back(io::field<std::string>(users[u], "user_id"));
        truth.g.push_back(io::field<int>(users[u], "cluster"));
        const auto theta = io::field<std::vector<double>>(users[u], "theta");
        if (theta.size() != T) io::throw_corrupt("truth: theta has the wrong length");
        std::copy(theta.begin(), theta.end(), truth.theta.row(u).begin());
    }
    for (const auto& d : value.at("docs")) {
        truth.doc_ids.push_back(io::field<std::string>(d, "doc_id"));
        truth.z.push_back(io::field<int>(d, "topic"));
        if (d.contains("word_topics")) truth.word_topics.push_back(io::field<std::vector<int>>(d, "word_topics"));
    }
    if (!truth.word_topics.empty() && truth.word_topics.size() != truth.doc_ids.size())
        io::throw_corrupt("truth: word_topics present for only some documents");
    return truth;
}

void save_truth(const SimTruth& truth, const std::filesystem::path& path) { io::write_json_file(path, to_json(truth)); }

SimTruth load_truth(const std::filesystem::path& path) { return truth_from_json(io::read_json_file(path)); }

}  // namespace stldac
