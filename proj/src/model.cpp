#include "stldac/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "stldac/error.hpp"
#include "stldac/mathcore.hpp"

namespace stldac {

namespace {

std::string dims(std::size_t r, std::size_t c) {
    std::ostringstream os;
    os << r << "x" << c;
    return os.str();
}

}  // namespace

std::vector<double> AlphaPrior::m_concentration_for(std::size_t T) const {
    if (m_concentration.empty()) return std::vector<double>(T, 1.0);
    if (m_concentration.size() != T) throw ValidationError("alpha_prior.m_concentration length must equal T");
    return m_concentration;
}

void Hyperparams::validate() const {
    if (T < 1) throw ValidationError("hyperparams: T must be at least 1");
    if (G < 1) throw ValidationError("hyperparams: G must be at least 1");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ValidationError("hyperparams: eta must be positive");
    if (!(nu > 0.0) || !std::isfinite(nu)) throw ValidationError("hyperparams: nu must be positive");
    if (!(alpha_prior.c_sd > 0.0) || !std::isfinite(alpha_prior.c_sd))
        throw ValidationError("hyperparams: alpha_prior.c_sd must be positive");
    if (!std::isfinite(alpha_prior.c_mean)) throw ValidationError("hyperparams: alpha_prior.c_mean must be finite");
    for (double a : alpha_prior.m_concentration_for(T))
        if (!(a > 0.0)) throw ValidationError("hyperparams: alpha_prior.m_concentration must be positive");
}

AlphaPoint AlphaPoint::from_alpha(std::span<const double> alpha) {
    AlphaPoint p;
    double sum = 0.0;
    for (double a : alpha) {
        if (!(a > 0.0)) throw DomainError("alpha entries must be positive");
        sum += a;
    }
    p.concentration = sum;
    p.mean.reserve(alpha.size());
    for (double a : alpha) p.mean.push_back(a / sum);
    return p;
}

std::vector<double> AlphaPoint::alpha() const {
    std::vector<double> out(mean.size());
    for (std::size_t t = 0; t < mean.size(); ++t) out[t] = mean[t] * concentration;
    return out;
}

double alpha_prior_log_density(const AlphaPoint& point, const AlphaPrior& prior) {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    if (!(point.concentration > 0.0)) return kNegInf;
    const auto a = prior.m_concentration_for(point.mean.size());
    double a_sum = 0.0;
    double log_dir = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (!(point.mean[t] > 0.0)) return kNegInf;
        a_sum += a[t];
        log_dir += (a[t] - 1.0) * std::log(point.mean[t]) - std::lgamma(a[t]);
    }
    log_dir += std::lgamma(a_sum);

    const double z = (point.concentration - prior.c_mean) / prior.c_sd;
    const double log_mass_positive = std::log(0.5 * std::erfc(-(prior.c_mean / prior.c_sd) / std::numbers::sqrt2));
    const double log_norm = -0.5 * z * z - std::log(prior.c_sd) - 0.5 * std::log(2.0 * std::numbers::pi) -
                            log_mass_positive;
    return log_dir + log_norm;
}

AlphaPoint sample_alpha_prior(std::size_t T, const AlphaPrior& prior, Rng& rng) {
    AlphaPoint p;
    p.mean = sample_dirichlet(prior.m_concentration_for(T), rng).values();
    // Floor at the smallest normal double so alpha stays strictly positive.
    for (double& m : p.mean) m = std::max(m, std::numeric_limits<double>::min());
    for (int tries = 0; tries < 100000; ++tries) {
        const double c = prior.c_mean + prior.c_sd * rng.normal();
        if (c > 0.0) {
            p.concentration = c;
            return p;
        }
    }
    throw NumericalError("truncated normal prior for c_g has negligible mass above zero");
}

void validate(const ModelParams& params, const Hyperparams& hp, std::size_t V) {
    hp.validate();
    if (params.alpha.rows() != hp.G || params.alpha.cols() != hp.T)
        throw ValidationError("alpha has shape " + dims(params.alpha.rows(), params.alpha.cols()) + ", expected " +
                              dims(hp.G, hp.T));
    if (params.beta.rows() != hp.T || params.beta.cols() != V)
        throw ValidationError("beta has shape " + dims(params.beta.rows(), params.beta.cols()) + ", expected " +
                              dims(hp.T, V));
    if (params.phi.size() != hp.G) throw ValidationError("phi has the wrong length");
    for (std::size_t g = 0; g < hp.G; ++g)
        for (std::size_t t = 0; t < hp.T; ++t) {
            const double a = params.alpha(g, t);
            if (!(a > 0.0) || !std::isfinite(a)) {
                std::ostringstream msg;
                msg << "positivity violation: alpha(" << g << "," << t << ") = " << a;
                throw ValidationError(msg.str());
            }
        }
    for (std::size_t t = 0; t < hp.T; ++t)
        if (!is_simplex(params.beta.row(t), 1e-8))
            throw ValidationError("simplex violation: beta row " + std::to_string(t));
    if (!is_simplex(params.phi, 1e-8)) throw ValidationError("simplex violation: phi");
}

SufficientStats SufficientStats::zeros(std::size_t U, std::size_t T, std::size_t V, std::size_t G) {
    SufficientStats s;
    s.user_topic_counts = MatrixI(U, T, 0);
    s.topic_word_counts = MatrixI(T, V, 0);
    s.topic_totals.assign(T, 0);
    s.cluster_counts.assign(G, 0);
    return s;
}

SufficientStats SufficientStats::from_assignments(const Corpus& corpus, std::span<const int> z,
                                                  std::span<const int> g, std::size_t T, std::size_t G) {
    if (z.size() != corpus.total_docs()) throw ValidationError("topic assignments do not cover the corpus");
    if (g.size() != corpus.num_users()) throw ValidationError("cluster assignments do not cover the users");
    SufficientStats s = zeros(corpus.num_users(), T, corpus.vocab_size(), G);
    for (std::size_t u = 0; u < corpus.num_users(); ++u) {
        if (g[u] < 0 || static_cast<std::size_t>(g[u]) >= G) throw ValidationError("cluster id out of range");
        ++s.cluster_counts[static_cast<std::size_t>(g[u])];
        const std::size_t off = corpus.doc_offset(u);
        for (std::size_t d = 0; d < corpus.num_docs(u); ++d) {
            const int t = z[off + d];
            if (t < 0 || static_cast<std::size_t>(t) >= T) throw ValidationError("topic id out of range");
            s.apply_document(corpus.doc(u, d), u, static_cast<std::size_t>(t), +1);
        }
    }
    return s;
}

void SufficientStats::apply_document(const Document& doc, std::size_t u, std::size_t t, int sign) {
    user_topic_counts(u, t) += sign;
    auto row = topic_word_counts.row(t);
    long total = 0;
    for (std::size_t i = 0; i < doc.words.size(); ++i) {
        row[doc.words[i]] += sign * doc.counts[i];
        total += doc.counts[i];
    }
    topic_totals[t] += sign * total;
}

void validate(const PosteriorSummary& s) {
    auto check_rows = [](const MatrixD& m, const char* name) {
        for (std::size_t r = 0; r < m.rows(); ++r)
            if (!is_simplex(m.row(r), 1e-8))
                throw ValidationError(std::string("simplex violation: ") + name + " row " + std::to_string(r));
    };
    check_rows(s.doc_topic_probs, "doc_topic_probs");
    check_rows(s.user_cluster_probs, "user_cluster_probs");
    check_rows(s.theta_mean, "theta_mean");
    check_rows(s.beta_mean, "beta_mean");
    if (!s.phi_mean.empty() && !is_simplex(s.phi_mean, 1e-8)) throw ValidationError("simplex violation: phi_mean");
    for (double a : s.alpha_mean.data())
        if (!(a > 0.0)) throw ValidationError("positivity violation: alpha_mean");
}

}  // namespace stldac
