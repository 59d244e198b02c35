#include "stldac/vb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "parallel.hpp"
#include "stldac/error.hpp"

namespace stldac {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// x * log(y) with the 0 * log 0 = 0 convention.
double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

SimplexVector normalize_log(std::vector<double> log_w, const char* what) {
    const bool any_finite = std::any_of(log_w.begin(), log_w.end(), [](double v) { return v > kNegInf; });
    if (!any_finite) throw NumericalError(std::string(what) + ": every weight is -inf");
    normalize_log_weights(log_w);
    return SimplexVector::from_weights(log_w);
}

double alpha_log_norm(std::span<const double> alpha) {
    double sum = 0.0, lg = 0.0;
    for (double a : alpha) {
        sum += a;
        lg += log_gamma(a);
    }
    return log_gamma(sum) - lg;
}

double doc_word_log_lik(const PreparedParams& pp, const Document& doc, std::size_t t) {
    double s = 0.0;
    for (std::size_t k = 0; k < doc.words.size(); ++k) {
        const WordId w = doc.words[k];
        if (w >= pp.word_seen.size() || !pp.word_seen[w]) continue;
        s += static_cast<double>(doc.counts[k]) * pp.log_beta(t, w);
    }
    return s;
}

double seen_multinomial_coefficient(const PreparedParams& pp, const Document& doc) {
    std::vector<long> seen;
    seen.reserve(doc.counts.size());
    for (std::size_t k = 0; k < doc.words.size(); ++k)
        if (doc.words[k] < pp.word_seen.size() && pp.word_seen[doc.words[k]]) seen.push_back(doc.counts[k]);
    return log_multinomial_coefficient(seen);
}

double sum_terms(const ElboTerms& t) { return std::accumulate(t.begin(), t.end(), 0.0); }

}  // namespace

UserVariational UserVariational::initial(const ModelParams& params, std::size_t n_docs) {
    const std::size_t G = params.alpha.rows();
    const std::size_t T = params.alpha.cols();
    UserVariational user;
    user.lambda = SimplexVector::uniform(G);
    std::vector<double> gamma(T, static_cast<double>(n_docs) / static_cast<double>(T));
    for (std::size_t g = 0; g < G; ++g)
        for (std::size_t t = 0; t < T; ++t) gamma[t] += user.lambda[g] * params.alpha(g, t);
    user.gamma = PositiveVector(std::move(gamma));
    user.xi.assign(n_docs, SimplexVector::uniform(T));
    return user;
}

void VBConfig::validate() const {
    if (max_outer_iters == 0) throw ValidationError("vb: max_outer_iters must be positive");
    if (max_inner_iters == 0) throw ValidationError("vb: max_inner_iters must be positive");
    if (!(elbo_rel_tol > 0.0)) throw ValidationError("vb: elbo_rel_tol must be positive");
    if (!(inner_rel_tol > 0.0)) throw ValidationError("vb: inner_rel_tol must be positive");
    if (newton_max_iters == 0) throw ValidationError("vb: newton_max_iters must be positive");
    if (!(newton_tol > 0.0)) throw ValidationError("vb: newton_tol must be positive");
    if (!(empty_cluster_eps >= 0.0)) throw ValidationError("vb: empty_cluster_eps must be nonnegative");
    if (!(beta_init_noise > 0.0)) throw ValidationError("vb: beta_init_noise must be positive");
    if (n_restarts == 0) throw ValidationError("vb: n_restarts must be positive");
    if (threads == 0) throw ValidationError("vb: threads must be positive");
}

double ElboBreakdown::total() const { return sum_terms(totals); }

PreparedParams::PreparedParams(ModelParams p) : params(std::move(p)) {
    const std::size_t T = params.beta.rows();
    const std::size_t V = params.beta.cols();
    const std::size_t G = params.alpha.rows();
    log_beta = MatrixD(T, V);
    word_seen.assign(V, false);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t w = 0; w < V; ++w) {
            const double b = params.beta(t, w);
            log_beta(t, w) = b > 0.0 ? std::log(b) : kNegInf;
            if (b > 0.0) word_seen[w] = true;
        }
    log_phi.resize(G);
    alpha_log_norm.resize(G);
    for (std::size_t g = 0; g < G; ++g) {
        log_phi[g] = params.phi[g] > 0.0 ? std::log(params.phi[g]) : kNegInf;
        alpha_log_norm[g] = stldac::alpha_log_norm(params.alpha.row(g));
    }
}

SimplexVector update_lambda(const UserVariational& user, const PreparedParams& pp) {
    const auto e = e_log_theta(user.gamma);
    const std::size_t G = pp.params.alpha.rows();
    std::vector<double> log_w(G);
    for (std::size_t g = 0; g < G; ++g) {
        double s = pp.log_phi[g] + pp.alpha_log_norm[g];
        for (std::size_t t = 0; t < e.size(); ++t) s += (pp.params.alpha(g, t) - 1.0) * e[t];
        log_w[g] = s;
    }
    return normalize_log(std::move(log_w), "update_lambda");
}

PositiveVector update_gamma(const UserVariational& user, const PreparedParams& pp) {
    const std::size_t G = pp.params.alpha.rows();
    const std::size_t T = pp.params.alpha.cols();
    std::vector<double> gamma(T, 0.0);
    for (std::size_t g = 0; g < G; ++g)
        for (std::size_t t = 0; t < T; ++t) gamma[t] += user.lambda[g] * pp.params.alpha(g, t);
    for (const auto& xi : user.xi)
        for (std::size_t t = 0; t < T; ++t) gamma[t] += xi[t];
    return PositiveVector(std::move(gamma));
}

constexpr double kXiFlush = 1e-290;

SimplexVector update_xi(const UserVariational& user, const PreparedParams& pp, const Document& doc,
                        const Vocabulary* vocab) {
    const auto e = e_log_theta(user.gamma);
    std::vector<double> log_w(e.size());
    for (std::size_t t = 0; t < e.size(); ++t) log_w[t] = e[t] + doc_word_log_lik(pp, doc, t);
    if (std::all_of(log_w.begin(), log_w.end(), [](double v) { return v == kNegInf; })) {
        // Name a word that some topic cannot emit.
        std::string name = "?";
        for (std::size_t k = 0; k < doc.words.size(); ++k) {
            const WordId w = doc.words[k];
            if (w >= pp.word_seen.size() || !pp.word_seen[w]) continue;
            bool blocked = false;
            for (std::size_t t = 0; t < e.size(); ++t) blocked = blocked || pp.log_beta(t, w) == kNegInf;
            if (blocked) {
                name = vocab && w < vocab->size() ? vocab->token(w) : "#" + std::to_string(w);
                break;
            }
        }
        throw NumericalError("update_xi: document '" + doc.doc_id + "' has no topic able to emit word '" + name +
                             "'");
    }
    SimplexVector xi = normalize_log(std::move(log_w), "update_xi");
    // Flush vanishing weights: the beta update would underflow them to zero
    // probability while xi still gave the word mass under that topic.
    if (std::any_of(xi.values().begin(), xi.values().end(), [](double x) { return x > 0.0 && x < kXiFlush; })) {
        std::vector<double> w = xi.values();
        for (double& x : w)
            if (x < kXiFlush) x = 0.0;
        xi = SimplexVector::from_weights(w);
    }
    return xi;
}

ElboTerms user_elbo(const UserVariational& user, const PreparedParams& pp, std::span<const Document> docs) {
    const auto e = e_log_theta(user.gamma);
    const std::size_t G = pp.params.alpha.rows();
    const std::size_t T = e.size();
    ElboTerms terms{};
    for (std::size_t g = 0; g < G; ++g) {
        const double l = user.lambda[g];
        if (l == 0.0) continue;
        terms[0] += l * pp.log_phi[g];
        double s = pp.alpha_log_norm[g];
        for (std::size_t t = 0; t < T; ++t) s += (pp.params.alpha(g, t) - 1.0) * e[t];
        terms[1] += l * s;
        terms[4] -= xlogy(l, l);
    }
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const auto& xi = user.xi[d];
        terms[3] += seen_multinomial_coefficient(pp, docs[d]);
        for (std::size_t t = 0; t < T; ++t) {
            if (xi[t] == 0.0) continue;
            terms[2] += xi[t] * e[t];
            terms[3] += xi[t] * doc_word_log_lik(pp, docs[d], t);
            terms[6] -= xlogy(xi[t], xi[t]);
        }
    }
    double gamma_part = alpha_log_norm(user.gamma.span());
    for (std::size_t t = 0; t < T; ++t) gamma_part += (user.gamma[t] - 1.0) * e[t];
    terms[5] = -gamma_part;
    return terms;
}

FitUserResult fit_user(UserVariational user, const PreparedParams& pp, std::span<const Document> docs,
                       const VBConfig& cfg, const ElboObserver& observe, double offset) {
    if (user.xi.size() != docs.size()) throw ValidationError("fit_user: xi count differs from document count");
    auto report = [&](std::string_view rule) {
        if (observe) observe(rule, offset + sum_terms(user_elbo(user, pp, docs)));
    };
    FitUserResult out;
    double prev = sum_terms(user_elbo(user, pp, docs));
    for (std::size_t cycle = 0; cycle < cfg.max_inner_iters; ++cycle) {
        for (std::size_t d = 0; d < docs.size(); ++d) {
            user.xi[d] = update_xi(user, pp, docs[d]);
            report("xi");
        }
        user.gamma = update_gamma(user, pp);
        report("gamma");
        user.lambda = update_lambda(user, pp);
        report("lambda");
        const double cur = sum_terms(user_elbo(user, pp, docs));
        out.cycles = cycle + 1;
        const bool done = std::abs(cur - prev) <= cfg.inner_rel_tol * std::max(1.0, std::abs(cur));
        prev = cur;
        if (done) break;
    }
    out.elbo = prev;
    out.user = std::move(user);
    return out;
}

FitUserResult fit_user_multistart(UserVariational user, const PreparedParams& pp, std::span<const Document> docs,
                                  const VBConfig& cfg, const ElboObserver& observe, double offset) {
    const std::size_t G = pp.params.alpha.rows();
    const std::size_t T = pp.params.alpha.cols();
    std::vector<double> xi_sum(T, 0.0);
    for (const auto& xi : user.xi)
        for (std::size_t t = 0; t < T; ++t) xi_sum[t] += xi[t];
    const UserVariational start = user;
    FitUserResult best = fit_user(std::move(user), pp, docs, cfg, observe, offset);
    if (G < 2) return best;
    for (std::size_t g = 0; g < G; ++g) {
        if (pp.log_phi[g] == kNegInf) continue;
        UserVariational cand = start;
        std::vector<double> onehot(G, 0.0);
        onehot[g] = 1.0;
        cand.lambda = SimplexVector::from_weights(onehot);
        std::vector<double> gamma(T);
        for (std::size_t t = 0; t < T; ++t) gamma[t] = pp.params.alpha(g, t) + xi_sum[t];
        cand.gamma = PositiveVector(std::move(gamma));
        auto r = fit_user(std::move(cand), pp, docs, cfg);
        if (r.elbo > best.elbo) {
            best = std::move(r);
            if (observe) observe("multistart", offset + best.elbo);
        }
    }
    return best;
}

SimplexVector update_phi_model(std::span<const UserVariational> users) {
    if (users.empty()) throw ValidationError("update_phi_model: no users");
    std::vector<double> mass(users.front().lambda.dim(), 0.0);
    for (const auto& u : users)
        for (std::size_t g = 0; g < mass.size(); ++g) mass[g] += u.lambda[g];
    return SimplexVector::from_weights(mass);
}

MatrixD update_beta(std::span<const UserVariational> users, const Corpus& corpus, std::size_t T) {
    const std::size_t V = corpus.vocab_size();
    MatrixD beta(T, V, 0.0);
    for (std::size_t u = 0; u < corpus.num_users(); ++u) {
        const auto docs = corpus.docs(u);
        for (std::size_t d = 0; d < docs.size(); ++d) {
            const auto& xi = users[u].xi[d];
            for (std::size_t t = 0; t < T; ++t) {
                if (xi[t] == 0.0) continue;
                for (std::size_t k = 0; k < docs[d].words.size(); ++k)
                    beta(t, docs[d].words[k]) += xi[t] * static_cast<double>(docs[d].counts[k]);
            }
        }
    }
    for (std::size_t t = 0; t < T; ++t) {
        auto row = beta.row(t);
        const double total = std::accumulate(row.begin(), row.end(), 0.0);
        if (total > 0.0) {
            for (double& b : row) b /= total;
        } else {
            std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(V));
        }
    }
    return beta;
}

double AlphaObjective::value(std::span<const double> alpha) const {
    double v = mass * alpha_log_norm(alpha);
    for (std::size_t t = 0; t < alpha.size(); ++t) v += (alpha[t] - 1.0) * stats[t];
    return v;
}

std::vector<double> AlphaObjective::gradient(std::span<const double> alpha) const {
    const double psi_sum = digamma(std::accumulate(alpha.begin(), alpha.end(), 0.0));
    std::vector<double> grad(alpha.size());
    for (std::size_t t = 0; t < alpha.size(); ++t) grad[t] = mass * (psi_sum - digamma(alpha[t])) + stats[t];
    return grad;
}

AlphaObjective alpha_objective(std::span<const UserVariational> users, std::size_t g) {
    AlphaObjective obj;
    if (users.empty()) return obj;
    obj.stats.assign(users.front().gamma.dim(), 0.0);
    for (const auto& u : users) {
        const double l = u.lambda[g];
        obj.mass += l;
        if (l == 0.0) continue;
        const auto e = e_log_theta(u.gamma);
        for (std::size_t t = 0; t < e.size(); ++t) obj.stats[t] += l * e[t];
    }
    return obj;
}

std::vector<double> newton_maximize(const AlphaObjective& objective, std::span<const double> start,
                                    const VBConfig& cfg, std::size_t* iterations, bool* exhausted) {
    std::vector<double> alpha(start.begin(), start.end());
    const std::size_t T = alpha.size();
    const double scale = std::max(1.0, objective.mass);
    double f = objective.value(alpha);
    std::size_t iter = 0;
    bool stuck = false;
    std::vector<double> h(T), step(T), trial(T);
    for (; iter < cfg.newton_max_iters; ++iter) {
        const auto grad = objective.gradient(alpha);
        double max_abs = 0.0;
        for (double gt : grad) {
            if (!std::isfinite(gt)) throw NumericalError("update_alpha_newton: non-finite gradient");
            max_abs = std::max(max_abs, std::abs(gt));
        }
        if (max_abs < cfg.newton_tol * scale) break;

        // Hessian diag(h) + z 11^T inverted through the rank-one identity.
        const double z = objective.mass * trigamma(std::accumulate(alpha.begin(), alpha.end(), 0.0));
        double sum_gh = 0.0, sum_inv_h = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            h[t] = -objective.mass * trigamma(alpha[t]);
            sum_gh += grad[t] / h[t];
            sum_inv_h += 1.0 / h[t];
        }
        const double b = sum_gh / (1.0 / z + sum_inv_h);
        for (std::size_t t = 0; t < T; ++t) step[t] = (grad[t] - b) / h[t];

        double s = 1.0;
        bool moved = false;
        for (int k = 0; k < 60; ++k, s *= 0.5) {
            bool positive = true;
            for (std::size_t t = 0; t < T; ++t) {
                trial[t] = alpha[t] - s * step[t];
                positive = positive && trial[t] > 0.0;
            }
            if (!positive) continue;
            const double ft = objective.value(trial);
            if (ft >= f) {
                moved = true;
                f = ft;
                alpha = trial;
                break;
            }
        }
        if (!moved) {
            stuck = true;
            break;
        }
    }
    if (iterations) *iterations = iter;
    if (exhausted) *exhausted = stuck;
    return alpha;
}

NewtonResult update_alpha_newton(std::span<const UserVariational> users, const MatrixD& alpha, const VBConfig& cfg) {
    NewtonResult out;
    out.alpha = alpha;
    for (std::size_t g = 0; g < alpha.rows(); ++g) {
        const auto obj = alpha_objective(users, g);
        if (obj.mass < cfg.empty_cluster_eps) continue;
        std::size_t iters = 0;
        bool exhausted = false;
        const auto row = newton_maximize(obj, alpha.row(g), cfg, &iters, &exhausted);
        std::copy(row.begin(), row.end(), out.alpha.row(g).begin());
        out.iterations = std::max(out.iterations, iters);
        out.line_search_exhausted = out.line_search_exhausted || exhausted;
    }
    return out;
}

ElboBreakdown compute_elbo(std::span<const UserVariational> users, const PreparedParams& pp, const Corpus& corpus) {
    ElboBreakdown out;
    out.per_user.reserve(users.size());
    for (std::size_t u = 0; u < users.size(); ++u) {
        out.per_user.push_back(user_elbo(users[u], pp, corpus.docs(u)));
        for (std::size_t k = 0; k < kElboTerms; ++k) out.totals[k] += out.per_user.back()[k];
    }
    for (std::size_t k = 0; k < kElboTerms; ++k)
        if (std::isnan(out.totals[k]) || out.totals[k] == std::numeric_limits<double>::infinity())
            throw NumericalError("compute_elbo: term '" + std::string(kElboTermNames[k]) + "' is not finite");
    return out;
}

ModelParams vb_initial_params(const Hyperparams& hp, std::size_t V, const VBConfig& cfg, Rng& rng) {
    if (!(hp.alpha_prior.c_mean > 0.0)) throw ValidationError("vb: initialization needs alpha_prior.c_mean > 0");
    ModelParams p;
    p.alpha = MatrixD(hp.G, hp.T);
    const double floor = 1e-6 * hp.alpha_prior.c_mean;
    for (std::size_t g = 0; g < hp.G; ++g) {
        const auto m = sample_dirichlet(hp.T, 1.0, rng);
        for (std::size_t t = 0; t < hp.T; ++t) p.alpha(g, t) = std::max(hp.alpha_prior.c_mean * m[t], floor);
    }
    p.beta = MatrixD(hp.T, V);
    for (std::size_t t = 0; t < hp.T; ++t) {
        auto row = p.beta.row(t);
        for (double& b : row) b = 1.0 + cfg.beta_init_noise * rng.uniform();
        const double total = std::accumulate(row.begin(), row.end(), 0.0);
        for (double& b : row) b /= total;
    }
    p.phi.assign(hp.G, 1.0 / static_cast<double>(hp.G));
    return p;
}

namespace {

// Variational EM from the given state until the bound settles; appends to
// out.trace and continues its iteration count.
void run_em(const Corpus& corpus, const Hyperparams& hp, const VBConfig& cfg, std::vector<UserVariational>& users,
            std::unique_ptr<PreparedParams>& pp, VBResult& out, const ElboObserver& observe) {
    const std::size_t U = corpus.num_users();
    std::vector<double> user_totals(U, 0.0);
    auto corpus_total = [&] { return std::accumulate(user_totals.begin(), user_totals.end(), 0.0); };
    auto report_global = [&](std::string_view rule) {
        if (!observe) return;
        observe(rule, compute_elbo(users, *pp, corpus).total());
    };
    if (observe)
        for (std::size_t u = 0; u < U; ++u) user_totals[u] = sum_terms(user_elbo(users[u], *pp, corpus.docs(u)));

    out.converged = false;
    double prev = kNegInf;
    for (std::size_t k = 1; k <= cfg.max_outer_iters; ++k) {
        if (observe) {
            for (std::size_t u = 0; u < U; ++u) {
                const double offset = corpus_total() - user_totals[u];
                auto r = cfg.cluster_multistart
                             ? fit_user_multistart(std::move(users[u]), *pp, corpus.docs(u), cfg, observe, offset)
                             : fit_user(std::move(users[u]), *pp, corpus.docs(u), cfg, observe, offset);
                users[u] = std::move(r.user);
                user_totals[u] = r.elbo;
            }
        } else {
            detail::parallel_for(U, cfg.threads, [&](std::size_t u) {
                users[u] = cfg.cluster_multistart ? fit_user_multistart(std::move(users[u]), *pp, corpus.docs(u), cfg).user
                                                  : fit_user(std::move(users[u]), *pp, corpus.docs(u), cfg).user;
            });
        }

        ModelParams next = pp->params;
        next.phi = update_phi_model(users).values();
        pp = std::make_unique<PreparedParams>(std::move(next));
        report_global("phi");

        next = pp->params;
        next.beta = update_beta(users, corpus, hp.T);
        pp = std::make_unique<PreparedParams>(std::move(next));
        report_global("beta");

        next = pp->params;
        auto newton = update_alpha_newton(users, next.alpha, cfg);
        out.newton_warning = out.newton_warning || newton.line_search_exhausted;
        next.alpha = std::move(newton.alpha);
        pp = std::make_unique<PreparedParams>(std::move(next));

        const auto elbo = compute_elbo(users, *pp, corpus);
        const double total = elbo.total();
        if (observe) {
            observe("alpha", total);
            for (std::size_t u = 0; u < U; ++u) user_totals[u] = sum_terms(elbo.per_user[u]);
        }
        out.iterations += 1;
        out.trace.push_back({out.iterations, elbo.totals, total});
        if (std::abs(total - prev) < cfg.elbo_rel_tol * std::abs(total)) {
            out.converged = true;
            break;
        }
        prev = total;
    }
}

// Points an empty cluster at the user whose topic mixture its own cluster
// explains worst. Returns false when no cluster is empty or no user is left.
bool reseed_empty_cluster(std::vector<UserVariational>& users, ModelParams& params, std::vector<bool>& tried) {
    const std::size_t G = params.alpha.rows();
    const std::size_t T = params.alpha.cols();
    std::vector<double> mass(G, 0.0);
    for (const auto& u : users)
        for (std::size_t g = 0; g < G; ++g) mass[g] += u.lambda[g];
    const auto empty = std::min_element(mass.begin(), mass.end());
    if (*empty >= 1.0) return false;
    const std::size_t g_new = static_cast<std::size_t>(empty - mass.begin());

    std::size_t worst = users.size();
    double worst_fit = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < users.size(); ++u) {
        if (tried[u]) continue;
        const auto e = e_log_theta(users[u].gamma);
        double fit = 0.0;
        for (std::size_t g = 0; g < G; ++g) {
            const auto a = params.alpha.row(g);
            double f = stldac::alpha_log_norm(a);
            for (std::size_t t = 0; t < T; ++t) f += (a[t] - 1.0) * e[t];
            fit += users[u].lambda[g] * f;
        }
        if (fit < worst_fit) {
            worst_fit = fit;
            worst = u;
        }
    }
    if (worst == users.size()) return false;
    tried[worst] = true;

    UserVariational& u = users[worst];
    const std::size_t g_old = static_cast<std::size_t>(
        std::max_element(u.lambda.values().begin(), u.lambda.values().end()) - u.lambda.values().begin());
    const auto old_row = params.alpha.row(g_old);
    const double scale = std::accumulate(old_row.begin(), old_row.end(), 0.0);
    const double gamma_total = std::accumulate(u.gamma.values().begin(), u.gamma.values().end(), 0.0);
    for (std::size_t t = 0; t < T; ++t) params.alpha(g_new, t) = scale * u.gamma[t] / gamma_total;
    std::vector<double> onehot(G, 0.0);
    onehot[g_new] = 1.0;
    u.lambda = SimplexVector::from_weights(onehot);
    std::vector<double> phi = params.phi;
    phi[g_new] = std::max(phi[g_new], 1.0 / static_cast<double>(users.size()));
    params.phi = SimplexVector::from_weights(phi).values();
    return true;
}

}  // namespace

VBResult fit_from(const Corpus& corpus, const Hyperparams& hp, const VBConfig& cfg, ModelParams init,
                  const ElboObserver& observe) {
    hp.validate();
    cfg.validate();
    if (corpus.empty()) throw CorpusError("vb: empty corpus");
    validate(init, hp, corpus.vocab_size());
    const std::size_t U = corpus.num_users();

    VBResult out;
    std::vector<UserVariational> users(U);
    for (std::size_t u = 0; u < U; ++u) users[u] = UserVariational::initial(init, corpus.num_docs(u));
    auto pp = std::make_unique<PreparedParams>(std::move(init));
    run_em(corpus, hp, cfg, users, pp, out, observe);

    // Trials run on copies; only a fit that ends with a higher bound replaces
    // the current one, so the reported bound never goes down.
    std::vector<bool> tried(U, false);
    for (std::size_t attempt = 0; attempt < cfg.reseed_attempts; ++attempt) {
        std::vector<UserVariational> trial_users = users;
        ModelParams trial_params = pp->params;
        if (!reseed_empty_cluster(trial_users, trial_params, tried)) break;
        auto trial_pp = std::make_unique<PreparedParams>(std::move(trial_params));
        VBResult trial;
        run_em(corpus, hp, cfg, trial_users, trial_pp, trial, {});
        const double current = out.trace.back().total;
        const double proposed = trial.trace.back().total;
        if (!(proposed > current + cfg.elbo_rel_tol * std::abs(current))) continue;
        users = std::move(trial_users);
        pp = std::move(trial_pp);
        out.iterations += trial.iterations;
        out.trace.push_back({out.iterations, trial.trace.back().terms, proposed});
        out.converged = trial.converged;
        out.newton_warning = out.newton_warning || trial.newton_warning;
        out.reseeds += 1;
        std::fill(tried.begin(), tried.end(), false);
        if (observe) observe("reseed", proposed);
    }
    out.params = pp->params;
    out.users = std::move(users);
    return out;
}

VBResult fit(const Corpus& corpus, const Hyperparams& hp, const VBConfig& cfg, std::uint64_t seed,
             const ElboObserver& observe) {
    cfg.validate();
    hp.validate();
    VBResult best;
    bool have = false;
    for (std::size_t r = 0; r < cfg.n_restarts; ++r) {
        Rng rng = Rng::substream(seed, r, 11);
        auto result = fit_from(corpus, hp, cfg, vb_initial_params(hp, corpus.vocab_size(), cfg, rng), observe);
        result.restart = r;
        if (!have || result.trace.back().total > best.trace.back().total) {
            best = std::move(result);
            have = true;
        }
    }
    return best;
}

PosteriorSummary summarize(const VBResult& result, const Corpus& corpus) {
    const std::size_t T = result.params.alpha.cols();
    const std::size_t G = result.params.alpha.rows();
    const std::size_t U = corpus.num_users();
    PosteriorSummary s;
    s.doc_topic_probs = MatrixD(corpus.total_docs(), T);
    s.user_cluster_probs = MatrixD(U, G);
    s.theta_mean = MatrixD(U, T);
    for (std::size_t u = 0; u < U; ++u) {
        const auto& user = result.users[u];
        for (std::size_t d = 0; d < user.xi.size(); ++d)
            for (std::size_t t = 0; t < T; ++t) s.doc_topic_probs(corpus.doc_offset(u) + d, t) = user.xi[d][t];
        for (std::size_t g = 0; g < G; ++g) s.user_cluster_probs(u, g) = user.lambda[g];
        const double total = user.gamma.sum();
        for (std::size_t t = 0; t < T; ++t) s.theta_mean(u, t) = user.gamma[t] / total;
    }
    s.beta_mean = result.params.beta;
    s.alpha_mean = result.params.alpha;
    s.phi_mean = result.params.phi;
    return s;
}

io::json to_json(const VBConfig& cfg) {
    return {{"max_outer_iters", cfg.max_outer_iters}, {"max_inner_iters", cfg.max_inner_iters},
            {"elbo_rel_tol", cfg.elbo_rel_tol},       {"inner_rel_tol", cfg.inner_rel_tol},
            {"newton_max_iters", cfg.newton_max_iters}, {"newton_tol", cfg.newton_tol},
            {"empty_cluster_eps", cfg.empty_cluster_eps}, {"beta_init_noise", cfg.beta_init_noise},
            {"n_restarts", cfg.n_restarts},           {"cluster_multistart", cfg.cluster_multistart},
            {"reseed_attempts", cfg.reseed_attempts}, {"threads", cfg.threads}};
}

VBConfig vb_config_from_json(const io::json& value) {
    VBConfig cfg;
    if (!value.is_object()) throw ValidationError("vb config must be an object");
    try {
        cfg.max_outer_iters = value.value("max_outer_iters", cfg.max_outer_iters);
        cfg.max_inner_iters = value.value("max_inner_iters", cfg.max_inner_iters);
        cfg.elbo_rel_tol = value.value("elbo_rel_tol", cfg.elbo_rel_tol);
        cfg.inner_rel_tol = value.value("inner_rel_tol", cfg.inner_rel_tol);
        cfg.newton_max_iters = value.value("newton_max_iters", cfg.newton_max_iters);
        cfg.newton_tol = value.value("newton_tol", cfg.newton_tol);
        cfg.empty_cluster_eps = value.value("empty_cluster_eps", cfg.empty_cluster_eps);
        cfg.beta_init_noise = value.value("beta_init_noise", cfg.beta_init_noise);
        cfg.n_restarts = value.value("n_restarts", cfg.n_restarts);
        cfg.cluster_multistart = value.value("cluster_multistart", cfg.cluster_multistart);
        cfg.reseed_attempts = value.value("reseed_attempts", cfg.reseed_attempts);
        cfg.threads = value.value("threads", cfg.threads);
    } catch (const io::json::exception& e) {
        throw ValidationError(std::string("vb config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

io::json variational_to_json(const VBResult& result, const Corpus& corpus) {
    io::json users = io::json::array();
    for (std::size_t u = 0; u < corpus.num_users(); ++u) {
        const auto& user = result.users[u];
        io::json docs = io::json::array();
        for (std::size_t d = 0; d < user.xi.size(); ++d)
            docs.push_back({{"doc_id", corpus.doc(u, d).doc_id}, {"xi", user.xi[d].values()}});
        users.push_back({{"user_id", corpus.user_id(u)},
                         {"lambda", user.lambda.values()},
                         {"gamma", user.gamma.values()},
                         {"docs", std::move(docs)}});
    }
    io::json out{{"iterations", result.iterations},
                 {"converged", result.converged},
                 {"newton_warning", result.newton_warning},
                 {"restart", result.restart},
                 {"reseeds", result.reseeds},
                 {"users", std::move(users)}};
    io::stamp_schema(out, "stldac.variational", kVariationalSchemaVersion);
    return out;
}

void save_variational(const VBResult& result, const Corpus& corpus, const std::filesystem::path& path) {
    io::write_json_file(path, variational_to_json(result, corpus));
}

void save_elbo_trace(std::span<const ElboTraceRow> trace, const std::filesystem::path& path) {
    std::ostringstream out;
    out.precision(17);
    out << "iter";
    for (auto name : kElboTermNames) out << ',' << name;
    out << ",total\n";
    for (const auto& row : trace) {
        out << row.iteration;
        for (double v : row.terms) out << ',' << v;
        out << ',' << row.total << '\n';
    }
    io::write_text_file(path, out.str());
}

}  // namespace stldac
