#include "stldac/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "stldac/error.hpp"

namespace stldac {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kAdaptWindow = 50;

double topic_log_weight(const GibbsState& s, const Document& doc, std::size_t u, std::size_t t, const Hyperparams& hp,
                        std::size_t V) {
    const long z_ut = s.stats.user_topic_counts(u, t);
    const long n_t = s.stats.topic_totals[t];
    if (z_ut < 0 || n_t < 0) throw ConsistencyError("sufficient statistics went negative for topic " + std::to_string(t));
    double lw = std::log(s.alpha(static_cast<std::size_t>(s.g[u]), t) + static_cast<double>(z_ut));
    const auto wrow = s.stats.topic_word_counts.row(t);
    for (std::size_t i = 0; i < doc.words.size(); ++i) {
        const long c = wrow[doc.words[i]];
        if (c < 0) throw ConsistencyError("topic-word count went negative for topic " + std::to_string(t));
        lw += log_rising_factorial(hp.eta + static_cast<double>(c), doc.counts[i]);
    }
    return lw - log_rising_factorial(static_cast<double>(V) * hp.eta + static_cast<double>(n_t), doc.length());
}

void topic_log_weights(const GibbsState& s, const Document& doc, std::size_t u, const Hyperparams& hp,
                       std::size_t V, std::span<double> out) {
    for (std::size_t t = 0; t < hp.T; ++t) out[t] = topic_log_weight(s, doc, u, t, hp, V);
}

// log of the collapsed topic-word term for one topic.
double topic_word_term(const SufficientStats& stats, std::size_t t, const Hyperparams& hp, std::size_t V) {
    const double v_eta = static_cast<double>(V) * hp.eta;
    const double lg_eta = std::lgamma(hp.eta);
    double lp = std::lgamma(v_eta) - std::lgamma(v_eta + static_cast<double>(stats.topic_totals[t]));
    for (long c : stats.topic_word_counts.row(t))
        if (c > 0) lp += std::lgamma(hp.eta + static_cast<double>(c)) - lg_eta;
    return lp;
}

double user_term(const GibbsState& s, std::size_t u) {
    return dirichlet_multinomial_log_prob(s.stats.user_topic_counts.row(u), s.alpha.row(static_cast<std::size_t>(s.g[u])));
}

// log multivariate beta function.
double log_beta_fn(std::span<const double> v) {
    double lp = 0.0, sum = 0.0;
    for (double x : v) {
        lp += std::lgamma(x);
        sum += x;
    }
    return lp - std::lgamma(sum);
}

std::vector<double> nu_plus(const std::vector<long>& counts, double nu) {
    std::vector<double> out(counts.size());
    for (std::size_t g = 0; g < counts.size(); ++g) out[g] = nu + static_cast<double>(counts[g]);
    return out;
}

// Proposal for a cluster's alpha in split-merge moves: independent log-normal
// coordinates centred on the Dirichlet-multinomial maximum-likelihood fit to
// the cluster's users. Coordinates pinned at the floor (topics the users never
// use) get a wide component so that tiny current values keep positive density.
constexpr double kAlphaFloor = 0.01;
constexpr double kNarrowScale = 0.1;
constexpr double kWideScale = 2.0;

// The fitted concentration is capped at c_cap; a single user's fit would
// otherwise run off to infinity.
std::vector<double> fit_cluster_alpha(const MatrixI& counts, std::span<const std::size_t> users, double c_cap) {
    const std::size_t T = counts.cols();
    std::vector<double> pooled(T, 0.0);
    for (std::size_t u : users)
        for (std::size_t t = 0; t < T; ++t) pooled[t] += static_cast<double>(counts(u, t));
    const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
    std::vector<double> alpha(T);
    for (std::size_t t = 0; t < T; ++t) alpha[t] = std::max(std::min(50.0, c_cap) * (pooled[t] + 1e-3) / (total + 1e-3 * T), kAlphaFloor);
    std::vector<double> next(T);
    for (int iter = 0; iter < 200; ++iter) {
        const double a_sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
        double den = 0.0;
        for (std::size_t u : users) {
            double n = 0.0;
            for (std::size_t t = 0; t < T; ++t) n += static_cast<double>(counts(u, t));
            den += digamma(n + a_sum) - digamma(a_sum);
        }
        double change = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            double num = 0.0;
            for (std::size_t u : users) num += digamma(static_cast<double>(counts(u, t)) + alpha[t]) - digamma(alpha[t]);
            next[t] = den > 0.0 ? std::max(alpha[t] * num / den, kAlphaFloor) : alpha[t];
        }
        const double n_sum = std::accumulate(next.begin(), next.end(), 0.0);
        if (n_sum > c_cap)
            for (double& x : next) x *= c_cap / n_sum;
        for (std::size_t t = 0; t < T; ++t) change = std::max(change, std::abs(std::log(next[t] / alpha[t])));
        alpha.swap(next);
        if (change < 1e-6) break;
    }
    return alpha;
}

bool at_floor(double centre) { return centre <= kAlphaFloor * 1.0001; }

double proposal_log_density(std::span<const double> alpha, std::span<const double> centre) {
    double lp = 0.0;
    for (std::size_t t = 0; t < alpha.size(); ++t) {
        const double scale = at_floor(centre[t]) ? kWideScale : kNarrowScale;
        const double z = (std::log(alpha[t]) - std::log(centre[t])) / scale;
        lp += -0.5 * z * z - std::log(scale) - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(alpha[t]);
    }
    return lp;
}

std::vector<double> draw_proposal(std::span<const double> centre, Rng& rng) {
    std::vector<double> out(centre.size());
    for (std::size_t t = 0; t < centre.size(); ++t) {
        const double scale = at_floor(centre[t]) ? kWideScale : kNarrowScale;
        out[t] = std::max(centre[t] * std::exp(scale * rng.normal()), std::numeric_limits<double>::min());
    }
    return out;
}

// Prior density of alpha itself: the (m, c) density divided by the Jacobian c^(T-1).
double alpha_prior_log_density_direct(std::span<const double> alpha, const AlphaPrior& prior) {
    const AlphaPoint p = AlphaPoint::from_alpha(alpha);
    return alpha_prior_log_density(p, prior) - static_cast<double>(alpha.size() - 1) * std::log(p.concentration);
}

bool accept_log_ratio(double log_ratio, Rng& rng) {
    if (std::isnan(log_ratio)) return false;
    return log_ratio >= 0.0 || std::log(rng.uniform_open()) < log_ratio;
}

// Topic-only pass in the style of a Dirichlet-multinomial mixture: the user
// factor is replaced by the corpus-wide document count of each topic plus one.
void dmm_sweep(GibbsState& s, const Corpus& corpus, const Hyperparams& hp, Rng& rng) {
    std::vector<long> docs_per_topic(hp.T, 0);
    for (int t : s.z) ++docs_per_topic[static_cast<std::size_t>(t)];
    std::vector<double> lw(hp.T);
    const double v_eta = static_cast<double>(corpus.vocab_size()) * hp.eta;
    for (std::size_t u = 0; u < corpus.num_users(); ++u) {
        const std::size_t off = corpus.doc_offset(u);
        for (std::size_t d = 0; d < corpus.num_docs(u); ++d) {
            const Document& doc = corpus.doc(u, d);
            auto old = static_cast<std::size_t>(s.z[off + d]);
            s.stats.apply_document(doc, u, old, -1);
            --docs_per_topic[old];
            for (std::size_t t = 0; t < hp.T; ++t) {
                double w = std::log(static_cast<double>(docs_per_topic[t]) + 1.0);
                const auto wrow = s.stats.topic_word_counts.row(t);
                for (std::size_t i = 0; i < doc.words.size(); ++i)
                    w += log_rising_factorial(hp.eta + static_cast<double>(wrow[doc.words[i]]), doc.counts[i]);
                w -= log_rising_factorial(v_eta + static_cast<double>(s.stats.topic_totals[t]), doc.length());
                lw[t] = w;
            }
            const std::size_t t = sample_categorical_log(lw, rng);
            s.z[off + d] = static_cast<int>(t);
            s.stats.apply_document(doc, u, t, +1);
            ++docs_per_topic[t];
        }
    }
}

std::vector<long> user_counts(const GibbsState& s, std::size_t u) {
    const auto row = s.stats.user_topic_counts.row(u);
    return {row.begin(), row.end()};
}

}  // namespace

void GibbsConfig::validate() const {
    const bool init_only = n_sweeps == 0 && burn_in == 0;
    if (!init_only && n_sweeps <= burn_in) throw ValidationError("gibbs: n_sweeps must exceed burn_in");
    if (thin < 1) throw ValidationError("gibbs: thin must be at least 1");
    if (!(mh_step_m > 0.0) || !(mh_step_c > 0.0)) throw ValidationError("gibbs: MH step sizes must be positive");
}

GibbsState initialize_state(const Corpus& corpus, const Hyperparams& hp, const GibbsConfig& cfg, Rng& rng) {
    hp.validate();
    GibbsState s;
    s.z.resize(corpus.total_docs());
    for (int& t : s.z) t = static_cast<int>(rng.uniform_index(hp.T));
    s.g.resize(corpus.num_users());
    for (int& c : s.g) c = static_cast<int>(rng.uniform_index(hp.G));
    if (cfg.fixed_alpha) {
        if (cfg.fixed_alpha->rows() != hp.G || cfg.fixed_alpha->cols() != hp.T)
            throw ValidationError("gibbs: fixed_alpha must be G x T");
        s.alpha = *cfg.fixed_alpha;
    } else {
        s.alpha = MatrixD(hp.G, hp.T);
        for (std::size_t g = 0; g < hp.G; ++g) {
            const auto a = sample_alpha_prior(hp.T, hp.alpha_prior, rng).alpha();
            std::copy(a.begin(), a.end(), s.alpha.row(g).begin());
        }
    }
    s.phi = sample_dirichlet(hp.G, hp.nu, rng).values();
    s.stats = SufficientStats::from_assignments(corpus, s.z, s.g, hp.T, hp.G);
    s.step_m.assign(hp.G, cfg.mh_step_m);
    s.step_c.assign(hp.G, cfg.mh_step_c);
    for (std::size_t i = 0; i < cfg.init_dmm_sweeps; ++i) dmm_sweep(s, corpus, hp, rng);
    return s;
}

SimplexVector topic_full_conditional(const GibbsState& state, const Corpus& corpus, const Hyperparams& hp,
                                     std::size_t u, std::size_t d) {
    std::vector<double> lw(hp.T);
    topic_log_weights(state, corpus.doc(u, d), u, hp, corpus.vocab_size(), lw);
    normalize_log_weights(lw);
    return SimplexVector::from_weights(lw);
}

void sweep_topics(GibbsState& state, const Corpus& corpus, const Hyperparams& hp, Rng& rng, bool random_scan) {
    std::vector<double> lw(hp.T);
    std::vector<std::pair<std::size_t, std::size_t>> order;
    order.reserve(corpus.total_docs());
    for (std::size_t u = 0; u < corpus.num_users(); ++u)
        for (std::size_t d = 0; d < corpus.num_docs(u); ++d) order.emplace_back(u, d);
    if (random_scan)
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (const auto& [u, d] : order) {
        const Document& doc = corpus.doc(u, d);
        int& z = state.z[corpus.doc_offset(u) + d];
        state.stats.apply_document(doc, u, static_cast<std::size_t>(z), -1);
        topic_log_weights(state, doc, u, hp, corpus.vocab_size(), lw);
        const std::size_t t = sample_categorical_log(lw, rng);
        z = static_cast<int>(t);
        state.stats.apply_document(doc, u, t, +1);
    }
}

void resample_phi(GibbsState& state, const Hyperparams& hp, Rng& rng) {
    std::vector<double> post(hp.G);
    for (std::size_t g = 0; g < hp.G; ++g) post[g] = hp.nu + static_cast<double>(state.stats.cluster_counts[g]);
    state.phi = sample_dirichlet(post, rng).values();
}

std::vector<double> user_cluster_probs(const GibbsState& state, std::size_t u) {
    const std::size_t G = state.alpha.rows();
    const auto counts = user_counts(state, u);
    std::vector<double> lw(G);
    for (std::size_t g = 0; g < G; ++g)
        lw[g] = state.phi[g] > 0.0 ? std::log(state.phi[g]) + dirichlet_multinomial_log_prob(counts, state.alpha.row(g))
                                   : kNegInf;
    normalize_log_weights(lw);
    return lw;
}

int resample_user_cluster(GibbsState& state, const Hyperparams& hp, std::size_t u, Rng& rng) {
    (void)hp;
    const auto probs = user_cluster_probs(state, u);
    const int next = static_cast<int>(sample_categorical(probs, rng));
    --state.stats.cluster_counts[static_cast<std::size_t>(state.g[u])];
    ++state.stats.cluster_counts[static_cast<std::size_t>(next)];
    state.g[u] = next;
    return next;
}

double alpha_log_target(const GibbsState& state, const Hyperparams& hp, std::size_t g, std::span<const double> alpha) {
    for (double a : alpha)
        if (!(a > 0.0) || !std::isfinite(a)) return kNegInf;
    const AlphaPoint point = AlphaPoint::from_alpha(alpha);
    double lp = alpha_prior_log_density(point, hp.alpha_prior);
    lp += std::log(point.concentration);
    for (double m : point.mean) lp += std::log(m);
    for (std::size_t u = 0; u < state.g.size(); ++u)
        if (static_cast<std::size_t>(state.g[u]) == g)
            lp += dirichlet_multinomial_log_prob(state.stats.user_topic_counts.row(u), alpha);
    return std::isfinite(lp) ? lp : kNegInf;
}

std::vector<double> propose_alpha(std::span<const double> alpha, double step_m, double step_c, Rng& rng) {
    const AlphaPoint point = AlphaPoint::from_alpha(alpha);
    const std::size_t T = alpha.size();
    std::vector<double> logit(T, 0.0);
    const double ref = std::log(point.mean[T - 1]);
    for (std::size_t t = 0; t + 1 < T; ++t) logit[t] = std::log(point.mean[t]) - ref + step_m * rng.normal();
    const double c = point.concentration * std::exp(step_c * rng.normal());
    const double top = *std::max_element(logit.begin(), logit.end());
    double total = 0.0;
    for (double& x : logit) {
        x = std::exp(x - top);
        total += x;
    }
    for (double& x : logit) x = c * x / total;
    return logit;
}

MhOutcome mh_update_alpha(GibbsState& state, const Hyperparams& hp, std::size_t g, Rng& rng) {
    if (state.stats.cluster_counts[g] == 0) {
        const auto a = sample_alpha_prior(hp.T, hp.alpha_prior, rng).alpha();
        std::copy(a.begin(), a.end(), state.alpha.row(g).begin());
        return {true, true};
    }
    const auto current = state.alpha.row(g);
    const auto proposal = propose_alpha(current, state.step_m[g], state.step_c[g], rng);
    const double log_ratio = alpha_log_target(state, hp, g, proposal) - alpha_log_target(state, hp, g, current);
    if (!std::isfinite(log_ratio)) return {false, false};
    if (log_ratio >= 0.0 || std::log(rng.uniform_open()) < log_ratio) {
        std::copy(proposal.begin(), proposal.end(), current.begin());
        return {true, false};
    }
    return {false, false};
}

SplitMergeOutcome topic_split_merge(GibbsState& state, const Corpus& corpus, const Hyperparams& hp, Rng& rng) {
    SplitMergeOutcome out;
    const std::size_t D = corpus.total_docs();
    const std::size_t V = corpus.vocab_size();
    if (D < 2 || hp.T < 2) return out;
    const std::size_t i = rng.uniform_index(D);
    std::size_t j = rng.uniform_index(D - 1);
    if (j >= i) ++j;
    const auto a = static_cast<std::size_t>(state.z[i]);
    const auto zj = static_cast<std::size_t>(state.z[j]);

    struct Item {
        std::size_t idx, u, d;
    };
    std::vector<Item> pool;  // documents of the two topics other than i and j
    std::size_t ui = 0, uj = 0, di = 0, dj = 0;
    std::vector<long> docs_per_topic(hp.T, 0);
    std::vector<char> touched(corpus.num_users(), 0);
    for (std::size_t u = 0; u < corpus.num_users(); ++u) {
        const std::size_t off = corpus.doc_offset(u);
        for (std::size_t d = 0; d < corpus.num_docs(u); ++d) {
            const std::size_t idx = off + d;
            const auto t = static_cast<std::size_t>(state.z[idx]);
            ++docs_per_topic[t];
            if (idx == i) { ui = u; di = d; }
            if (idx == j) { uj = u; dj = d; }
            if (idx == i || idx == j) { touched[u] = 1; continue; }
            if (t == a || t == zj) {
                pool.push_back({idx, u, d});
                touched[u] = 1;
            }
        }
    }
    std::vector<std::size_t> empty;
    for (std::size_t t = 0; t < hp.T; ++t)
        if (docs_per_topic[t] == 0) empty.push_back(t);

    const bool split = a == zj;
    if (split && empty.empty()) return out;
    out.proposed = true;
    out.split = split;
    const std::size_t b = split ? empty[rng.uniform_index(empty.size())] : zj;

    auto local_lp = [&] {
        double lp = topic_word_term(state.stats, a, hp, V) + topic_word_term(state.stats, b, hp, V);
        for (std::size_t u = 0; u < corpus.num_users(); ++u)
            if (touched[u]) lp += user_term(state, u);
        return lp;
    };
    auto move = [&](const Item& it, std::size_t to) {
        const auto from = static_cast<std::size_t>(state.z[it.idx]);
        if (from == to) return;
        const Document& doc = corpus.doc(it.u, it.d);
        state.stats.apply_document(doc, it.u, from, -1);
        state.stats.apply_document(doc, it.u, to, +1);
        state.z[it.idx] = static_cast<int>(to);
    };

    const double old_lp = local_lp();
    // Sequential allocation between a and b in a random order. For a split the
    // allocation is sampled; for a merge its probability at the current state
    // is evaluated.
    for (std::size_t k = pool.size(); k > 1; --k) std::swap(pool[k - 1], pool[rng.uniform_index(k)]);
    std::vector<int> saved(pool.size());
    for (std::size_t k = 0; k < pool.size(); ++k) saved[k] = state.z[pool[k].idx];
    const int saved_j = state.z[j];
    for (const Item& it : pool) state.stats.apply_document(corpus.doc(it.u, it.d), it.u, static_cast<std::size_t>(state.z[it.idx]), -1);
    if (split) move({j, uj, dj}, b);
    double log_q = 0.0;
    for (const Item& it : pool) {
        const Document& doc = corpus.doc(it.u, it.d);
        const double la = topic_log_weight(state, doc, it.u, a, hp, V);
        const double lb = topic_log_weight(state, doc, it.u, b, hp, V);
        const double log_pa = la - log_sum_exp(la, lb);
        const double log_pb = lb - log_sum_exp(la, lb);
        std::size_t t;
        if (split) {
            t = std::log(rng.uniform_open()) < log_pa ? a : b;
        } else {
            t = static_cast<std::size_t>(state.z[it.idx]);
        }
        log_q += t == a ? log_pa : log_pb;
        state.stats.apply_document(doc, it.u, t, +1);
        state.z[it.idx] = static_cast<int>(t);
    }
    (void)ui;
    (void)di;

    double log_ratio;
    if (split) {
        log_ratio = local_lp() - old_lp + std::log(static_cast<double>(empty.size())) - log_q;
    } else {
        move({j, uj, dj}, a);
        for (const Item& it : pool) move(it, a);
        log_ratio = local_lp() - old_lp + log_q - std::log(static_cast<double>(empty.size() + 1));
    }
    if (accept_log_ratio(log_ratio, rng)) {
        out.accepted = true;
        return out;
    }
    move({j, uj, dj}, static_cast<std::size_t>(saved_j));
    for (std::size_t k = 0; k < pool.size(); ++k) move(pool[k], static_cast<std::size_t>(saved[k]));
    return out;
}

SplitMergeOutcome cluster_split_merge(GibbsState& state, const Hyperparams& hp, Rng& rng) {
    SplitMergeOutcome out;
    const std::size_t U = state.g.size();
    const std::size_t T = hp.T;
    if (U < 2 || hp.G < 2) return out;
    const std::size_t i = rng.uniform_index(U);
    std::size_t j = rng.uniform_index(U - 1);
    if (j >= i) ++j;
    const auto a = static_cast<std::size_t>(state.g[i]);
    const auto gj = static_cast<std::size_t>(state.g[j]);
    const bool split = a == gj;

    std::vector<std::size_t> empty;
    for (std::size_t g = 0; g < hp.G; ++g)
        if (state.stats.cluster_counts[g] == 0) empty.push_back(g);
    if (split && empty.empty()) return out;
    out.proposed = true;
    out.split = split;
    const std::size_t b = split ? empty[rng.uniform_index(empty.size())] : gj;

    std::vector<std::size_t> pool;
    for (std::size_t u = 0; u < U; ++u)
        if (u != i && u != j && (static_cast<std::size_t>(state.g[u]) == a || static_cast<std::size_t>(state.g[u]) == b))
            pool.push_back(u);
    for (std::size_t k = pool.size(); k > 1; --k) std::swap(pool[k - 1], pool[rng.uniform_index(k)]);

    auto counts_of = [&](std::size_t u) { return state.stats.user_topic_counts.row(u); };
    auto dm = [&](std::size_t u, std::span<const double> alpha) {
        return dirichlet_multinomial_log_prob(counts_of(u), alpha);
    };
    auto add_counts = [&](std::vector<long>& into, std::size_t u) {
        const auto row = counts_of(u);
        for (std::size_t t = 0; t < T; ++t) into[t] += row[t];
    };

    // Sequential allocation of the pool between the two anchors, scored by the
    // Dirichlet-multinomial predictive of the counts pooled so far.
    std::vector<long> pooled_a(T, 0), pooled_b(T, 0);
    add_counts(pooled_a, i);
    add_counts(pooled_b, j);
    std::vector<double> pseudo(T);
    auto predictive = [&](std::size_t u, const std::vector<long>& pooled) {
        for (std::size_t t = 0; t < T; ++t) pseudo[t] = 1.0 + static_cast<double>(pooled[t]);
        return dirichlet_multinomial_log_prob(counts_of(u), pseudo);
    };
    std::vector<int> proposal(pool.size());
    double log_q_alloc = 0.0;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const std::size_t u = pool[k];
        const double la = predictive(u, pooled_a), lb = predictive(u, pooled_b);
        const double log_pa = la - log_sum_exp(la, lb);
        bool to_a;
        if (split) {
            to_a = std::log(rng.uniform_open()) < log_pa;
        } else {
            to_a = static_cast<std::size_t>(state.g[u]) == a;
        }
        log_q_alloc += to_a ? log_pa : lb - log_sum_exp(la, lb);
        add_counts(to_a ? pooled_a : pooled_b, u);
        proposal[k] = static_cast<int>(to_a ? a : b);
    }
    auto prior_lp = [&](std::span<const double> alpha) { return alpha_prior_log_density_direct(alpha, hp.alpha_prior); };
    const std::vector<double> old_a(state.alpha.row(a).begin(), state.alpha.row(a).end());
    const std::vector<double> old_b(state.alpha.row(b).begin(), state.alpha.row(b).end());

    std::vector<std::size_t> members_a{i}, members_b{j}, members_all{i, j};
    for (std::size_t k = 0; k < pool.size(); ++k) {
        (static_cast<std::size_t>(proposal[k]) == a ? members_a : members_b).push_back(pool[k]);
        members_all.push_back(pool[k]);
    }
    const MatrixI& z_counts = state.stats.user_topic_counts;
    const double c_cap = std::max(hp.alpha_prior.c_mean + 3.0 * hp.alpha_prior.c_sd, 1.0);

    double l_old = 0.0;
    for (std::size_t u : {i, j}) l_old += dm(u, static_cast<std::size_t>(state.g[u]) == a ? old_a : old_b);
    for (std::size_t u : pool) l_old += dm(u, static_cast<std::size_t>(state.g[u]) == a ? old_a : old_b);

    std::vector<long> counts = state.stats.cluster_counts;
    double log_ratio;
    std::vector<double> new_a, new_b;
    if (split) {
        const auto centre_a = fit_cluster_alpha(z_counts, members_a, c_cap);
        const auto centre_b = fit_cluster_alpha(z_counts, members_b, c_cap);
        const auto centre_all = fit_cluster_alpha(z_counts, members_all, c_cap);
        new_a = draw_proposal(centre_a, rng);
        new_b = draw_proposal(centre_b, rng);
        double l_new = 0.0;
        for (std::size_t u : members_a) l_new += dm(u, new_a);
        for (std::size_t u : members_b) l_new += dm(u, new_b);
        counts[a] -= static_cast<long>(members_b.size());
        counts[b] += static_cast<long>(members_b.size());
        log_ratio = l_new - l_old + prior_lp(new_a) + prior_lp(new_b) - prior_lp(old_a) +
                    proposal_log_density(old_a, centre_all) - proposal_log_density(new_a, centre_a) -
                    proposal_log_density(new_b, centre_b) - log_q_alloc + std::log(static_cast<double>(empty.size()));
    } else {
        const auto centre_a = fit_cluster_alpha(z_counts, members_a, c_cap);
        const auto centre_b = fit_cluster_alpha(z_counts, members_b, c_cap);
        const auto centre_all = fit_cluster_alpha(z_counts, members_all, c_cap);
        std::fill(proposal.begin(), proposal.end(), static_cast<int>(a));
        new_a = draw_proposal(centre_all, rng);
        new_b = sample_alpha_prior(T, hp.alpha_prior, rng).alpha();
        double l_new = 0.0;
        for (std::size_t u : members_all) l_new += dm(u, new_a);
        counts[a] += counts[b];
        counts[b] = 0;
        log_ratio = l_new - l_old + prior_lp(new_a) - prior_lp(old_a) - prior_lp(old_b) +
                    proposal_log_density(old_a, centre_a) + proposal_log_density(old_b, centre_b) -
                    proposal_log_density(new_a, centre_all) + log_q_alloc -
                    std::log(static_cast<double>(empty.size() + 1));
    }
    log_ratio += log_beta_fn(nu_plus(counts, hp.nu)) - log_beta_fn(nu_plus(state.stats.cluster_counts, hp.nu));
    // phi is collapsed in the ratio, so it is redrawn from its conditional either way.
    if (!accept_log_ratio(log_ratio, rng)) {
        state.phi = sample_dirichlet(nu_plus(state.stats.cluster_counts, hp.nu), rng).values();
        return out;
    }

    out.accepted = true;
    state.g[j] = static_cast<int>(split ? b : a);
    for (std::size_t k = 0; k < pool.size(); ++k) state.g[pool[k]] = proposal[k];
    state.stats.cluster_counts = counts;
    std::copy(new_a.begin(), new_a.end(), state.alpha.row(a).begin());
    std::copy(new_b.begin(), new_b.end(), state.alpha.row(b).begin());
    state.phi = sample_dirichlet(nu_plus(counts, hp.nu), rng).values();
    return out;
}

double log_joint(const GibbsState& s, const Corpus& corpus, const Hyperparams& hp) {
    const double V = static_cast<double>(corpus.vocab_size());
    const double lg_eta = std::lgamma(hp.eta);
    double lp = 0.0;
    for (std::size_t t = 0; t < hp.T; ++t) {
        lp += std::lgamma(V * hp.eta) - std::lgamma(V * hp.eta + static_cast<double>(s.stats.topic_totals[t]));
        for (long c : s.stats.topic_word_counts.row(t))
            if (c > 0) lp += std::lgamma(hp.eta + static_cast<double>(c)) - lg_eta;
    }
    for (std::size_t u = 0; u < s.g.size(); ++u) {
        const auto g = static_cast<std::size_t>(s.g[u]);
        lp += dirichlet_multinomial_log_prob(s.stats.user_topic_counts.row(u), s.alpha.row(g));
        lp += std::log(s.phi[g]);
    }
    lp += std::lgamma(static_cast<double>(hp.G) * hp.nu) - static_cast<double>(hp.G) * std::lgamma(hp.nu);
    for (double p : s.phi) lp += (hp.nu - 1.0) * std::log(p);
    for (std::size_t g = 0; g < hp.G; ++g)
        lp += alpha_prior_log_density(AlphaPoint::from_alpha(s.alpha.row(g)), hp.alpha_prior);
    return lp;
}

std::span<const int> GibbsTrace::z_sample(std::size_t s) const {
    return std::span<const int>(z).subspan(s * num_docs, num_docs);
}

std::span<const int> GibbsTrace::g_sample(std::size_t s) const {
    return std::span<const int>(g).subspan(s * num_users, num_users);
}

MatrixD GibbsTrace::alpha_sample(std::size_t s) const {
    MatrixD out(hp.G, hp.T);
    std::copy_n(alpha.begin() + static_cast<std::ptrdiff_t>(s * hp.G * hp.T), hp.G * hp.T, out.data().begin());
    return out;
}

std::span<const double> GibbsTrace::phi_sample(std::size_t s) const {
    return std::span<const double>(phi).subspan(s * hp.G, hp.G);
}

void GibbsTrace::add_sample(std::span<const int> z_s, std::span<const int> g_s, const MatrixD& alpha_s,
                            std::span<const double> phi_s) {
    z.insert(z.end(), z_s.begin(), z_s.end());
    g.insert(g.end(), g_s.begin(), g_s.end());
    alpha.insert(alpha.end(), alpha_s.data().begin(), alpha_s.data().end());
    phi.insert(phi.end(), phi_s.begin(), phi_s.end());
    ++num_samples;
}

std::vector<int> align_clusters(std::span<const int> reference, std::span<const int> current, std::size_t G) {
    MatrixI overlap(G, G, 0);
    for (std::size_t u = 0; u < current.size(); ++u)
        ++overlap(static_cast<std::size_t>(current[u]), static_cast<std::size_t>(reference[u]));
    std::vector<int> perm(G, -1);
    std::vector<bool> taken(G, false);
    for (;;) {
        long best = 0;
        std::size_t bc = G, br = G;
        for (std::size_t c = 0; c < G; ++c) {
            if (perm[c] >= 0) continue;
            for (std::size_t r = 0; r < G; ++r)
                if (!taken[r] && overlap(c, r) > best) {
                    best = overlap(c, r);
                    bc = c;
                    br = r;
                }
        }
        if (bc == G) break;
        perm[bc] = static_cast<int>(br);
        taken[br] = true;
    }
    // Unmatched clusters keep their own label when it is free.
    for (std::size_t c = 0; c < G; ++c)
        if (perm[c] < 0 && !taken[c]) {
            perm[c] = static_cast<int>(c);
            taken[c] = true;
        }
    for (std::size_t c = 0; c < G; ++c)
        if (perm[c] < 0) {
            const auto r = static_cast<std::size_t>(std::find(taken.begin(), taken.end(), false) - taken.begin());
            perm[c] = static_cast<int>(r);
            taken[r] = true;
        }
    return perm;
}

GibbsTrace run_chain(const Corpus& corpus, const Hyperparams& hp, const GibbsConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    GibbsTrace trace;
    trace.hp = hp;
    trace.num_docs = corpus.total_docs();
    trace.num_users = corpus.num_users();
    trace.mh_proposed.assign(hp.G, 0);
    trace.mh_accepted.assign(hp.G, 0);

    GibbsState state = initialize_state(corpus, hp, cfg, rng);
    if (cfg.n_sweeps == 0) {
        trace.add_sample(state.z, state.g, state.alpha, state.phi);
        trace.log_joint.push_back(log_joint(state, corpus, hp));
        trace.final_state = std::move(state);
        return trace;
    }

    std::vector<long> window_tries(hp.G, 0), window_accepts(hp.G, 0);
    std::vector<int> prev_g;
    std::vector<int> g_aligned(corpus.num_users());
    std::vector<double> phi_aligned(hp.G);
    MatrixD alpha_aligned(hp.G, hp.T);

    for (std::size_t sweep = 1; sweep <= cfg.n_sweeps; ++sweep) {
        const bool burning = sweep <= cfg.burn_in;
        sweep_topics(state, corpus, hp, rng, cfg.random_scan);
        for (std::size_t k = 0; k < cfg.topic_split_merge; ++k) {
            const SplitMergeOutcome sm = topic_split_merge(state, corpus, hp, rng);
            trace.topic_moves_proposed += sm.proposed ? 1 : 0;
            trace.topic_moves_accepted += sm.accepted ? 1 : 0;
        }
        if (!cfg.fixed_alpha)
            for (std::size_t k = 0; k < cfg.cluster_split_merge; ++k) {
                const SplitMergeOutcome sm = cluster_split_merge(state, hp, rng);
                trace.cluster_moves_proposed += sm.proposed ? 1 : 0;
                trace.cluster_moves_accepted += sm.accepted ? 1 : 0;
            }
        for (std::size_t r = 0; r < cfg.inner_updates_per_sweep; ++r) {
            resample_phi(state, hp, rng);
            for (std::size_t u = 0; u < corpus.num_users(); ++u) resample_user_cluster(state, hp, u, rng);
            if (cfg.fixed_alpha) continue;
            for (std::size_t g = 0; g < hp.G; ++g) {
                const MhOutcome out = mh_update_alpha(state, hp, g, rng);
                if (out.from_prior) continue;
                if (burning) {
                    ++window_tries[g];
                    window_accepts[g] += out.accepted ? 1 : 0;
                } else {
                    ++trace.mh_proposed[g];
                    trace.mh_accepted[g] += out.accepted ? 1 : 0;
                }
            }
        }
        if (burning && cfg.adapt_steps) {
            for (std::size_t g = 0; g < hp.G; ++g) {
                if (window_tries[g] < static_cast<long>(kAdaptWindow)) continue;
                const double rate = static_cast<double>(window_accepts[g]) / static_cast<double>(window_tries[g]);
                const double factor = rate < 0.2 ? 0.7 : (rate > 0.4 ? 1.3 : 1.0);
                state.step_m[g] = std::clamp(state.step_m[g] * factor, 1e-4, 5.0);
                state.step_c[g] = std::clamp(state.step_c[g] * factor, 1e-4, 5.0);
                window_tries[g] = window_accepts[g] = 0;
            }
        }
        ++state.iteration;
        trace.log_joint.push_back(log_joint(state, corpus, hp));

        if (burning || (sweep - cfg.burn_in) % cfg.thin != 0) continue;
        std::vector<int> perm(hp.G);
        std::iota(perm.begin(), perm.end(), 0);
        if (cfg.align_labels && !prev_g.empty()) perm = align_clusters(prev_g, state.g, hp.G);
        bool moved = false;
        for (std::size_t c = 0; c < hp.G; ++c) {
            const auto to = static_cast<std::size_t>(perm[c]);
            moved = moved || to != c;
            phi_aligned[to] = state.phi[c];
            std::copy(state.alpha.row(c).begin(), state.alpha.row(c).end(), alpha_aligned.row(to).begin());
        }
        for (std::size_t u = 0; u < corpus.num_users(); ++u) g_aligned[u] = perm[static_cast<std::size_t>(state.g[u])];
        if (moved) ++trace.alignment_changes;
        trace.add_sample(state.z, g_aligned, alpha_aligned, phi_aligned);
        prev_g = g_aligned;
    }
    trace.final_state = std::move(state);
    return trace;
}

PosteriorSummary summarize(const GibbsTrace& trace, const Corpus& corpus) {
    if (trace.num_samples == 0) throw ValidationError("summarize: the trace holds no samples");
    if (trace.num_docs != corpus.total_docs() || trace.num_users != corpus.num_users())
        throw ValidationError("summarize: trace does not match the corpus");
    const std::size_t T = trace.hp.T, G = trace.hp.G, V = corpus.vocab_size();
    const double S = static_cast<double>(trace.num_samples);
    const double eta = trace.hp.eta;
    PosteriorSummary out;
    out.doc_topic_probs = MatrixD(trace.num_docs, T, 0.0);
    out.user_cluster_probs = MatrixD(trace.num_users, G, 0.0);
    out.theta_mean = MatrixD(trace.num_users, T, 0.0);
    out.beta_mean = MatrixD(T, V, 0.0);
    out.alpha_mean = MatrixD(G, T, 0.0);
    out.phi_mean.assign(G, 0.0);

    for (std::size_t s = 0; s < trace.num_samples; ++s) {
        const auto z = trace.z_sample(s);
        const auto g = trace.g_sample(s);
        const MatrixD alpha = trace.alpha_sample(s);
        const SufficientStats stats = SufficientStats::from_assignments(corpus, z, g, T, G);
        for (std::size_t i = 0; i < z.size(); ++i) out.doc_topic_probs(i, static_cast<std::size_t>(z[i])) += 1.0 / S;
        for (std::size_t u = 0; u < g.size(); ++u) {
            const auto gu = static_cast<std::size_t>(g[u]);
            out.user_cluster_probs(u, gu) += 1.0 / S;
            const auto a = alpha.row(gu);
            const double denom = static_cast<double>(corpus.num_docs(u)) + std::accumulate(a.begin(), a.end(), 0.0);
            for (std::size_t t = 0; t < T; ++t)
                out.theta_mean(u, t) += (a[t] + static_cast<double>(stats.user_topic_counts(u, t))) / denom / S;
        }
        for (std::size_t t = 0; t < T; ++t) {
            const double denom = static_cast<double>(V) * eta + static_cast<double>(stats.topic_totals[t]);
            const auto w = stats.topic_word_counts.row(t);
            auto b = out.beta_mean.row(t);
            for (std::size_t j = 0; j < V; ++j) b[j] += (eta + static_cast<double>(w[j])) / denom / S;
        }
        for (std::size_t i = 0; i < G * T; ++i) out.alpha_mean.data()[i] += alpha.data()[i] / S;
        const auto phi = trace.phi_sample(s);
        for (std::size_t c = 0; c < G; ++c) out.phi_mean[c] += phi[c] / S;
    }
    return out;
}

ModelParams point_estimate(const PosteriorSummary& summary) {
    return {summary.alpha_mean, summary.beta_mean, summary.phi_mean};
}

io::json to_json(const GibbsConfig& cfg) {
    io::json out{{"n_sweeps", cfg.n_sweeps},
                 {"burn_in", cfg.burn_in},
                 {"thin", cfg.thin},
                 {"inner_updates_per_sweep", cfg.inner_updates_per_sweep},
                 {"mh_step_m", cfg.mh_step_m},
                 {"mh_step_c", cfg.mh_step_c},
                 {"adapt_steps", cfg.adapt_steps},
                 {"random_scan", cfg.random_scan},
                 {"init_dmm_sweeps", cfg.init_dmm_sweeps},
                 {"align_labels", cfg.align_labels},
                 {"topic_split_merge", cfg.topic_split_merge},
                 {"cluster_split_merge", cfg.cluster_split_merge}};
    if (cfg.fixed_alpha) out["fixed_alpha"] = io::to_json(*cfg.fixed_alpha);
    return out;
}

GibbsConfig gibbs_config_from_json(const io::json& value) {
    GibbsConfig cfg;
    if (!value.is_object()) throw ValidationError("gibbs config must be an object");
    try {
        cfg.n_sweeps = value.value("n_sweeps", cfg.n_sweeps);
        cfg.burn_in = value.value("burn_in", cfg.burn_in);
        cfg.thin = value.value("thin", cfg.thin);
        cfg.inner_updates_per_sweep = value.value("inner_updates_per_sweep", cfg.inner_updates_per_sweep);
        cfg.mh_step_m = value.value("mh_step_m", cfg.mh_step_m);
        cfg.mh_step_c = value.value("mh_step_c", cfg.mh_step_c);
        cfg.adapt_steps = value.value("adapt_steps", cfg.adapt_steps);
        cfg.random_scan = value.value("random_scan", cfg.random_scan);
        cfg.init_dmm_sweeps = value.value("init_dmm_sweeps", cfg.init_dmm_sweeps);
        cfg.align_labels = value.value("align_labels", cfg.align_labels);
        cfg.topic_split_merge = value.value("topic_split_merge", cfg.topic_split_merge);
        cfg.cluster_split_merge = value.value("cluster_split_merge", cfg.cluster_split_merge);
        if (value.contains("fixed_alpha")) cfg.fixed_alpha = io::matrix_from_json(value.at("fixed_alpha"));
    } catch (const io::json::exception& e) {
        throw ValidationError(std::string("gibbs config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

io::json to_json(const GibbsTrace& trace) {
    io::json samples = io::json::array();
    for (std::size_t s = 0; s < trace.num_samples; ++s) {
        const auto z = trace.z_sample(s);
        const auto g = trace.g_sample(s);
        const auto phi = trace.phi_sample(s);
        samples.push_back({{"z", std::vector<int>(z.begin(), z.end())},
                           {"g", std::vector<int>(g.begin(), g.end())},
                           {"alpha", io::to_json(trace.alpha_sample(s))},
                           {"phi", std::vector<double>(phi.begin(), phi.end())}});
    }
    io::json out{{"dims", {{"D", trace.num_docs}, {"U", trace.num_users}, {"T", trace.hp.T}, {"G", trace.hp.G}}},
                 {"num_samples", trace.num_samples},
                 {"log_joint", trace.log_joint},
                 {"mh_proposed", trace.mh_proposed},
                 {"mh_accepted", trace.mh_accepted},
                 {"mh_step_m", trace.final_state.step_m},
                 {"mh_step_c", trace.final_state.step_c},
                 {"alignment_changes", trace.alignment_changes},
                 {"topic_moves", {{"proposed", trace.topic_moves_proposed}, {"accepted", trace.topic_moves_accepted}}},
                 {"cluster_moves", {{"proposed", trace.cluster_moves_proposed}, {"accepted", trace.cluster_moves_accepted}}},
                 {"samples", std::move(samples)}};
    io::stamp_schema(out, "stldac.gibbs_trace", kTraceSchemaVersion);
    return out;
}

void save_trace(const GibbsTrace& trace, const std::filesystem::path& path) {
    io::write_json_file(path, to_json(trace));
}

}  // namespace stldac
