#pragma once

// Straightforward reference formulas used to check the library. They are
// written directly from the model definition and share no code with src/.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "stldac/corpus.hpp"

namespace oracle {

using stldac::Corpus;
using stldac::Document;
using stldac::WordId;

/// docs[u][d] lists the word ids of document d of user u.
inline Corpus make_corpus(const std::vector<std::vector<std::vector<WordId>>>& docs, std::size_t V) {
    std::vector<std::string> vocab, users;
    for (std::size_t v = 0; v < V; ++v) vocab.push_back("w" + std::to_string(v));
    std::vector<std::vector<Document>> out;
    for (std::size_t u = 0; u < docs.size(); ++u) {
        users.push_back("u" + std::to_string(u));
        std::vector<Document> ds;
        for (std::size_t d = 0; d < docs[u].size(); ++d)
            ds.push_back(Document::from_tokens(users.back() + "_" + std::to_string(d), users.back(), docs[u][d]));
        out.push_back(std::move(ds));
    }
    return Corpus(stldac::Vocabulary(vocab), users, out);
}

/// log of Gamma(A) / Gamma(A + N) * prod Gamma(a_t + n_t) / Gamma(a_t), one
/// ordered sequence of draws.
inline double dirmult(const std::vector<long>& n, const std::vector<double>& a) {
    double A = 0.0, N = 0.0, out = 0.0;
    for (std::size_t t = 0; t < n.size(); ++t) {
        A += a[t];
        N += static_cast<double>(n[t]);
        out += std::lgamma(a[t] + static_cast<double>(n[t])) - std::lgamma(a[t]);
    }
    return out + std::lgamma(A) - std::lgamma(A + N);
}

/// log p(W | z) with every topic integrated against a symmetric Dir(eta).
inline double collapsed_words(const Corpus& c, const std::vector<int>& z, std::size_t T, double eta) {
    const std::size_t V = c.vocab_size();
    std::vector<std::vector<long>> counts(T, std::vector<long>(V, 0));
    std::size_t i = 0;
    for (std::size_t u = 0; u < c.num_users(); ++u)
        for (const auto& doc : c.docs(u)) {
            for (std::size_t k = 0; k < doc.words.size(); ++k)
                counts[static_cast<std::size_t>(z[i])][doc.words[k]] += doc.counts[k];
            ++i;
        }
    double out = 0.0;
    for (const auto& row : counts) out += dirmult(row, std::vector<double>(V, eta));
    return out;
}

inline std::vector<std::vector<long>> user_topic_counts(const Corpus& c, const std::vector<int>& z, std::size_t T) {
    std::vector<std::vector<long>> out(c.num_users(), std::vector<long>(T, 0));
    std::size_t i = 0;
    for (std::size_t u = 0; u < c.num_users(); ++u)
        for (std::size_t d = 0; d < c.num_docs(u); ++d) ++out[u][static_cast<std::size_t>(z[i++])];
    return out;
}

/// log p(W, z) for one cluster with fixed alpha.
inline double joint_fixed_alpha(const Corpus& c, const std::vector<int>& z, const std::vector<double>& alpha,
                                double eta) {
    double out = collapsed_words(c, z, alpha.size(), eta);
    for (const auto& n : user_topic_counts(c, z, alpha.size())) out += dirmult(n, alpha);
    return out;
}

/// Every assignment of n items to K labels, as base-K digits.
inline std::vector<std::vector<int>> all_labelings(std::size_t n, std::size_t K) {
    std::vector<std::vector<int>> out;
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= K;
    for (std::size_t k = 0; k < total; ++k) {
        std::vector<int> lab(n);
        std::size_t r = k;
        for (std::size_t i = 0; i < n; ++i) {
            lab[i] = static_cast<int>(r % K);
            r /= K;
        }
        out.push_back(lab);
    }
    return out;
}

inline std::size_t labeling_index(const std::vector<int>& lab, std::size_t K) {
    std::size_t k = 0;
    for (std::size_t i = lab.size(); i-- > 0;) k = k * K + static_cast<std::size_t>(lab[i]);
    return k;
}

/// Density of c ~ N(mean, sd) truncated to c > 0.
inline double truncated_normal_pdf(double c, double mean, double sd) {
    if (c <= 0.0) return 0.0;
    const double z = (c - mean) / sd;
    const double mass = 0.5 * std::erfc(-mean / sd / std::numbers::sqrt2);
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi) * mass);
}

/// Midpoint-rule integral over T = 2 alpha = (m c, (1 - m) c) with m ~ U(0, 1)
/// and truncated-normal c of f(m, c) times the prior density.
template <class F>
double integrate_alpha_prior_t2(double c_mean, double c_sd, F&& f, int nm = 400, int nc = 2000) {
    const double c_max = std::max(c_mean, 0.0) + 12.0 * c_sd;
    double total = 0.0;
    for (int i = 0; i < nm; ++i) {
        const double m = (i + 0.5) / nm;
        for (int j = 0; j < nc; ++j) {
            const double c = (j + 0.5) * c_max / nc;
            total += f(m, c) * truncated_normal_pdf(c, c_mean, c_sd) * (1.0 / nm) * (c_max / nc);
        }
    }
    return total;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
    return 0.5 * tv;
}

inline std::vector<double> normalize_logs(const std::vector<double>& logs) {
    double mx = -INFINITY;
    for (double l : logs) mx = std::max(mx, l);
    std::vector<double> out;
    double s = 0.0;
    for (double l : logs) s += std::exp(l - mx);
    for (double l : logs) out.push_back(std::exp(l - mx) / s);
    return out;
}

/// Expected number of draws from Cat(p) until every category has appeared:
/// sum over nonempty subsets S of (-1)^(|S|+1) / p(S).
inline double coverage_mean(const std::vector<double>& p) {
    const std::size_t T = p.size();
    double out = 0.0;
    for (std::size_t mask = 1; mask < (std::size_t{1} << T); ++mask) {
        double ps = 0.0;
        int bits = 0;
        for (std::size_t t = 0; t < T; ++t)
            if (mask >> t & 1) {
                ps += p[t];
                ++bits;
            }
        out += (bits % 2 == 1 ? 1.0 : -1.0) / ps;
    }
    return out;
}

}  // namespace oracle
