#include "stldac/mathcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "stldac/error.hpp"

namespace stldac {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

bool is_simplex(std::span<const double> values, double tol) {
    if (values.empty()) return false;
    double sum = 0.0;
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tol;
}

SimplexVector::SimplexVector(std::vector<double> values) : values_(std::move(values)) {
    if (!is_simplex(values_)) throw ValidationError("values do not lie on the probability simplex");
}

SimplexVector SimplexVector::from_weights(std::span<const double> weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("simplex weights must be nonnegative and finite");
        sum += w;
    }
    if (!(sum > 0.0)) throw DomainError("simplex weights sum to zero");
    std::vector<double> out(weights.begin(), weights.end());
    for (double& v : out) v /= sum;
    SimplexVector s;
    s.values_ = std::move(out);
    return s;
}

SimplexVector SimplexVector::uniform(std::size_t dim) {
    if (dim == 0) throw DomainError("simplex dimension must be positive");
    SimplexVector s;
    s.values_.assign(dim, 1.0 / static_cast<double>(dim));
    return s;
}

PositiveVector::PositiveVector(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("PositiveVector entries must be positive and finite");
    }
}

double PositiveVector::sum() const noexcept { return std::accumulate(values_.begin(), values_.end(), 0.0); }

// Special functions -------------------------------------------------------

double digamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        std::ostringstream msg;
        msg << "digamma requires a positive finite argument, got " << x;
        throw DomainError(msg.str());
    }
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Asymptotic series in 1/x^2 (Bernoulli numbers B_2k / 2k).
    const double series =
        inv2 * (1.0 / 12.0 -
                inv2 * (1.0 / 120.0 -
                        inv2 * (1.0 / 252.0 -
                                inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    return result + std::log(x) - 0.5 * inv - series;
}

double trigamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("trigamma requires a positive finite argument");
    double result = 0.0;
    while (x < 10.0) {
        result += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 -
                                         inv2 * (1.0 / 30.0 -
                                                 inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0)))))));
    return result + series;
}

double log_gamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("log_gamma requires a positive finite argument");
    return std::lgamma(x);
}

double log_rising_factorial(double x, long n) {
    if (n < 0) throw DomainError("rising factorial of negative length");
    if (n == 0) return 0.0;
    if (n <= 8) {
        double prod = 1.0;
        for (long k = 0; k < n; ++k) prod *= (x + static_cast<double>(k));
        return std::log(prod);
    }
    return std::lgamma(x + static_cast<double>(n)) - std::lgamma(x);
}

std::vector<double> e_log_theta(std::span<const double> gamma) {
    double total = 0.0;
    for (double g : gamma) total += g;
    const double psi_total = digamma(total);
    std::vector<double> out(gamma.size());
    for (std::size_t t = 0; t < gamma.size(); ++t) out[t] = digamma(gamma[t]) - psi_total;
    return out;
}

double dirichlet_multinomial_log_prob(std::span<const long> counts, std::span<const double> alpha) {
    if (counts.size() != alpha.size()) throw DomainError("dirichlet_multinomial_log_prob: dimension mismatch");
    double alpha_sum = 0.0;
    long n = 0;
    double result = 0.0;
    for (std::size_t t = 0; t < counts.size(); ++t) {
        if (!(alpha[t] > 0.0)) throw DomainError("dirichlet_multinomial_log_prob: alpha must be positive");
        if (counts[t] < 0) throw DomainError("dirichlet_multinomial_log_prob: negative count");
        alpha_sum += alpha[t];
        n += counts[t];
        result += log_rising_factorial(alpha[t], counts[t]);
    }
    return result - log_rising_factorial(alpha_sum, n);
}

double log_multinomial_coefficient(std::span<const long> counts) {
    long n = 0;
    double result = 0.0;
    for (long c : counts) {
        n += c;
        result -= std::lgamma(static_cast<double>(c) + 1.0);
    }
    return result + std::lgamma(static_cast<double>(n) + 1.0);
}

// Reductions and sampling ---------------------------------------------------

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) throw DomainError("log_sum_exp of an empty range");
    const double max = *std::max_element(values.begin(), values.end());
    if (max == kNegInf) throw DomainError("log_sum_exp: every input is -inf");
    if (std::isnan(max) || max == std::numeric_limits<double>::infinity())
        throw DomainError("log_sum_exp: non-finite maximum");
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - max);
    return max + std::log(sum);
}

double log_sum_exp(double a, double b) {
    const double pair[2] = {a, b};
    return log_sum_exp(std::span<const double>(pair, 2));
}

void normalize_log_weights(std::span<double> log_weights) {
    const double lse = log_sum_exp(log_weights);
    for (double& w : log_weights) w = std::exp(w - lse);
}

SimplexVector sample_dirichlet(std::span<const double> alpha, Rng& rng) {
    if (alpha.empty()) throw DomainError("sample_dirichlet: zero-dimensional alpha");
    std::vector<double> logs(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) logs[i] = rng.log_gamma_draw(alpha[i]);
    normalize_log_weights(logs);
    return SimplexVector::from_weights(logs);
}

SimplexVector sample_dirichlet(std::size_t dim, double concentration, Rng& rng) {
    std::vector<double> alpha(dim, concentration);
    return sample_dirichlet(alpha, rng);
}

std::size_t sample_categorical(std::span<const double> weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw DomainError("sample_categorical: negative or NaN weight");
        total += w;
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw DomainError("sample_categorical: weights sum to zero");
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] > 0.0) last_positive = i;
        acc += weights[i];
        if (target < acc) return i;
    }
    return last_positive;
}

std::size_t sample_categorical_log(std::span<const double> log_weights, Rng& rng) {
    std::vector<double> w(log_weights.begin(), log_weights.end());
    normalize_log_weights(w);
    return sample_categorical(w, rng);
}

std::vector<long> sample_multinomial(long n, std::span<const double> probs, Rng& rng) {
    if (n < 0) throw DomainError("sample_multinomial: negative size");
    if (probs.empty()) throw DomainError("sample_multinomial: zero-dimensional probabilities");
    std::vector<long> counts(probs.size(), 0);
    if (n == 0) return counts;
    CategoricalSampler sampler(probs);
    for (long k = 0; k < n; ++k) ++counts[sampler(rng)];
    return counts;
}

CategoricalSampler::CategoricalSampler(std::span<const double> weights) : cumulative_(weights.size()) {
    if (weights.empty()) throw DomainError("CategoricalSampler: zero-size distribution");
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0)) throw DomainError("CategoricalSampler: negative or NaN weight");
        acc += weights[i];
        cumulative_[i] = acc;
    }
    if (!(acc > 0.0) || !std::isfinite(acc)) throw DomainError("CategoricalSampler: weights sum to zero");
}

std::size_t CategoricalSampler::operator()(Rng& rng) const {
    const double target = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    std::size_t idx = static_cast<std::size_t>(it - cumulative_.begin());
    if (idx == cumulative_.size()) {
        // target rounded up to the total; fall back to the last positive entry
        idx = cumulative_.size() - 1;
        while (idx > 0 && cumulative_[idx] == cumulative_[idx - 1]) --idx;
    }
    return idx;
}

}  // namespace stldac
