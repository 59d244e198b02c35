#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stldac/rng.hpp"

namespace stldac {

/// Nonnegative reals summing to one (within 1e-10).
class SimplexVector {
public:
    static constexpr double kTolerance = 1e-10;

    SimplexVector() = default;
    /// Validates; throws ValidationError when not on the simplex.
    explicit SimplexVector(std::vector<double> values);
    /// Normalizes nonnegative weights with a positive sum.
    static SimplexVector from_weights(std::span<const double> weights);
    static SimplexVector uniform(std::size_t dim);

    std::size_t dim() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }

    friend bool operator==(const SimplexVector&, const SimplexVector&) = default;

private:
    std::vector<double> values_;
};

/// Strictly positive, finite reals.
class PositiveVector {
public:
    PositiveVector() = default;
    explicit PositiveVector(std::vector<double> values);

    std::size_t dim() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }
    double sum() const noexcept;

private:
    std::vector<double> values_;
};

/// True when values are nonnegative and sum to one within tol.
bool is_simplex(std::span<const double> values, double tol = SimplexVector::kTolerance);

// Special functions -------------------------------------------------------

double digamma(double x);
double trigamma(double x);
double log_gamma(double x);

/// log of the rising factorial x (x+1) ... (x+n-1); 0 when n == 0.
double log_rising_factorial(double x, long n);

/// E[log theta_t] under Dir(gamma): digamma(gamma_t) - digamma(sum gamma).
std::vector<double> e_log_theta(std::span<const double> gamma);
inline std::vector<double> e_log_theta(const PositiveVector& gamma) { return e_log_theta(gamma.span()); }

/// log Dirichlet-multinomial probability of an ordered sequence with the
/// given category counts (no multinomial coefficient).
double dirichlet_multinomial_log_prob(std::span<const long> counts, std::span<const double> alpha);

/// log of n! / prod(c_i!) for a count vector.
double log_multinomial_coefficient(std::span<const long> counts);

// Reductions and sampling ---------------------------------------------------

/// Throws DomainError if every input is -inf or the input is empty.
double log_sum_exp(std::span<const double> values);
double log_sum_exp(double a, double b);

/// In-place conversion of log weights to probabilities.
void normalize_log_weights(std::span<double> log_weights);

SimplexVector sample_dirichlet(std::span<const double> alpha, Rng& rng);
/// Symmetric Dirichlet.
SimplexVector sample_dirichlet(std::size_t dim, double concentration, Rng& rng);

/// Draw an index with probability proportional to weights (need not sum to 1).
std::size_t sample_categorical(std::span<const double> weights, Rng& rng);
/// Draw an index with probability proportional to exp(log_weights).
std::size_t sample_categorical_log(std::span<const double> log_weights, Rng& rng);

/// Multinomial(n, probs) counts.
std::vector<long> sample_multinomial(long n, std::span<const double> probs, Rng& rng);

/// Repeated categorical draws from a fixed distribution via binary search on
/// the cumulative sums.
class CategoricalSampler {
public:
    CategoricalSampler() = default;
    explicit CategoricalSampler(std::span<const double> weights);

    std::size_t operator()(Rng& rng) const;
    std::size_t dim() const noexcept { return cumulative_.size(); }

private:
    std::vector<double> cumulative_;
};

}  // namespace stldac
