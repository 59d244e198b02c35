#include "stldac/rng.hpp"

#include <cmath>

#include "stldac/error.hpp"

namespace stldac {

namespace {

std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::seed_seq seq{lo32(seed), hi32(seed)};
    engine_.seed(seq);
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag) {
    Rng rng(0);
    std::seed_seq seq{lo32(seed), hi32(seed), lo32(stream), hi32(stream), lo32(tag), hi32(tag), 0x5eedu};
    rng.engine_.seed(seq);
    return rng;
}

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::uniform_open() {
    double u = 0.0;
    while (u == 0.0) u = uniform();
    return u;
}

double Rng::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

double Rng::gamma(double shape) {
    if (!(shape > 0.0) || !std::isfinite(shape)) throw DomainError("gamma shape must be positive and finite");
    return std::gamma_distribution<double>(shape, 1.0)(engine_);
}

double Rng::log_gamma_draw(double shape) {
    if (!(shape > 0.0) || !std::isfinite(shape)) throw DomainError("gamma shape must be positive and finite");
    if (shape >= 1.0) return std::log(gamma(shape));
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    return std::log(gamma(shape + 1.0)) + std::log(uniform_open()) / shape;
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw DomainError("uniform_index over an empty range");
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

std::uint64_t Rng::next_u64() { return engine_(); }

}  // namespace stldac
