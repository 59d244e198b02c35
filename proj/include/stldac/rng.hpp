#pragma once

#include <cstdint>
#include <random>

namespace stldac {

/// Seeded pseudo-random stream. Every stochastic routine takes one of these
/// explicitly; there is no global generator. Instances are single-owner.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Independent stream derived from (seed, stream, tag). Used to give
    /// users, replicates and restarts their own reproducible sequences.
    static Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag = 0);

    double uniform();           // [0, 1)
    double uniform_open();      // (0, 1)
    double normal();            // N(0, 1)
    double gamma(double shape); // Gamma(shape, 1)
    /// log of a Gamma(shape, 1) draw; stays finite for tiny shapes.
    double log_gamma_draw(double shape);
    std::size_t uniform_index(std::size_t n);
    std::uint64_t next_u64();

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace stldac
