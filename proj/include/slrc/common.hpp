#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace slrc {

// Error taxonomy mirrored by the CLI exit codes: validation -> 2,
// numerical -> 3, I/O -> 4.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Gaussian stream with a fixed, documented algorithm so that a seed pins
/// the generated matrices. mt19937_64 supplies bits (its output sequence is
/// specified by the standard), uniforms take the top 53 bits, and normals
/// come from the polar Box-Muller transform rather than
/// std::normal_distribution, whose output is implementation-defined.
/// Identifier: "mt19937_64/polar-box-muller/v1".
class SeededRng {
public:
    static constexpr const char* kAlgorithm = "mt19937_64/polar-box-muller/v1";

    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Uniform in [0, 1) with 53 random bits.
    double next_uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via the polar (Marsaglia) method.
    double next_gaussian();

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 finalizer; the building block for all seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a 64-bit over a byte string; used to derive per-tensor seeds.
std::uint64_t stable_hash64(const std::string& bytes);

/// Seed for iteration `t`, retry `attempt` of a run seeded with `base`.
/// Pure arithmetic so drivers and tests can reproduce any internal stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t t, std::uint64_t attempt);

}  // namespace slrc
