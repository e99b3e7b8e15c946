#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include <textevo/errors.hpp>

namespace textevo {

/// Seeded random source with platform-independent draws.
///
/// std::mt19937_64 has a fully specified output sequence, but the standard
/// distributions do not, so bounded ints and unit reals are derived from raw
/// engine words here. State round-trips through a string for checkpoints.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, bound) via rejection sampling.
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) throw ContractViolation("Rng::below: bound must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % bound;
    }

    /// Uniform double in [0, 1) with 53 bits of randomness.
    double unit_real() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    std::string save_state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void restore_state(const std::string& state) {
        std::istringstream is(state);
        is >> engine_;
        if (is.fail()) throw ContractViolation("Rng::restore_state: malformed state string");
    }

private:
    std::mt19937_64 engine_;
};

} // namespace textevo
