#ifndef PSPC_RNG_HPP
#define PSPC_RNG_HPP

#include <cstdint>
#include <random>

namespace pspc {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed for substream (stream, index) of a master seed; independent of evaluation order.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t master, std::uint64_t stream, std::uint64_t index)
        : engine_(substream_seed(master, stream, index)) {}

    double normal() { return normal_(engine_); }
    std::size_t uniform_index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

}  // namespace pspc

#endif
