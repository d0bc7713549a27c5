#pragma once

// Pinned deterministic RNG for shuffling. std::mt19937/std::shuffle are not
// specified bit-for-bit across standard libraries, so the dataset contract
// pins SplitMix64 plus a Durstenfeld Fisher-Yates pass. Identical
// (items, seed) yields the identical permutation on every platform.

#include <cstdint>
#include <utility>
#include <vector>

namespace atompack {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform-enough bounded draw; modulo reduction is part of the pinned
    // definition (bias is irrelevant next to cross-platform stability here).
    std::uint64_t next_below(std::uint64_t bound) { return next() % bound; }

private:
    std::uint64_t state_;
};

template <typename T>
void fisher_yates(std::vector<T>& items, std::uint64_t seed) {
    SplitMix64 rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

}  // namespace atompack
