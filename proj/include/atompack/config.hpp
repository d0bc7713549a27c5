#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "atompack/types.hpp"

namespace atompack {

// Full description of one packing run. Defaults mirror the reference
// experiment grid: seed 42, batch 256, min_words 50, pad == EOS.
struct PackConfig {
    Strategy strategy = Strategy::concat;
    std::uint64_t msl = 64;        // tokens per output sequence
    std::uint64_t atom_size = 64;  // tokens per shuffling unit
    std::uint64_t seed = 42;
    std::uint64_t batch_size = 256;  // sequences per optimizer step
    TokenId eos_id = 256;
    TokenId pad_id = 256;
    std::uint64_t min_words = 50;
    bool drop_concat_remainder = true;

    bool operator==(const PackConfig&) const = default;

    // Throws IncompatibleSizes / ConfigError naming the violated rule.
    void validate() const {
        if (msl < 2) throw ConfigError("msl must be >= 2 (got " + std::to_string(msl) + ")");
        if (atom_size < 2)
            throw ConfigError("atom_size must be >= 2 (got " + std::to_string(atom_size) + ")");
        if (msl % atom_size != 0 && atom_size % msl != 0)
            throw IncompatibleSizes("atom_size (" + std::to_string(atom_size) +
                                    ") must divide msl (" + std::to_string(msl) +
                                    ") or be a multiple of it");
        if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    }
};

inline Strategy parse_strategy(std::string_view s) {
    if (s == "concat") return Strategy::concat;
    if (s == "padding") return Strategy::padding;
    throw ConfigError("unknown strategy '" + std::string(s) + "' (expected concat or padding)");
}

}  // namespace atompack
