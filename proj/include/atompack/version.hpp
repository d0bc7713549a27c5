#pragma once

namespace atompack {

inline constexpr const char* kToolName = "atompack";
inline constexpr const char* kToolVersion = "0.1.0";

// Shuffle order is part of the dataset contract: the generator identifier is
// written into every manifest so a dataset can be reproduced bit-for-bit.
inline constexpr const char* kShuffleGenerator = "splitmix64-fisher-yates-v1";

}  // namespace atompack
