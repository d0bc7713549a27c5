#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace atompack {

using TokenId = std::uint32_t;

enum class Strategy : std::uint8_t { concat, padding };

inline const char* to_string(Strategy s) {
    return s == Strategy::concat ? "concat" : "padding";
}

// Every output token belongs to exactly one class; the accounting module
// reports the class totals as a partition of sequence_count * msl.
//   word       - token taken from a document body
//   stream_eos - EOS interleaved between documents in the concat stream
//   chunk_eos  - end marker appended to each full chunk (padding strategy)
//   tail_pad   - pad filling a document tail up to its target length
//   merge_pad  - pad filling an incomplete final merge group up to msl
enum class TokenClass : std::uint8_t {
    word = 0,
    stream_eos = 1,
    chunk_eos = 2,
    tail_pad = 3,
    merge_pad = 4,
};

inline bool is_pad_class(TokenClass c) {
    return c == TokenClass::tail_pad || c == TokenClass::merge_pad;
}

// Provenance for a contiguous run of word tokens: tokens
// [start, start + length) of document doc_id, in order.
struct Span {
    std::uint64_t doc_id = 0;
    std::uint64_t start = 0;
    std::uint64_t length = 0;

    bool operator==(const Span&) const = default;
};

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration / validation failures. fail-fast before any work starts.
struct ConfigError : Error {
    using Error::Error;
};
struct IncompatibleSizes : ConfigError {
    using ConfigError::ConfigError;
};
struct ConfigMismatch : ConfigError {
    using ConfigError::ConfigError;
};

// Input decoding failures.
struct ParseError : Error {
    using Error::Error;
};
struct ReservedTokenEmitted : Error {
    using Error::Error;
};
struct EmptyTokenization : Error {
    using Error::Error;
};

// Dataset file failures.
struct IoError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct ChecksumMismatch : Error {
    using Error::Error;
};

// Analysis failures.
struct MissingProvenance : Error {
    using Error::Error;
};
struct MissingManifest : Error {
    using Error::Error;
};
struct EmptyEval : Error {
    using Error::Error;
};
struct EmptySeries : Error {
    using Error::Error;
};
struct InsufficientCoverage : Error {
    using Error::Error;
};

}  // namespace atompack
