#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "atompack/types.hpp"

namespace atompack {

// One shuffling unit. tokens/classes are parallel; spans cover exactly the
// word-class positions, in order.
struct Atom {
    std::vector<TokenId> tokens;
    std::vector<TokenClass> classes;
    std::vector<Span> spans;
    std::uint64_t pad_count = 0;  // trailing pad ids

    bool operator==(const Atom&) const = default;
};

// Exactly-msl output row. classes/spans are in-memory provenance; the
// on-disk format carries tokens and loss_mask only.
struct PackedSequence {
    std::vector<TokenId> tokens;
    std::vector<std::uint8_t> loss_mask;  // 1 = participates in loss
    std::vector<TokenClass> classes;
    std::vector<Span> spans;

    bool operator==(const PackedSequence&) const = default;

    bool has_provenance() const { return classes.size() == tokens.size(); }
};

namespace detail {

// Per-position provenance, expanded from (classes, spans).
struct PosProv {
    TokenClass cls = TokenClass::word;
    std::uint64_t doc_id = 0;  // valid only for word positions
    std::uint64_t offset = 0;
};

template <typename SeqLike>
std::vector<PosProv> expand_provenance(const SeqLike& s) {
    std::vector<PosProv> out(s.tokens.size());
    std::size_t span_idx = 0;
    std::uint64_t used = 0;  // word tokens consumed from current span
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
        out[i].cls = s.classes[i];
        if (s.classes[i] != TokenClass::word) continue;
        while (span_idx < s.spans.size() && used == s.spans[span_idx].length) {
            ++span_idx;
            used = 0;
        }
        out[i].doc_id = s.spans[span_idx].doc_id;
        out[i].offset = s.spans[span_idx].start + used;
        ++used;
    }
    return out;
}

// Rebuild minimal spans from per-position provenance: consecutive word
// positions from the same doc with consecutive offsets coalesce.
inline std::vector<Span> build_spans(const std::vector<PosProv>& provs) {
    std::vector<Span> spans;
    for (const PosProv& p : provs) {
        if (p.cls != TokenClass::word) continue;
        if (!spans.empty() && spans.back().doc_id == p.doc_id &&
            spans.back().start + spans.back().length == p.offset) {
            ++spans.back().length;
        } else {
            spans.push_back(Span{p.doc_id, p.offset, 1});
        }
    }
    return spans;
}

}  // namespace detail

inline std::set<std::uint64_t> referenced_docs(const PackedSequence& s) {
    std::set<std::uint64_t> docs;
    for (const Span& sp : s.spans) docs.insert(sp.doc_id);
    return docs;
}

// Loss mask rule: within each maximal run of pad-valued tokens the first
// position keeps the loss (it doubles as the end marker when pad == EOS) and
// the rest are masked out. Everything else participates.
inline std::vector<std::uint8_t> compute_loss_mask(const std::vector<TokenId>& tokens,
                                                   TokenId pad_id) {
    std::vector<std::uint8_t> mask(tokens.size(), 1);
    bool in_run = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == pad_id) {
            if (in_run) mask[i] = 0;
            in_run = true;
        } else {
            in_run = false;
        }
    }
    return mask;
}

}  // namespace atompack
