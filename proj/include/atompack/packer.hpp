#pragma once

// Packing engine: both strategies end-to-end.
//
//   padding: segment each document into chunks of (atom_size - 1) tokens
//            plus an end token, pad the tail, shuffle, merge/split to msl.
//   concat:  join all documents into one EOS-interleaved stream, split into
//            atom_size chunks, shuffle, merge/split to msl.
//
// The whole pipeline is a pure function of (docs, config): the shuffle
// generator is pinned (rng.hpp) and any parallel execution must reproduce
// the sequential output bit-for-bit.

#include <algorithm>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "atompack/accounting.hpp"
#include "atompack/config.hpp"
#include "atompack/corpus.hpp"
#include "atompack/rng.hpp"
#include "atompack/sequence.hpp"
#include "atompack/sha256.hpp"
#include "atompack/types.hpp"

namespace atompack {

struct PackedDataset {
    std::vector<PackedSequence> sequences;
    PackConfig config;
    PackStats stats;
    std::string payload_sha256;     // hex digest of the token payload bytes
    bool has_provenance = false;    // false when loaded from disk

    bool operator==(const PackedDataset&) const = default;
};

// ---------------------------------------------------------------------------
// Padding-strategy segmentation
// ---------------------------------------------------------------------------

// Full chunks carry (atom_size - 1) document tokens plus one end token.
// The tail keeps the remaining tokens and is padded to atom_size when
// atom_size <= msl, or to the smallest multiple of msl covering it when
// atom_size > msl (never to atom_size, which could create all-pad rows
// after splitting).
inline std::vector<Atom> segment_padding(const Document& doc, const PackConfig& cfg) {
    if (doc.tokens.empty()) throw ConfigError("cannot segment an empty document");
    const std::uint64_t chunk_words = cfg.atom_size - 1;
    const std::uint64_t len = doc.tokens.size();
    const std::uint64_t full = len / chunk_words;
    const std::uint64_t rem = len % chunk_words;

    std::vector<Atom> atoms;
    atoms.reserve(full + (rem > 0 ? 1 : 0));
    for (std::uint64_t k = 0; k < full; ++k) {
        Atom a;
        a.tokens.assign(doc.tokens.begin() + static_cast<std::ptrdiff_t>(k * chunk_words),
                        doc.tokens.begin() + static_cast<std::ptrdiff_t>((k + 1) * chunk_words));
        a.tokens.push_back(cfg.eos_id);
        a.classes.assign(chunk_words, TokenClass::word);
        a.classes.push_back(TokenClass::chunk_eos);
        a.spans = {Span{doc.doc_id, k * chunk_words, chunk_words}};
        atoms.push_back(std::move(a));
    }
    if (rem > 0) {
        std::uint64_t target =
            cfg.atom_size <= cfg.msl ? cfg.atom_size : cfg.msl * ceil_div(rem, cfg.msl);
        Atom a;
        a.tokens.assign(doc.tokens.begin() + static_cast<std::ptrdiff_t>(full * chunk_words),
                        doc.tokens.end());
        a.tokens.resize(target, cfg.pad_id);
        a.classes.assign(rem, TokenClass::word);
        a.classes.resize(target, TokenClass::tail_pad);
        a.spans = {Span{doc.doc_id, full * chunk_words, rem}};
        a.pad_count = target - rem;
        atoms.push_back(std::move(a));
    }
    return atoms;
}

// ---------------------------------------------------------------------------
// Concat-strategy stream
// ---------------------------------------------------------------------------

// One long token stream: doc0 ++ [EOS] ++ doc1 ++ [EOS] ++ ...  Document i
// occupies [region_start[i], region_start[i+1]) with its EOS last, which is
// enough to recover per-token provenance without a parallel array.
struct ConcatStream {
    std::vector<TokenId> tokens;
    std::vector<std::uint64_t> region_start;  // size = docs + 1
};

inline ConcatStream build_concat_stream(const std::vector<Document>& docs,
                                        const PackConfig& cfg) {
    ConcatStream stream;
    std::uint64_t total = 0;
    for (const Document& d : docs) total += d.tokens.size() + 1;
    stream.tokens.reserve(total);
    stream.region_start.reserve(docs.size() + 1);
    for (const Document& d : docs) {
        if (d.tokens.empty()) throw ConfigError("cannot pack an empty document");
        stream.region_start.push_back(stream.tokens.size());
        stream.tokens.insert(stream.tokens.end(), d.tokens.begin(), d.tokens.end());
        stream.tokens.push_back(cfg.eos_id);
    }
    stream.region_start.push_back(stream.tokens.size());
    return stream;
}

// Chops the stream into atoms of exactly atom_size. The final partial chunk
// is dropped when drop_remainder, padded to atom_size otherwise.
inline std::vector<Atom> split_stream(const ConcatStream& stream,
                                      const std::vector<Document>& docs,
                                      const PackConfig& cfg) {
    const std::uint64_t atom = cfg.atom_size;
    const std::uint64_t len = stream.tokens.size();
    const std::uint64_t full = len / atom;
    const std::uint64_t rem = len % atom;
    const bool keep_partial = rem > 0 && !cfg.drop_concat_remainder;

    std::vector<Atom> atoms;
    atoms.reserve(full + (keep_partial ? 1 : 0));

    std::size_t region = 0;  // index of doc region containing the cursor
    auto emit = [&](std::uint64_t begin, std::uint64_t end) {
        Atom a;
        a.tokens.assign(stream.tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                        stream.tokens.begin() + static_cast<std::ptrdiff_t>(end));
        a.classes.reserve(end - begin);
        for (std::uint64_t pos = begin; pos < end; ++pos) {
            while (pos >= stream.region_start[region + 1]) ++region;
            std::uint64_t off = pos - stream.region_start[region];
            if (off < docs[region].tokens.size()) {
                a.classes.push_back(TokenClass::word);
                if (!a.spans.empty() && a.spans.back().doc_id == docs[region].doc_id &&
                    a.spans.back().start + a.spans.back().length == off) {
                    ++a.spans.back().length;
                } else {
                    a.spans.push_back(Span{docs[region].doc_id, off, 1});
                }
            } else {
                a.classes.push_back(TokenClass::stream_eos);
            }
        }
        atoms.push_back(std::move(a));
    };

    for (std::uint64_t k = 0; k < full; ++k) emit(k * atom, (k + 1) * atom);
    if (keep_partial) {
        emit(full * atom, len);
        Atom& tail = atoms.back();
        tail.tokens.resize(atom, cfg.pad_id);
        tail.classes.resize(atom, TokenClass::tail_pad);
        tail.pad_count = atom - rem;
    }
    return atoms;
}

// ---------------------------------------------------------------------------
// Shuffle and reshape
// ---------------------------------------------------------------------------

inline std::vector<Atom> shuffle_atoms(std::vector<Atom> atoms, std::uint64_t seed) {
    fisher_yates(atoms, seed);
    return atoms;
}

// Merge (atom_size < msl), identity (=), or split (atom_size > msl).
// Provenance spans are carried through exactly; an incomplete final merge
// group is padded to msl with merge pads.
inline std::vector<PackedSequence> reshape_to_msl(const std::vector<Atom>& atoms,
                                                  const PackConfig& cfg) {
    if (cfg.msl % cfg.atom_size != 0 && cfg.atom_size % cfg.msl != 0)
        throw IncompatibleSizes("atom_size (" + std::to_string(cfg.atom_size) +
                                ") must divide msl (" + std::to_string(cfg.msl) +
                                ") or be a multiple of it");
    std::vector<PackedSequence> sequences;

    if (cfg.atom_size <= cfg.msl) {
        const std::uint64_t group = cfg.msl / cfg.atom_size;
        PackedSequence cur;
        std::uint64_t in_group = 0;
        for (const Atom& a : atoms) {
            if (a.tokens.size() != cfg.atom_size)
                throw IncompatibleSizes("atom length " + std::to_string(a.tokens.size()) +
                                        " does not match atom_size " +
                                        std::to_string(cfg.atom_size));
            cur.tokens.insert(cur.tokens.end(), a.tokens.begin(), a.tokens.end());
            cur.classes.insert(cur.classes.end(), a.classes.begin(), a.classes.end());
            cur.spans.insert(cur.spans.end(), a.spans.begin(), a.spans.end());
            if (++in_group == group) {
                sequences.push_back(std::move(cur));
                cur = PackedSequence{};
                in_group = 0;
            }
        }
        if (in_group > 0) {
            cur.tokens.resize(cfg.msl, cfg.pad_id);
            cur.classes.resize(cfg.msl, TokenClass::merge_pad);
            sequences.push_back(std::move(cur));
        }
    } else {
        for (const Atom& a : atoms) {
            if (a.tokens.size() == 0 || a.tokens.size() % cfg.msl != 0 ||
                a.tokens.size() > cfg.atom_size)
                throw IncompatibleSizes("atom length " + std::to_string(a.tokens.size()) +
                                        " is not a positive multiple of msl within atom_size");
            auto provs = detail::expand_provenance(a);
            for (std::uint64_t off = 0; off < a.tokens.size(); off += cfg.msl) {
                PackedSequence seq;
                seq.tokens.assign(a.tokens.begin() + static_cast<std::ptrdiff_t>(off),
                                  a.tokens.begin() + static_cast<std::ptrdiff_t>(off + cfg.msl));
                seq.classes.assign(a.classes.begin() + static_cast<std::ptrdiff_t>(off),
                                   a.classes.begin() + static_cast<std::ptrdiff_t>(off + cfg.msl));
                seq.spans = detail::build_spans(std::vector<detail::PosProv>(
                    provs.begin() + static_cast<std::ptrdiff_t>(off),
                    provs.begin() + static_cast<std::ptrdiff_t>(off + cfg.msl)));
                sequences.push_back(std::move(seq));
            }
        }
    }

    for (PackedSequence& seq : sequences) seq.loss_mask = compute_loss_mask(seq.tokens, cfg.pad_id);
    return sequences;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

namespace detail {

inline void validate_docs(const std::vector<Document>& docs, const PackConfig& cfg) {
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].doc_id != i)
            throw ConfigError("doc_id values must be contiguous from 0 in corpus order");
        if (docs[i].tokens.empty()) throw ConfigError("cannot pack an empty document");
        for (TokenId t : docs[i].tokens)
            if (t == cfg.eos_id || t == cfg.pad_id)
                throw ReservedTokenEmitted("document " + std::to_string(i) +
                                           " contains reserved id " + std::to_string(t));
    }
}

inline std::vector<Atom> segment_all_padding(const std::vector<Document>& docs,
                                             const PackConfig& cfg, unsigned threads) {
    std::vector<std::vector<Atom>> per_doc(docs.size());
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) per_doc[i] = segment_padding(docs[i], cfg);
    };
    if (threads <= 1 || docs.size() < 2) {
        run(0, docs.size());
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (docs.size() + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            std::size_t begin = t * chunk;
            std::size_t end = std::min(docs.size(), begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(run, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    std::vector<Atom> atoms;
    for (auto& v : per_doc)
        for (auto& a : v) atoms.push_back(std::move(a));
    return atoms;
}

inline std::vector<std::uint8_t> payload_bytes(const std::vector<PackedSequence>& sequences) {
    std::vector<std::uint8_t> bytes;
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.tokens.size();
    bytes.reserve(n * 4);
    for (const auto& s : sequences) {
        for (TokenId t : s.tokens) {
            bytes.push_back(static_cast<std::uint8_t>(t));
            bytes.push_back(static_cast<std::uint8_t>(t >> 8));
            bytes.push_back(static_cast<std::uint8_t>(t >> 16));
            bytes.push_back(static_cast<std::uint8_t>(t >> 24));
        }
    }
    return bytes;
}

}  // namespace detail

inline PackedDataset pack(const std::vector<Document>& docs, const PackConfig& cfg,
                          unsigned threads = 1) {
    cfg.validate();
    detail::validate_docs(docs, cfg);
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

    std::vector<Atom> atoms;
    if (cfg.strategy == Strategy::padding) {
        atoms = detail::segment_all_padding(docs, cfg, threads);
    } else {
        ConcatStream stream = build_concat_stream(docs, cfg);
        atoms = split_stream(stream, docs, cfg);
    }
    atoms = shuffle_atoms(std::move(atoms), cfg.seed);

    PackedDataset ds;
    ds.sequences = reshape_to_msl(atoms, cfg);
    ds.config = cfg;
    ds.stats = compute_stats(ds.sequences, cfg);
    ds.payload_sha256 = sha256_hex(detail::payload_bytes(ds.sequences));
    ds.has_provenance = true;
    return ds;
}

}  // namespace atompack
