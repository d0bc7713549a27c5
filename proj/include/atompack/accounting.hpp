#pragma once

#include <cstdint>
#include <vector>

#include "atompack/config.hpp"
#include "atompack/sequence.hpp"
#include "atompack/types.hpp"

namespace atompack {

// Output-token accounting. Every token falls in exactly one bucket:
//   word_tokens - document text
//   eos_tokens  - EOS interleaved in the concat stream
//   pad_subseq  - end tokens appended to full chunks (padding source (a);
//                 pad and EOS share an id, and these chunk-end markers are
//                 counted as padding overhead, not text)
//   pad_tail    - pads completing document tails plus pads completing an
//                 incomplete final merge group (padding source (b))
struct PackStats {
    std::uint64_t word_tokens = 0;
    std::uint64_t eos_tokens = 0;
    std::uint64_t pad_subseq = 0;
    std::uint64_t pad_tail = 0;
    std::uint64_t sequence_count = 0;
    std::uint64_t steps_per_epoch = 0;
    std::uint64_t total_output_tokens = 0;

    bool operator==(const PackStats&) const = default;
};

struct TokenBudget {
    double param_count = 0;
    double optimal_tokens = 0;
    double epochs_equivalent = 0;
};

struct StepSizeReport {
    std::uint64_t steps_concat = 0;
    std::uint64_t steps_padding = 0;
    std::int64_t absolute_overhead = 0;  // padding - concat
    double relative_overhead = 0.0;      // (padding - concat) / concat
};

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

inline PackStats compute_stats(const std::vector<PackedSequence>& sequences,
                               const PackConfig& cfg) {
    PackStats stats;
    stats.sequence_count = sequences.size();
    stats.total_output_tokens = sequences.size() * cfg.msl;
    for (const PackedSequence& seq : sequences) {
        if (!seq.has_provenance())
            throw MissingProvenance("sequence lacks provenance classes; "
                                    "stats cannot be recomputed from tokens alone");
        for (TokenClass c : seq.classes) {
            switch (c) {
                case TokenClass::word: ++stats.word_tokens; break;
                case TokenClass::stream_eos: ++stats.eos_tokens; break;
                case TokenClass::chunk_eos: ++stats.pad_subseq; break;
                case TokenClass::tail_pad:
                case TokenClass::merge_pad: ++stats.pad_tail; break;
            }
        }
    }
    stats.steps_per_epoch =
        sequences.empty() ? 0 : ceil_div(stats.sequence_count, cfg.batch_size);
    return stats;
}

// Chinchilla-style linear scaling anchored at 400M parameters -> 8B tokens.
inline TokenBudget chinchilla_budget(double param_count, double corpus_word_tokens = 0.0) {
    if (param_count <= 0) throw ConfigError("param_count must be positive");
    TokenBudget budget;
    budget.param_count = param_count;
    budget.optimal_tokens = param_count * (8e9 / 400e6);
    budget.epochs_equivalent =
        corpus_word_tokens > 0 ? budget.optimal_tokens / corpus_word_tokens : 0.0;
    return budget;
}

inline StepSizeReport compare_step_sizes(const PackStats& stats_concat,
                                         const PackConfig& cfg_concat,
                                         const PackStats& stats_padding,
                                         const PackConfig& cfg_padding) {
    if (cfg_concat.msl != cfg_padding.msl)
        throw ConfigMismatch("step-size comparison requires equal msl (" +
                             std::to_string(cfg_concat.msl) + " vs " +
                             std::to_string(cfg_padding.msl) + ")");
    if (cfg_concat.batch_size != cfg_padding.batch_size)
        throw ConfigMismatch("step-size comparison requires equal batch_size (" +
                             std::to_string(cfg_concat.batch_size) + " vs " +
                             std::to_string(cfg_padding.batch_size) + ")");
    StepSizeReport report;
    report.steps_concat = stats_concat.steps_per_epoch;
    report.steps_padding = stats_padding.steps_per_epoch;
    report.absolute_overhead = static_cast<std::int64_t>(report.steps_padding) -
                               static_cast<std::int64_t>(report.steps_concat);
    report.relative_overhead =
        report.steps_concat == 0
            ? 0.0
            : static_cast<double>(report.absolute_overhead) / static_cast<double>(report.steps_concat);
    return report;
}

// Arithmetic projection of PackStats from document lengths alone, without
// materializing the dataset. Mirrors the packing rules exactly; serves as an
// independent cross-check and as the fast path for very large corpora.
inline PackStats project_stats(const std::vector<std::uint64_t>& doc_lengths,
                               const PackConfig& cfg) {
    cfg.validate();
    PackStats stats;
    const std::uint64_t msl = cfg.msl;
    const std::uint64_t atom = cfg.atom_size;

    std::uint64_t n_atoms = 0;       // atoms of exactly atom_size
    std::uint64_t split_seqs = 0;    // sequences produced when atom > msl

    if (cfg.strategy == Strategy::padding) {
        const std::uint64_t chunk_words = atom - 1;
        for (std::uint64_t len : doc_lengths) {
            if (len == 0) throw ConfigError("documents must be non-empty");
            std::uint64_t full = len / chunk_words;
            std::uint64_t rem = len % chunk_words;
            stats.word_tokens += len;
            stats.pad_subseq += full;
            if (atom <= msl) {
                n_atoms += full + (rem > 0 ? 1 : 0);
                if (rem > 0) stats.pad_tail += atom - rem;  // tail holds rem words, rest pads
            } else {
                split_seqs += full * (atom / msl);
                if (rem > 0) {
                    std::uint64_t target = msl * ceil_div(rem, msl);
                    stats.pad_tail += target - rem;
                    split_seqs += target / msl;
                }
            }
        }
    } else {
        std::uint64_t words = 0;
        for (std::uint64_t len : doc_lengths) {
            if (len == 0) throw ConfigError("documents must be non-empty");
            words += len;
        }
        std::uint64_t stream_len = words + doc_lengths.size();
        std::uint64_t full_atoms = stream_len / atom;
        std::uint64_t dropped = stream_len - full_atoms * atom;
        stats.word_tokens = words;
        stats.eos_tokens = doc_lengths.size();
        if (dropped > 0) {
            if (cfg.drop_concat_remainder) {
                // classify the dropped suffix into words vs stream EOS; each
                // doc region is (len words + 1 EOS), the EOS last
                std::uint64_t cut = full_atoms * atom;  // first dropped position
                std::uint64_t region_end = stream_len;
                std::uint64_t dropped_eos = 0, dropped_words = 0;
                for (auto it = doc_lengths.rbegin();
                     it != doc_lengths.rend() && region_end > cut; ++it) {
                    std::uint64_t region_start = region_end - (*it + 1);
                    std::uint64_t dropped_here = region_end - std::max(region_start, cut);
                    if (dropped_here > 0) {
                        ++dropped_eos;
                        dropped_words += dropped_here - 1;
                    }
                    region_end = region_start;
                }
                stats.word_tokens -= dropped_words;
                stats.eos_tokens -= dropped_eos;
            } else {
                ++full_atoms;
                stats.pad_tail += atom - dropped;
            }
        }
        if (atom <= msl) n_atoms = full_atoms;
        else split_seqs = full_atoms * (atom / msl);
    }

    if (atom <= msl) {
        std::uint64_t group = msl / atom;
        stats.sequence_count = n_atoms == 0 ? 0 : ceil_div(n_atoms, group);
        stats.pad_tail += stats.sequence_count * msl - n_atoms * atom;  // merge-group pads
    } else {
        stats.sequence_count = split_seqs;
    }
    stats.total_output_tokens = stats.sequence_count * msl;
    stats.steps_per_epoch =
        stats.sequence_count == 0 ? 0 : ceil_div(stats.sequence_count, cfg.batch_size);
    return stats;
}

}  // namespace atompack
