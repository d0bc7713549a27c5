#pragma once

// Deterministic coherence/bias measurements over a packed dataset, plus a
// count-based n-gram probe perplexity. These quantify what sub-MSL atoms do
// to sequence coherence (unrelated chunks merged into one row) and what
// super-MSL atoms do to independence (one chunk split across consecutive
// rows), without any gradient training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "atompack/packer.hpp"
#include "atompack/sequence.hpp"
#include "atompack/types.hpp"

namespace atompack {

struct CoherenceReport {
    // Adjacent word-token pairs (reserved positions removed from the
    // adjacency) whose two tokens come from different documents.
    double cross_doc_transition_fraction = 0.0;
    std::uint64_t cross_doc_pairs = 0;
    std::uint64_t eligible_pairs = 0;

    // Consecutive sequence pairs sharing at least one document id.
    double adjacent_sequence_overlap = 0.0;
    std::uint64_t overlapping_pairs = 0;
    std::uint64_t adjacent_pairs = 0;

    // Sequences whose spans reference exactly one document.
    double sequences_single_doc_fraction = 0.0;
    std::uint64_t single_doc_sequences = 0;
    std::uint64_t sequence_count = 0;
};

inline CoherenceReport coherence_report(const PackedDataset& ds) {
    CoherenceReport report;
    report.sequence_count = ds.sequences.size();

    std::set<std::uint64_t> prev_docs;
    bool have_prev = false;
    for (const PackedSequence& seq : ds.sequences) {
        if (!ds.has_provenance || !seq.has_provenance())
            throw MissingProvenance("coherence metrics require provenance spans; "
                                    "re-pack the corpus in memory to obtain them");
        auto provs = detail::expand_provenance(seq);
        bool have_word = false;
        std::uint64_t prev_doc = 0;
        for (const auto& p : provs) {
            if (p.cls != TokenClass::word) continue;
            if (have_word) {
                ++report.eligible_pairs;
                if (p.doc_id != prev_doc) ++report.cross_doc_pairs;
            }
            prev_doc = p.doc_id;
            have_word = true;
        }

        std::set<std::uint64_t> docs = referenced_docs(seq);
        if (docs.size() == 1) ++report.single_doc_sequences;
        if (have_prev) {
            ++report.adjacent_pairs;
            bool shares = std::ranges::any_of(docs, [&](std::uint64_t d) {
                return prev_docs.count(d) > 0;
            });
            if (shares) ++report.overlapping_pairs;
        }
        prev_docs = std::move(docs);
        have_prev = true;
    }

    if (report.eligible_pairs > 0)
        report.cross_doc_transition_fraction =
            static_cast<double>(report.cross_doc_pairs) / static_cast<double>(report.eligible_pairs);
    if (report.adjacent_pairs > 0)
        report.adjacent_sequence_overlap =
            static_cast<double>(report.overlapping_pairs) / static_cast<double>(report.adjacent_pairs);
    if (report.sequence_count > 0)
        report.sequences_single_doc_fraction = static_cast<double>(report.single_doc_sequences) /
                                               static_cast<double>(report.sequence_count);
    return report;
}

// ---------------------------------------------------------------------------
// Count-based probe perplexity
// ---------------------------------------------------------------------------

// Add-k smoothed n-gram model. A position participates when it and its
// (order - 1) predecessors are all loss-eligible; contexts never cross a
// sequence boundary, so the probe sees exactly what a trainer would see.
struct ProbeModel {
    std::uint32_t order = 2;
    std::uint64_t vocab_size = 0;
    double smoothing = 1.0;  // add-one by default
    std::map<std::vector<TokenId>, std::map<TokenId, std::uint64_t>> counts;
    std::map<std::vector<TokenId>, std::uint64_t> context_totals;
};

namespace detail {

template <typename Fn>
void for_each_ngram(const PackedDataset& ds, std::uint32_t order, Fn&& fn) {
    const std::uint32_t ctx = order - 1;
    for (const PackedSequence& seq : ds.sequences) {
        const auto& mask = seq.loss_mask;
        for (std::size_t i = ctx; i < seq.tokens.size(); ++i) {
            bool eligible = mask.empty() || mask[i];
            for (std::size_t k = i - ctx; eligible && k < i; ++k)
                if (!mask.empty() && !mask[k]) eligible = false;
            if (!eligible) continue;
            fn(std::vector<TokenId>(seq.tokens.begin() + static_cast<std::ptrdiff_t>(i - ctx),
                                    seq.tokens.begin() + static_cast<std::ptrdiff_t>(i)),
               seq.tokens[i]);
        }
    }
}

}  // namespace detail

inline ProbeModel train_probe(const PackedDataset& train, std::uint32_t order,
                              std::uint64_t vocab_size, double smoothing = 1.0) {
    if (order < 1) throw ConfigError("probe order must be >= 1");
    if (vocab_size == 0) throw ConfigError("probe vocab_size must be positive");
    ProbeModel model;
    model.order = order;
    model.vocab_size = vocab_size;
    model.smoothing = smoothing;
    detail::for_each_ngram(train, order, [&](std::vector<TokenId> ctx, TokenId next) {
        ++model.counts[ctx][next];
        ++model.context_totals[ctx];
    });
    return model;
}

inline double probe_log_prob(const ProbeModel& model, const std::vector<TokenId>& ctx,
                             TokenId next) {
    std::uint64_t joint = 0, total = 0;
    if (auto it = model.counts.find(ctx); it != model.counts.end()) {
        if (auto jt = it->second.find(next); jt != it->second.end()) joint = jt->second;
        total = model.context_totals.at(ctx);
    }
    double num = static_cast<double>(joint) + model.smoothing;
    double den = static_cast<double>(total) +
                 model.smoothing * static_cast<double>(model.vocab_size);
    return std::log(num / den);
}

// exp(-(1/N) * sum log p(token | context)) over eligible eval positions.
inline double probe_perplexity(const PackedDataset& train, const PackedDataset& eval,
                               std::uint32_t order, std::uint64_t vocab_size,
                               double smoothing = 1.0) {
    ProbeModel model = train_probe(train, order, vocab_size, smoothing);
    double log_sum = 0.0;
    std::uint64_t n = 0;
    detail::for_each_ngram(eval, order, [&](std::vector<TokenId> ctx, TokenId next) {
        log_sum += probe_log_prob(model, ctx, next);
        ++n;
    });
    if (n == 0) throw EmptyEval("no eligible evaluation positions");
    return std::exp(-log_sum / static_cast<double>(n));
}

}  // namespace atompack
