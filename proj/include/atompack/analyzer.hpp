#pragma once

// Training-log analysis: EMA smoothing, epoch-fraction annotation, per-run
// ranking over the 100 segments of the last epoch, and comparison tables.
// Logs are produced externally (any trainer); this module only consumes them.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "atompack/accounting.hpp"
#include "atompack/types.hpp"

namespace atompack {

struct LogEntry {
    std::int64_t step = 0;
    double epoch_fraction = -1.0;  // < 0 means not annotated yet
    double perplexity = 0.0;
};

struct RunLog {
    std::string run_id;
    std::vector<LogEntry> entries;

    void validate() const {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].perplexity <= 0)
                throw ParseError("run " + run_id + ": perplexity must be positive at step " +
                                 std::to_string(entries[i].step));
            if (i > 0) {
                if (entries[i].step <= entries[i - 1].step)
                    throw ParseError("run " + run_id + ": steps must be strictly increasing (" +
                                     std::to_string(entries[i - 1].step) + " then " +
                                     std::to_string(entries[i].step) + ")");
                if (entries[i].epoch_fraction >= 0 && entries[i - 1].epoch_fraction >= 0 &&
                    entries[i].epoch_fraction < entries[i - 1].epoch_fraction)
                    throw ParseError("run " + run_id + ": epoch_fraction must be nondecreasing");
            }
        }
    }

    bool annotated() const {
        return !entries.empty() &&
               std::ranges::all_of(entries, [](const LogEntry& e) { return e.epoch_fraction >= 0; });
    }
};

// ---------------------------------------------------------------------------
// EMA
// ---------------------------------------------------------------------------

// S_1 = y_1; S_t = a*y_t + (1-a)*S_{t-1} with a = min(sqrt(alpha), cap).
// Steps are unit-spaced, so the effective weight is constant.
struct EmaParams {
    double alpha = 0.5;
    double cap = 0.999;

    double effective_weight() const {
        if (!(alpha > 0.0 && alpha <= 1.0))
            throw ConfigError("alpha must be in (0, 1] (got " + std::to_string(alpha) + ")");
        if (!(cap > 0.0 && cap <= 1.0))
            throw ConfigError("cap must be in (0, 1] (got " + std::to_string(cap) + ")");
        return std::min(std::sqrt(alpha), cap);
    }
};

inline std::vector<double> ema_smooth(const std::vector<double>& series, EmaParams params = {}) {
    if (series.empty()) throw EmptySeries("cannot smooth an empty series");
    const double a = params.effective_weight();
    std::vector<double> out;
    out.reserve(series.size());
    out.push_back(series.front());
    for (std::size_t i = 1; i < series.size(); ++i)
        out.push_back(a * series[i] + (1.0 - a) * out.back());
    return out;
}

// ---------------------------------------------------------------------------
// Epoch annotation
// ---------------------------------------------------------------------------

enum class EpochMode : std::uint8_t {
    sequence,    // sequences consumed / sequences per epoch
    word_token,  // word tokens consumed / word tokens per epoch
};

inline EpochMode parse_epoch_mode(const std::string& s) {
    if (s == "sequence") return EpochMode::sequence;
    if (s == "word-token" || s == "word_token") return EpochMode::word_token;
    throw ConfigError("unknown epoch mode '" + s + "' (expected sequence or word-token)");
}

// What the analyzer needs to know about the training dataset. Word-token
// mode additionally needs per-sequence word-token counts in dataset order.
struct EpochBasis {
    std::uint64_t sequences_per_epoch = 0;
    std::uint64_t batch_size = 0;
    std::vector<std::uint64_t> word_tokens_per_sequence;  // may be empty
};

// Per-sequence counts are loss-participating tokens (pads beyond the first
// of each run excluded), so a pad-free concat row counts all msl tokens and
// both epoch modes agree exactly on such datasets. Recoverable from a bare
// dataset file: the stored mask is used when present, else recomputed from
// token values.
inline EpochBasis epoch_basis_from_sequences(const std::vector<PackedSequence>& sequences,
                                             const PackConfig& cfg) {
    EpochBasis basis;
    basis.sequences_per_epoch = sequences.size();
    basis.batch_size = cfg.batch_size;
    basis.word_tokens_per_sequence.reserve(sequences.size());
    for (const auto& s : sequences) {
        std::uint64_t count = 0;
        if (s.loss_mask.size() == s.tokens.size()) {
            for (std::uint8_t m : s.loss_mask) count += m;
        } else {
            for (std::uint8_t m : compute_loss_mask(s.tokens, cfg.pad_id)) count += m;
        }
        basis.word_tokens_per_sequence.push_back(count);
    }
    return basis;
}

// Fills epoch_fraction for every entry. Step s means "after s optimizer
// steps"; each epoch consumes the dataset in order, the final partial batch
// counting as one step.
inline RunLog annotate_epochs(RunLog log, const EpochBasis& basis, EpochMode mode) {
    if (basis.sequences_per_epoch == 0 || basis.batch_size == 0)
        throw MissingManifest("epoch annotation requires sequences_per_epoch and batch_size");
    const std::uint64_t steps_per_epoch = ceil_div(basis.sequences_per_epoch, basis.batch_size);

    std::vector<std::uint64_t> word_prefix;
    std::uint64_t words_per_epoch = 0;
    if (mode == EpochMode::word_token) {
        if (basis.word_tokens_per_sequence.size() != basis.sequences_per_epoch)
            throw MissingManifest("word-token mode requires per-sequence word-token counts "
                                  "(point --dataset at the training dataset or embed them "
                                  "in the manifest)");
        word_prefix.resize(basis.sequences_per_epoch + 1, 0);
        for (std::size_t i = 0; i < basis.sequences_per_epoch; ++i)
            word_prefix[i + 1] = word_prefix[i] + basis.word_tokens_per_sequence[i];
        words_per_epoch = word_prefix.back();
        if (words_per_epoch == 0) throw MissingManifest("dataset contains no word tokens");
    }

    for (LogEntry& e : log.entries) {
        if (e.step < 0) throw ParseError("run " + log.run_id + ": negative step");
        const std::uint64_t s = static_cast<std::uint64_t>(e.step);
        const std::uint64_t epochs_done = s / steps_per_epoch;
        const std::uint64_t step_in_epoch = s % steps_per_epoch;
        const std::uint64_t seqs_consumed =
            std::min(step_in_epoch * basis.batch_size, basis.sequences_per_epoch);
        if (mode == EpochMode::sequence) {
            e.epoch_fraction = static_cast<double>(epochs_done) +
                               static_cast<double>(seqs_consumed) /
                                   static_cast<double>(basis.sequences_per_epoch);
        } else {
            e.epoch_fraction = static_cast<double>(epochs_done) +
                               static_cast<double>(word_prefix[seqs_consumed]) /
                                   static_cast<double>(words_per_epoch);
        }
    }
    return log;
}

// ---------------------------------------------------------------------------
// Segment ranking
// ---------------------------------------------------------------------------

struct RunRanking {
    std::string run_id;
    double average_rank = 0.0;      // mean rank over segments with data for all runs
    double final_perplexity = 0.0;  // mean over the last segment of the run's last epoch
    std::uint64_t segments_with_data = 0;
};

struct RankingReport {
    std::vector<RunRanking> runs;
    std::uint64_t n_segments = 0;
    std::vector<std::uint64_t> excluded_segments;  // segments missing data for some run
    // segment_means[segment][run] = mean perplexity, NaN when no data
    std::vector<std::vector<double>> segment_means;
};

namespace detail {

// Per-run per-segment mean perplexity over the run's own last epoch.
struct SegmentedRun {
    double epoch_start = 0.0;
    std::vector<double> mean;   // NaN where empty
    std::vector<std::uint64_t> count;
    double final_perplexity = std::numeric_limits<double>::quiet_NaN();
};

inline SegmentedRun segment_run(const RunLog& log, std::uint64_t n_segments,
                                std::optional<double> epoch_override) {
    if (log.entries.empty()) throw InsufficientCoverage("run " + log.run_id + " has no entries");
    double max_frac = log.entries.back().epoch_fraction;
    for (const LogEntry& e : log.entries)
        if (e.epoch_fraction < 0)
            throw MissingManifest("run " + log.run_id +
                                  " lacks epoch fractions; annotate first");
    SegmentedRun seg;
    seg.epoch_start = epoch_override ? *epoch_override : std::ceil(max_frac) - 1.0;
    if (seg.epoch_start < 0) seg.epoch_start = 0.0;
    seg.mean.assign(n_segments, std::numeric_limits<double>::quiet_NaN());
    seg.count.assign(n_segments, 0);
    std::vector<double> sum(n_segments, 0.0);
    for (const LogEntry& e : log.entries) {
        double rel = e.epoch_fraction - seg.epoch_start;
        if (rel < 0.0 || rel > 1.0) continue;
        auto k = static_cast<std::uint64_t>(rel * static_cast<double>(n_segments));
        if (k >= n_segments) k = n_segments - 1;  // fraction exactly at epoch end
        sum[k] += e.perplexity;
        ++seg.count[k];
    }
    for (std::uint64_t k = 0; k < n_segments; ++k)
        if (seg.count[k] > 0) seg.mean[k] = sum[k] / static_cast<double>(seg.count[k]);
    if (seg.count[n_segments - 1] > 0) seg.final_perplexity = seg.mean[n_segments - 1];
    return seg;
}

// 1 = lowest value; ties share the mid-rank so each segment's ranks sum to
// K(K+1)/2.
inline std::vector<double> mid_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Partitions each run's last epoch into n_segments half-open intervals
// (the last one closed), ranks runs by mean perplexity per segment, and
// averages ranks over the segments where every run has data. Segments
// missing data for any run are excluded and reported.
inline RankingReport segment_rank(const std::vector<RunLog>& logs, std::uint64_t n_segments = 100,
                                  std::optional<double> epoch_override = std::nullopt) {
    if (logs.size() < 2) throw InsufficientCoverage("ranking requires at least 2 runs");
    if (n_segments == 0) throw ConfigError("n_segments must be positive");

    std::vector<detail::SegmentedRun> segmented;
    segmented.reserve(logs.size());
    for (const RunLog& log : logs)
        segmented.push_back(detail::segment_run(log, n_segments, epoch_override));

    RankingReport report;
    report.n_segments = n_segments;
    report.segment_means.assign(n_segments, std::vector<double>(logs.size()));
    std::vector<double> rank_sum(logs.size(), 0.0);
    std::uint64_t included = 0;
    for (std::uint64_t k = 0; k < n_segments; ++k) {
        bool complete = true;
        std::vector<double> values(logs.size());
        for (std::size_t r = 0; r < logs.size(); ++r) {
            values[r] = segmented[r].mean[k];
            report.segment_means[k][r] = values[r];
            if (segmented[r].count[k] == 0) complete = false;
        }
        if (!complete) {
            report.excluded_segments.push_back(k);
            continue;
        }
        auto ranks = detail::mid_ranks(values);
        for (std::size_t r = 0; r < logs.size(); ++r) rank_sum[r] += ranks[r];
        ++included;
    }
    if (included == 0)
        throw InsufficientCoverage("no segment has data for every run; "
                                   "check epoch annotation and coverage");

    for (std::size_t r = 0; r < logs.size(); ++r) {
        RunRanking rr;
        rr.run_id = logs[r].run_id;
        rr.average_rank = rank_sum[r] / static_cast<double>(included);
        rr.final_perplexity = segmented[r].final_perplexity;
        rr.segments_with_data = included;
        report.runs.push_back(std::move(rr));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Run comparison
// ---------------------------------------------------------------------------

struct ComparisonRow {
    std::string run_id;
    std::int64_t total_steps = 0;
    double final_perplexity = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> average_rank;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    std::optional<RankingReport> ranking;
};

struct AnalyzeOptions {
    std::uint64_t n_segments = 100;
    EmaParams ema;
    std::optional<double> epoch_override;
    std::optional<std::string> plot_dir;  // write <run_id>.ema.tsv files here
};

namespace detail {

inline std::string sanitize_filename(const std::string& s) {
    std::string out;
    for (char c : s)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
    return out.empty() ? "run" : out;
}

}  // namespace detail

inline ComparisonReport compare_runs(const std::vector<RunLog>& logs,
                                     const AnalyzeOptions& opts = {}) {
    if (logs.empty()) throw InsufficientCoverage("no runs to compare");
    ComparisonReport report;
    if (logs.size() >= 2)
        report.ranking = segment_rank(logs, opts.n_segments, opts.epoch_override);

    for (std::size_t r = 0; r < logs.size(); ++r) {
        ComparisonRow row;
        row.run_id = logs[r].run_id;
        row.total_steps = logs[r].entries.empty() ? 0 : logs[r].entries.back().step;
        if (report.ranking) {
            row.final_perplexity = report.ranking->runs[r].final_perplexity;
            row.average_rank = report.ranking->runs[r].average_rank;
        } else {
            auto seg = detail::segment_run(logs[r], opts.n_segments, opts.epoch_override);
            row.final_perplexity = seg.final_perplexity;
        }
        report.rows.push_back(std::move(row));
    }

    if (opts.plot_dir) {
        std::filesystem::create_directories(*opts.plot_dir);
        for (const RunLog& log : logs) {
            std::vector<double> raw;
            raw.reserve(log.entries.size());
            for (const auto& e : log.entries) raw.push_back(e.perplexity);
            auto smoothed = ema_smooth(raw, opts.ema);
            std::string path = *opts.plot_dir + "/" + detail::sanitize_filename(log.run_id) +
                               ".ema.tsv";
            std::ofstream out(path, std::ios::trunc);
            if (!out) throw IoError("cannot write plot data: " + path);
            out << "step\tepoch_fraction\tperplexity\tsmoothed\n";
            for (std::size_t i = 0; i < log.entries.size(); ++i)
                out << log.entries[i].step << "\t" << log.entries[i].epoch_fraction << "\t"
                    << raw[i] << "\t" << smoothed[i] << "\n";
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Log parsing
// ---------------------------------------------------------------------------
//
// Accepted per line:
//   JSON object: {"run_id": "...", "step": N, "perplexity": X,
//                 "epoch_fraction": F}   (run_id and epoch_fraction optional)
//   CSV columns, header optional:
//     2 fields: step, perplexity
//     3 fields: run_id, step, perplexity       (first field non-numeric)
//     3 fields: step, perplexity, epoch_fraction  (all numeric)
//     4 fields: run_id, step, perplexity, epoch_fraction
// Rows without a run_id inherit fallback_run_id.

namespace detail {

inline bool is_number(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) {
        auto b = cur.find_first_not_of(" \t");
        auto e = cur.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
    }
    return fields;
}

}  // namespace detail

inline std::vector<RunLog> parse_run_logs(std::istream& in, const std::string& fallback_run_id) {
    std::map<std::string, std::size_t> index;
    std::vector<RunLog> logs;
    auto append = [&](const std::string& run_id, LogEntry entry) {
        auto [it, inserted] = index.try_emplace(run_id, logs.size());
        if (inserted) logs.push_back(RunLog{run_id, {}});
        logs[it->second].entries.push_back(entry);
    };

    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string at = "line " + std::to_string(line_no) + ": ";

        if (line.front() == '{') {
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("step") ||
                !j.contains("perplexity"))
                throw ParseError(at + "expected an object with step and perplexity");
            LogEntry e;
            e.step = j["step"].get<std::int64_t>();
            e.perplexity = j["perplexity"].get<double>();
            if (j.contains("epoch_fraction")) e.epoch_fraction = j["epoch_fraction"].get<double>();
            append(j.contains("run_id") ? j["run_id"].get<std::string>() : fallback_run_id, e);
            continue;
        }

        auto fields = detail::split_csv(line);
        if (line_no == 1 && !fields.empty() && !detail::is_number(fields.back())) continue;  // header
        LogEntry e;
        std::string run_id = fallback_run_id;
        try {
            if (fields.size() == 2) {
                e.step = std::stoll(fields[0]);
                e.perplexity = std::stod(fields[1]);
            } else if (fields.size() == 3 && !detail::is_number(fields[0])) {
                run_id = fields[0];
                e.step = std::stoll(fields[1]);
                e.perplexity = std::stod(fields[2]);
            } else if (fields.size() == 3) {
                e.step = std::stoll(fields[0]);
                e.perplexity = std::stod(fields[1]);
                e.epoch_fraction = std::stod(fields[2]);
            } else if (fields.size() == 4) {
                run_id = fields[0];
                e.step = std::stoll(fields[1]);
                e.perplexity = std::stod(fields[2]);
                e.epoch_fraction = std::stod(fields[3]);
            } else {
                throw ParseError(at + "expected 2-4 comma-separated fields");
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception&) {
            throw ParseError(at + "malformed numeric field");
        }
        append(run_id, e);
    }
    for (RunLog& log : logs) log.validate();
    return logs;
}

inline std::vector<RunLog> parse_run_logs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open log file: " + path);
    std::string stem = std::filesystem::path(path).stem().string();
    return parse_run_logs(in, stem.empty() ? "run" : stem);
}

}  // namespace atompack
