#pragma once

// Command-line front end: filter, pack, inspect, diagnose, analyze.
// Exit codes: 0 success, 2 usage, 3 config validation, 4 I/O, 5 data/format.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "atompack/accounting.hpp"
#include "atompack/analyzer.hpp"
#include "atompack/config.hpp"
#include "atompack/corpus.hpp"
#include "atompack/dataset_io.hpp"
#include "atompack/diagnostics.hpp"
#include "atompack/packer.hpp"
#include "atompack/version.hpp"

namespace atompack {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitValidation = 3,
    kExitIo = 4,
    kExitData = 5,
};

// Table 1 atom-size grid for one msl; 4x is skipped at msl=128.
inline std::vector<std::uint64_t> table1_atom_sizes(std::uint64_t msl) {
    std::vector<std::uint64_t> atoms{msl / 4, msl / 2, msl, 2 * msl};
    if (msl != 128) atoms.push_back(4 * msl);
    return atoms;
}

namespace cli_detail {

struct CorpusOptions {
    std::string input;
    std::string pretokenized;
    std::uint64_t min_words = 50;
    unsigned threads = 1;
};

inline void add_corpus_flags(CLI::App* cmd, CorpusOptions& opts) {
    cmd->add_option("--input", opts.input,
                    "raw text input, one document per line (or JSONL with a \"text\" field)");
    cmd->add_option("--pretokenized", opts.pretokenized,
                    "pre-tokenized JSONL input: token array or {\"tokens\": [...]} per line");
    cmd->add_option("--min-words", opts.min_words,
                    "drop raw rows with fewer words (raw input only)")->capture_default_str();
    cmd->add_option("--threads", opts.threads, "worker threads, 0 = hardware count")->capture_default_str();
}

inline void add_pack_flags(CLI::App* cmd, PackConfig& cfg, std::string& strategy,
                           std::string& remainder) {
    cmd->add_option("--strategy", strategy, "packing strategy: concat | padding")->required();
    cmd->add_option("--msl", cfg.msl, "maximum sequence length (tokens per output row)")
        ->required();
    cmd->add_option("--atom", cfg.atom_size, "atom size (tokens per shuffling unit)")->required();
    cmd->add_option("--seed", cfg.seed, "shuffle seed")->capture_default_str();
    cmd->add_option("--batch-size", cfg.batch_size, "sequences per optimizer step")->capture_default_str();
    cmd->add_option("--eos-id", cfg.eos_id, "EOS token id")->capture_default_str();
    cmd->add_option("--pad-id", cfg.pad_id, "pad token id (defaults to --eos-id)");
    cmd->add_option("--concat-remainder", remainder,
                    "what to do with the final sub-atom stream chunk: drop | pad")->capture_default_str()
        ->check(CLI::IsMember({"drop", "pad"}));
}

struct LoadedCorpus {
    std::vector<Document> docs;
    std::optional<FilterStats> filter_stats;
    std::optional<std::string> input_sha256;
};

inline LoadedCorpus load_corpus(const CorpusOptions& opts, const PackConfig& cfg,
                                std::ostream& err) {
    if (opts.input.empty() == opts.pretokenized.empty())
        throw ConfigError("exactly one of --input or --pretokenized is required");
    LoadedCorpus corpus;
    if (!opts.pretokenized.empty()) {
        corpus.docs = load_pretokenized(opts.pretokenized, cfg.eos_id, cfg.pad_id);
        corpus.input_sha256 = sha256_of_file(opts.pretokenized);
    } else {
        auto rows = read_raw_rows(opts.input);
        auto [kept, stats] = filter_rows(rows, opts.min_words);
        corpus.filter_stats = stats;
        corpus.input_sha256 = sha256_of_file(opts.input);
        ByteTokenizer tokenizer;
        corpus.docs = tokenize_rows(kept, tokenizer, cfg.eos_id, cfg.pad_id, opts.threads);
        if (corpus.docs.empty())
            err << "warning: no rows survived the min-words filter (" << opts.min_words << ")\n";
    }
    return corpus;
}

inline std::string format_fraction(double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(6) << v;
    return ss.str();
}

inline void print_filter_stats(const FilterStats& s, std::ostream& out) {
    out << "rows_in            " << s.rows_in << "\n"
        << "rows_kept          " << s.rows_kept << "\n"
        << "rows_dropped       " << s.rows_dropped << "\n"
        << "words_in           " << s.words_in << "\n"
        << "words_kept         " << s.words_kept << "\n"
        << "row_drop_fraction  " << format_fraction(s.row_drop_fraction) << "\n"
        << "word_drop_fraction " << format_fraction(s.word_drop_fraction) << "\n";
}

inline void print_pack_stats(const PackStats& s, std::ostream& out) {
    out << "sequence_count      " << s.sequence_count << "\n"
        << "steps_per_epoch     " << s.steps_per_epoch << "\n"
        << "word_tokens         " << s.word_tokens << "\n"
        << "eos_tokens          " << s.eos_tokens << "\n"
        << "pad_subseq (src a)  " << s.pad_subseq << "\n"
        << "pad_tail (src b)    " << s.pad_tail << "\n"
        << "total_output_tokens " << s.total_output_tokens << "\n";
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

namespace cli_detail {

inline int cmd_filter(const CorpusOptions& corpus_opts, const std::string& output, bool as_json,
                      std::ostream& out) {
    auto rows = read_raw_rows(corpus_opts.input);
    auto [kept, stats] = filter_rows(rows, corpus_opts.min_words);
    if (!output.empty()) {
        std::ofstream f(output, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + output);
        for (const RawRow& row : kept) f << row.text << "\n";
        if (!f) throw IoError("write failed: " + output);
    }
    if (as_json) {
        out << to_json(stats).dump(2) << "\n";
    } else {
        print_filter_stats(stats, out);
    }
    return kExitOk;
}

inline int cmd_pack(const CorpusOptions& corpus_opts, PackConfig cfg, const std::string& output,
                    bool force, bool write_mask, bool embed_seq_tokens, bool sweep, bool as_json,
                    std::ostream& out, std::ostream& err) {
    if (sweep) {
        cfg.validate();
        auto corpus = load_corpus(corpus_opts, cfg, err);
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        if (!as_json)
            out << "strategy  msl  atom  sequences  steps/epoch  word  eos  pad_a  pad_b\n";
        for (Strategy strategy : {Strategy::concat, Strategy::padding}) {
            for (std::uint64_t atom : table1_atom_sizes(cfg.msl)) {
                PackConfig c = cfg;
                c.strategy = strategy;
                c.atom_size = atom;
                c.validate();
                PackedDataset ds = pack(corpus.docs, c, corpus_opts.threads);
                if (as_json) {
                    nlohmann::ordered_json row;
                    row["strategy"] = to_string(strategy);
                    row["msl"] = c.msl;
                    row["atom_size"] = atom;
                    row["stats"] = to_json(ds.stats);
                    rows.push_back(row);
                } else {
                    out << to_string(strategy) << (strategy == Strategy::concat ? "    " : "   ")
                        << cfg.msl << "  " << atom << "  " << ds.stats.sequence_count << "  "
                        << ds.stats.steps_per_epoch << "  " << ds.stats.word_tokens << "  "
                        << ds.stats.eos_tokens << "  " << ds.stats.pad_subseq << "  "
                        << ds.stats.pad_tail << "\n";
                }
            }
        }
        if (as_json) out << rows.dump(2) << "\n";
        return kExitOk;
    }

    std::string path = output;
    if (path.empty()) {
        const char* dir = std::getenv("ATOMPACK_OUT_DIR");
        if (dir == nullptr)
            throw ConfigError("--output is required (or set ATOMPACK_OUT_DIR)");
        path = std::string(dir) + "/dataset.atpk";
    }
    cfg.validate();
    auto corpus = load_corpus(corpus_opts, cfg, err);
    PackedDataset ds = pack(corpus.docs, cfg, corpus_opts.threads);
    WriteOptions wopts;
    wopts.overwrite = force;
    wopts.write_mask = write_mask;
    wopts.embed_sequence_tokens = embed_seq_tokens;
    wopts.filter_stats = corpus.filter_stats;
    wopts.input_sha256 = corpus.input_sha256;
    Manifest manifest = write_dataset(ds, path, wopts);
    if (as_json) {
        out << to_json(manifest).dump(2) << "\n";
    } else {
        out << "wrote " << path << " (" << ds.stats.sequence_count << " sequences of "
            << cfg.msl << " tokens)\n";
        print_pack_stats(ds.stats, out);
    }
    return kExitOk;
}

inline int cmd_inspect(const std::string& dataset_path, bool as_json, std::ostream& out) {
    ReadResult result = read_dataset(dataset_path);
    const PackedDataset& ds = result.dataset;
    if (as_json) {
        nlohmann::ordered_json j;
        j["path"] = dataset_path;
        j["sequence_count"] = ds.sequences.size();
        j["msl"] = ds.config.msl;
        j["payload_sha256"] = ds.payload_sha256;
        j["checksum_verified"] = result.manifest.has_value();
        if (result.manifest) j["manifest"] = to_json(*result.manifest);
        out << j.dump(2) << "\n";
    } else {
        out << "dataset            " << dataset_path << "\n"
            << "sequences          " << ds.sequences.size() << "\n"
            << "msl                " << ds.config.msl << "\n"
            << "payload_sha256     " << ds.payload_sha256 << "\n"
            << "checksum_verified  " << (result.manifest ? "yes" : "no manifest found") << "\n";
        if (result.manifest) {
            out << "generator          " << result.manifest->generator << "\n"
                << "tool               " << result.manifest->tool_name << " "
                << result.manifest->tool_version << "\n";
            print_pack_stats(result.manifest->stats, out);
            if (result.manifest->filter_stats)
                print_filter_stats(*result.manifest->filter_stats, out);
        }
    }
    return kExitOk;
}

inline int cmd_diagnose(const CorpusOptions& corpus_opts, PackConfig cfg, bool probe,
                        const std::string& probe_eval, std::uint32_t probe_order,
                        std::uint64_t vocab_size, bool as_json, std::ostream& out,
                        std::ostream& err) {
    cfg.validate();
    auto corpus = load_corpus(corpus_opts, cfg, err);
    PackedDataset ds = pack(corpus.docs, cfg, corpus_opts.threads);
    CoherenceReport report = coherence_report(ds);

    std::optional<double> perplexity;
    if (probe) {
        if (vocab_size == 0) {
            TokenId max_id = 0;
            for (const auto& d : corpus.docs)
                for (TokenId t : d.tokens) max_id = std::max(max_id, t);
            vocab_size = static_cast<std::uint64_t>(std::max(max_id, cfg.eos_id)) + 1;
        }
        PackedDataset eval_ds = ds;
        if (!probe_eval.empty()) {
            CorpusOptions eval_opts = corpus_opts;
            eval_opts.input.clear();
            eval_opts.pretokenized.clear();
            // decide raw vs pretokenized the same way as the training input
            if (!corpus_opts.pretokenized.empty()) eval_opts.pretokenized = probe_eval;
            else eval_opts.input = probe_eval;
            auto eval_corpus = load_corpus(eval_opts, cfg, err);
            eval_ds = pack(eval_corpus.docs, cfg, corpus_opts.threads);
        }
        perplexity = probe_perplexity(ds, eval_ds, probe_order, vocab_size);
    }

    if (as_json) {
        nlohmann::ordered_json j;
        j["cross_doc_transition_fraction"] = report.cross_doc_transition_fraction;
        j["cross_doc_pairs"] = report.cross_doc_pairs;
        j["eligible_pairs"] = report.eligible_pairs;
        j["adjacent_sequence_overlap"] = report.adjacent_sequence_overlap;
        j["overlapping_pairs"] = report.overlapping_pairs;
        j["adjacent_pairs"] = report.adjacent_pairs;
        j["sequences_single_doc_fraction"] = report.sequences_single_doc_fraction;
        j["single_doc_sequences"] = report.single_doc_sequences;
        j["sequence_count"] = report.sequence_count;
        if (perplexity) j["probe_perplexity"] = *perplexity;
        out << j.dump(2) << "\n";
    } else {
        out << "cross_doc_transition_fraction  " << format_fraction(report.cross_doc_transition_fraction)
            << "  (" << report.cross_doc_pairs << "/" << report.eligible_pairs << ")\n"
            << "adjacent_sequence_overlap      " << format_fraction(report.adjacent_sequence_overlap)
            << "  (" << report.overlapping_pairs << "/" << report.adjacent_pairs << ")\n"
            << "sequences_single_doc_fraction  " << format_fraction(report.sequences_single_doc_fraction)
            << "  (" << report.single_doc_sequences << "/" << report.sequence_count << ")\n";
        if (perplexity) out << "probe_perplexity               " << *perplexity << "\n";
    }
    return kExitOk;
}

inline int cmd_analyze(const std::vector<std::string>& log_paths, const std::string& manifest_path,
                       const std::string& dataset_path, const std::string& mode_str,
                       std::uint64_t n_segments, double alpha, std::optional<double> epoch_override,
                       const std::string& plot_dir, bool as_json, std::ostream& out) {
    std::vector<RunLog> logs;
    for (const std::string& path : log_paths) {
        auto parsed = parse_run_logs(path);
        for (auto& log : parsed) logs.push_back(std::move(log));
    }
    if (logs.empty()) throw ParseError("no log entries found");

    EpochMode mode = parse_epoch_mode(mode_str);
    bool need_annotation =
        std::ranges::any_of(logs, [](const RunLog& l) { return !l.annotated(); });
    if (need_annotation) {
        EpochBasis basis;
        if (!dataset_path.empty()) {
            ReadResult rr = read_dataset(dataset_path);
            basis = epoch_basis_from_sequences(rr.dataset.sequences, rr.dataset.config);
        } else if (!manifest_path.empty()) {
            Manifest manifest = load_manifest(manifest_path);
            basis.sequences_per_epoch = manifest.stats.sequence_count;
            basis.batch_size = manifest.config.batch_size;
            if (manifest.word_tokens_per_sequence)
                basis.word_tokens_per_sequence = *manifest.word_tokens_per_sequence;
        } else {
            throw MissingManifest("logs lack epoch fractions; provide --manifest or --dataset");
        }
        for (RunLog& log : logs) log = annotate_epochs(std::move(log), basis, mode);
    }

    AnalyzeOptions opts;
    opts.n_segments = n_segments;
    opts.ema.alpha = alpha;
    opts.epoch_override = epoch_override;
    if (!plot_dir.empty()) opts.plot_dir = plot_dir;
    ComparisonReport report = compare_runs(logs, opts);

    if (as_json) {
        nlohmann::ordered_json j;
        j["runs"] = nlohmann::ordered_json::array();
        for (const auto& row : report.rows) {
            nlohmann::ordered_json r;
            r["run_id"] = row.run_id;
            r["total_steps"] = row.total_steps;
            r["final_perplexity"] = row.final_perplexity;
            if (row.average_rank) r["average_rank"] = *row.average_rank;
            j["runs"].push_back(r);
        }
        if (report.ranking) {
            j["n_segments"] = report.ranking->n_segments;
            j["excluded_segments"] = report.ranking->excluded_segments;
        }
        out << j.dump(2) << "\n";
    } else {
        out << std::left << std::setw(24) << "run" << std::setw(14) << "total_steps"
            << std::setw(20) << "final_perplexity" << "avg_rank\n";
        for (const auto& row : report.rows) {
            out << std::left << std::setw(24) << row.run_id << std::setw(14) << row.total_steps
                << std::setw(20) << row.final_perplexity;
            if (row.average_rank) out << *row.average_rank;
            else out << "-";
            out << "\n";
        }
        if (report.ranking && !report.ranking->excluded_segments.empty())
            out << "(" << report.ranking->excluded_segments.size()
                << " segments excluded for missing data)\n";
    }
    return kExitOk;
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{std::string(kToolName) +
                 " - deterministic token packing (concat/padding) and log analysis"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    // filter
    cli_detail::CorpusOptions filter_corpus;
    std::string filter_output;
    bool filter_json = false;
    auto* filter_cmd = app.add_subcommand("filter", "filter raw rows by word count");
    filter_cmd->add_option("--input", filter_corpus.input, "raw text input")->required();
    filter_cmd->add_option("--output", filter_output, "write kept rows here");
    filter_cmd->add_option("--min-words", filter_corpus.min_words, "word-count threshold")->capture_default_str();
    filter_cmd->add_flag("--json", filter_json, "machine-readable stats");

    // pack
    cli_detail::CorpusOptions pack_corpus;
    PackConfig pack_cfg;
    std::string pack_strategy, pack_remainder = "drop", pack_output;
    bool pack_force = false, pack_no_mask = false, pack_embed = false, pack_sweep = false,
         pack_json = false;
    auto* pack_cmd = app.add_subcommand("pack", "pack a corpus into fixed-length sequences");
    cli_detail::add_corpus_flags(pack_cmd, pack_corpus);
    cli_detail::add_pack_flags(pack_cmd, pack_cfg, pack_strategy, pack_remainder);
    pack_cmd->add_option("--output", pack_output, "dataset file to write (.atpk)");
    pack_cmd->add_flag("--force", pack_force, "overwrite existing output");
    pack_cmd->add_flag("--no-mask", pack_no_mask, "omit the loss-mask section");
    pack_cmd->add_flag("--manifest-seq-tokens", pack_embed,
                       "embed per-sequence word-token counts in the manifest");
    pack_cmd->add_flag("--table1-sweep", pack_sweep,
                       "run every atom size of the experiment grid for this msl "
                       "(both strategies) and print a combined stats table");
    pack_cmd->add_flag("--json", pack_json, "machine-readable output");

    // inspect
    std::string inspect_dataset;
    bool inspect_json = false;
    auto* inspect_cmd = app.add_subcommand("inspect", "dump dataset stats and manifest");
    inspect_cmd->add_option("--dataset", inspect_dataset, "dataset file")->required();
    inspect_cmd->add_flag("--json", inspect_json, "machine-readable output");

    // diagnose
    cli_detail::CorpusOptions diag_corpus;
    PackConfig diag_cfg;
    std::string diag_strategy, diag_remainder = "drop", diag_probe_eval;
    bool diag_probe = false, diag_json = false;
    std::uint32_t diag_order = 2;
    std::uint64_t diag_vocab = 0;
    auto* diag_cmd =
        app.add_subcommand("diagnose", "coherence metrics (packs the corpus in memory)");
    cli_detail::add_corpus_flags(diag_cmd, diag_corpus);
    cli_detail::add_pack_flags(diag_cmd, diag_cfg, diag_strategy, diag_remainder);
    diag_cmd->add_flag("--probe", diag_probe, "also compute n-gram probe perplexity");
    diag_cmd->add_option("--probe-eval", diag_probe_eval,
                         "eval corpus for the probe (defaults to the training corpus)");
    diag_cmd->add_option("--probe-order", diag_order, "n-gram order")->capture_default_str();
    diag_cmd->add_option("--vocab-size", diag_vocab, "probe vocabulary size, 0 = infer");
    diag_cmd->add_flag("--json", diag_json, "machine-readable output");

    // analyze
    std::vector<std::string> an_logs;
    std::string an_manifest, an_dataset, an_mode = "word-token", an_plot;
    std::uint64_t an_segments = 100;
    double an_alpha = 0.5, an_epoch = -1.0;
    bool an_json = false;
    auto* an_cmd = app.add_subcommand("analyze", "rank and compare training runs from logs");
    an_cmd->add_option("--log", an_logs, "log file (JSONL or CSV); repeatable")->required();
    an_cmd->add_option("--manifest", an_manifest, "manifest for epoch annotation");
    an_cmd->add_option("--dataset", an_dataset, "dataset for epoch annotation");
    an_cmd->add_option("--mode", an_mode, "epoch-fraction mode: sequence | word-token")->capture_default_str();
    an_cmd->add_option("--segments", an_segments, "segments per epoch for ranking")->capture_default_str();
    an_cmd->add_option("--alpha", an_alpha, "EMA smoothing parameter")->capture_default_str();
    an_cmd->add_option("--epoch", an_epoch, "rank within this epoch start (default: last epoch)");
    an_cmd->add_option("--plot-dir", an_plot, "write per-run (step, perplexity) plot data here");
    an_cmd->add_flag("--json", an_json, "machine-readable output");

    try {
        // CLI11 consumes the vector back-to-front
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (filter_cmd->parsed())
            return cli_detail::cmd_filter(filter_corpus, filter_output, filter_json, out);
        if (pack_cmd->parsed()) {
            pack_cfg.strategy = parse_strategy(pack_strategy);
            if (pack_cmd->count("--pad-id") == 0) pack_cfg.pad_id = pack_cfg.eos_id;
            pack_cfg.drop_concat_remainder = pack_remainder == "drop";
            pack_cfg.min_words = pack_corpus.min_words;
            return cli_detail::cmd_pack(pack_corpus, pack_cfg, pack_output, pack_force,
                                        !pack_no_mask, pack_embed, pack_sweep, pack_json, out,
                                        err);
        }
        if (inspect_cmd->parsed()) return cli_detail::cmd_inspect(inspect_dataset, inspect_json, out);
        if (diag_cmd->parsed()) {
            diag_cfg.strategy = parse_strategy(diag_strategy);
            if (diag_cmd->count("--pad-id") == 0) diag_cfg.pad_id = diag_cfg.eos_id;
            diag_cfg.drop_concat_remainder = diag_remainder == "drop";
            diag_cfg.min_words = diag_corpus.min_words;
            return cli_detail::cmd_diagnose(diag_corpus, diag_cfg, diag_probe, diag_probe_eval,
                                            diag_order, diag_vocab, diag_json, out, err);
        }
        if (an_cmd->parsed()) {
            std::optional<double> epoch;
            if (an_cmd->count("--epoch") > 0) epoch = an_epoch;
            return cli_detail::cmd_analyze(an_logs, an_manifest, an_dataset, an_mode, an_segments,
                                           an_alpha, epoch, an_plot, an_json, out);
        }
        err << "usage error: no subcommand given\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace atompack
