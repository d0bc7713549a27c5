#pragma once

// On-disk dataset format (version 1):
//
//   offset 0   magic "ATPK"
//   offset 4   version   u8  (= 1)
//   offset 5   flags     u8  (bit 0: loss-mask section present)
//   offset 6   msl       u32 LE
//   offset 10  seq_count u64 LE
//   offset 18  eos_id    u32 LE
//   offset 22  pad_id    u32 LE
//   offset 26  payload: seq_count * msl token ids, u32 LE
//   then, if flagged: loss mask, 1 bit per token, row-major, LSB first,
//   each row zero-padded to a byte boundary (ceil(msl/8) bytes per row).
//
// The cryptographic hash of the token payload lives in the sibling manifest
// (<path>.manifest.json) together with the full config, stats, and shuffle
// generator id, so a write is reproducible bit-for-bit from the manifest.
// Provenance spans are in-memory only; a dataset read back from disk carries
// tokens, masks, config, and stats, but no per-token provenance.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "atompack/accounting.hpp"
#include "atompack/config.hpp"
#include "atompack/corpus.hpp"
#include "atompack/packer.hpp"
#include "atompack/sha256.hpp"
#include "atompack/version.hpp"

namespace atompack {

inline constexpr char kDatasetMagic[4] = {'A', 'T', 'P', 'K'};
inline constexpr std::uint8_t kDatasetVersion = 1;
inline constexpr std::uint8_t kFlagMask = 0x01;

struct Manifest {
    PackConfig config;
    PackStats stats;
    std::optional<FilterStats> filter_stats;
    std::string generator = kShuffleGenerator;
    std::string tool_name = kToolName;
    std::string tool_version = kToolVersion;
    std::string payload_sha256;
    std::optional<std::string> mask_sha256;
    std::optional<std::string> input_sha256;
    std::optional<std::vector<std::uint64_t>> word_tokens_per_sequence;
};

struct WriteOptions {
    bool overwrite = false;
    bool write_mask = true;
    bool embed_sequence_tokens = false;  // per-sequence word-token counts in manifest
    std::optional<FilterStats> filter_stats;
    std::optional<std::string> input_sha256;
};

inline std::string manifest_path_for(const std::string& dataset_path) {
    return dataset_path + ".manifest.json";
}

// ---------------------------------------------------------------------------
// JSON conversions
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const PackConfig& cfg) {
    return {{"strategy", to_string(cfg.strategy)},
            {"msl", cfg.msl},
            {"atom_size", cfg.atom_size},
            {"seed", cfg.seed},
            {"batch_size", cfg.batch_size},
            {"eos_id", cfg.eos_id},
            {"pad_id", cfg.pad_id},
            {"min_words", cfg.min_words},
            {"drop_concat_remainder", cfg.drop_concat_remainder}};
}

inline nlohmann::ordered_json to_json(const PackStats& s) {
    return {{"word_tokens", s.word_tokens},
            {"eos_tokens", s.eos_tokens},
            {"pad_subseq", s.pad_subseq},
            {"pad_tail", s.pad_tail},
            {"sequence_count", s.sequence_count},
            {"steps_per_epoch", s.steps_per_epoch},
            {"total_output_tokens", s.total_output_tokens}};
}

inline nlohmann::ordered_json to_json(const FilterStats& s) {
    return {{"rows_in", s.rows_in},
            {"rows_kept", s.rows_kept},
            {"rows_dropped", s.rows_dropped},
            {"words_in", s.words_in},
            {"words_kept", s.words_kept},
            {"row_drop_fraction", s.row_drop_fraction},
            {"word_drop_fraction", s.word_drop_fraction}};
}

inline PackConfig pack_config_from_json(const nlohmann::json& j) {
    PackConfig cfg;
    cfg.strategy = parse_strategy(j.at("strategy").get<std::string>());
    cfg.msl = j.at("msl").get<std::uint64_t>();
    cfg.atom_size = j.at("atom_size").get<std::uint64_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.batch_size = j.at("batch_size").get<std::uint64_t>();
    cfg.eos_id = j.at("eos_id").get<TokenId>();
    cfg.pad_id = j.at("pad_id").get<TokenId>();
    cfg.min_words = j.at("min_words").get<std::uint64_t>();
    cfg.drop_concat_remainder = j.at("drop_concat_remainder").get<bool>();
    return cfg;
}

inline PackStats pack_stats_from_json(const nlohmann::json& j) {
    PackStats s;
    s.word_tokens = j.at("word_tokens").get<std::uint64_t>();
    s.eos_tokens = j.at("eos_tokens").get<std::uint64_t>();
    s.pad_subseq = j.at("pad_subseq").get<std::uint64_t>();
    s.pad_tail = j.at("pad_tail").get<std::uint64_t>();
    s.sequence_count = j.at("sequence_count").get<std::uint64_t>();
    s.steps_per_epoch = j.at("steps_per_epoch").get<std::uint64_t>();
    s.total_output_tokens = j.at("total_output_tokens").get<std::uint64_t>();
    return s;
}

inline FilterStats filter_stats_from_json(const nlohmann::json& j) {
    FilterStats s;
    s.rows_in = j.at("rows_in").get<std::uint64_t>();
    s.rows_kept = j.at("rows_kept").get<std::uint64_t>();
    s.rows_dropped = j.at("rows_dropped").get<std::uint64_t>();
    s.words_in = j.at("words_in").get<std::uint64_t>();
    s.words_kept = j.at("words_kept").get<std::uint64_t>();
    s.row_drop_fraction = j.at("row_drop_fraction").get<double>();
    s.word_drop_fraction = j.at("word_drop_fraction").get<double>();
    return s;
}

inline nlohmann::ordered_json to_json(const Manifest& m) {
    nlohmann::ordered_json j;
    j["format"] = "atpk-manifest";
    j["version"] = 1;
    j["tool"] = {{"name", m.tool_name}, {"version", m.tool_version}};
    j["generator"] = m.generator;
    j["config"] = to_json(m.config);
    j["stats"] = to_json(m.stats);
    if (m.filter_stats) j["filter_stats"] = to_json(*m.filter_stats);
    j["payload_sha256"] = m.payload_sha256;
    if (m.mask_sha256) j["mask_sha256"] = *m.mask_sha256;
    if (m.input_sha256) j["input_sha256"] = *m.input_sha256;
    if (m.word_tokens_per_sequence) j["word_tokens_per_sequence"] = *m.word_tokens_per_sequence;
    return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    m.tool_name = j.at("tool").at("name").get<std::string>();
    m.tool_version = j.at("tool").at("version").get<std::string>();
    m.generator = j.at("generator").get<std::string>();
    m.config = pack_config_from_json(j.at("config"));
    m.stats = pack_stats_from_json(j.at("stats"));
    if (j.contains("filter_stats")) m.filter_stats = filter_stats_from_json(j.at("filter_stats"));
    m.payload_sha256 = j.at("payload_sha256").get<std::string>();
    if (j.contains("mask_sha256")) m.mask_sha256 = j.at("mask_sha256").get<std::string>();
    if (j.contains("input_sha256")) m.input_sha256 = j.at("input_sha256").get<std::string>();
    if (j.contains("word_tokens_per_sequence"))
        m.word_tokens_per_sequence =
            j.at("word_tokens_per_sequence").get<std::vector<std::uint64_t>>();
    return m;
}

inline Manifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw FormatError("manifest is not valid JSON: " + path);
    try {
        return manifest_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest missing required field (" + std::string(e.what()) + "): " +
                          path);
    }
}

// ---------------------------------------------------------------------------
// Binary writer / reader
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline std::vector<std::uint8_t> mask_bytes(const std::vector<PackedSequence>& sequences,
                                            std::uint64_t msl) {
    const std::size_t row_bytes = (msl + 7) / 8;
    std::vector<std::uint8_t> out;
    out.reserve(sequences.size() * row_bytes);
    for (const auto& s : sequences) {
        std::size_t base = out.size();
        out.resize(base + row_bytes, 0);
        for (std::size_t i = 0; i < s.loss_mask.size(); ++i)
            if (s.loss_mask[i]) out[base + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    return out;
}

}  // namespace detail

// Serializes the dataset to the documented byte layout (no manifest).
inline std::vector<std::uint8_t> serialize_dataset(const PackedDataset& ds,
                                                   bool write_mask = true) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), std::begin(kDatasetMagic), std::end(kDatasetMagic));
    out.push_back(kDatasetVersion);
    out.push_back(write_mask ? kFlagMask : 0);
    detail::put_u32(out, static_cast<std::uint32_t>(ds.config.msl));
    detail::put_u64(out, ds.sequences.size());
    detail::put_u32(out, ds.config.eos_id);
    detail::put_u32(out, ds.config.pad_id);
    auto payload = detail::payload_bytes(ds.sequences);
    out.insert(out.end(), payload.begin(), payload.end());
    if (write_mask) {
        auto mask = detail::mask_bytes(ds.sequences, ds.config.msl);
        out.insert(out.end(), mask.begin(), mask.end());
    }
    return out;
}

// Writes the dataset file and its sibling manifest; refuses to overwrite
// existing files unless opts.overwrite. Returns the manifest written.
inline Manifest write_dataset(const PackedDataset& ds, const std::string& path,
                              const WriteOptions& opts = {}) {
    if (!opts.overwrite && std::filesystem::exists(path))
        throw IoError("refusing to overwrite existing file (pass overwrite): " + path);

    Manifest manifest;
    manifest.config = ds.config;
    manifest.stats = ds.stats;
    manifest.filter_stats = opts.filter_stats;
    manifest.input_sha256 = opts.input_sha256;

    auto payload = detail::payload_bytes(ds.sequences);
    manifest.payload_sha256 = sha256_hex(payload);
    if (opts.write_mask) {
        auto mask = detail::mask_bytes(ds.sequences, ds.config.msl);
        manifest.mask_sha256 = sha256_hex(mask);
    }
    if (opts.embed_sequence_tokens) {
        std::vector<std::uint64_t> counts;
        counts.reserve(ds.sequences.size());
        for (const auto& s : ds.sequences) {
            std::uint64_t words = 0;
            for (TokenId t : s.tokens)
                if (t != ds.config.eos_id && t != ds.config.pad_id) ++words;
            counts.push_back(words);
        }
        manifest.word_tokens_per_sequence = std::move(counts);
    }

    auto bytes = serialize_dataset(ds, opts.write_mask);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + path);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + path);
    }
    {
        std::ofstream out(manifest_path_for(path), std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + manifest_path_for(path));
        out << to_json(manifest).dump(2) << "\n";
        if (!out) throw IoError("write failed: " + manifest_path_for(path));
    }
    return manifest;
}

struct ReadResult {
    PackedDataset dataset;
    std::optional<Manifest> manifest;
};

// Reads a dataset file, validating magic, version, size, and (when the
// sibling manifest is present) the payload checksum. The returned dataset
// has no provenance spans.
inline ReadResult read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    constexpr std::size_t header_size = 26;
    if (bytes.size() < header_size) throw FormatError("file too short for header: " + path);
    if (!std::equal(std::begin(kDatasetMagic), std::end(kDatasetMagic), bytes.begin()))
        throw FormatError("bad magic (not an ATPK dataset): " + path);
    if (bytes[4] != kDatasetVersion)
        throw FormatError("unsupported format version " + std::to_string(bytes[4]) + ": " + path);
    std::uint8_t flags = bytes[5];
    std::uint64_t msl = detail::get_u32(bytes.data() + 6);
    std::uint64_t seq_count = detail::get_u64(bytes.data() + 10);
    TokenId eos_id = detail::get_u32(bytes.data() + 18);
    TokenId pad_id = detail::get_u32(bytes.data() + 22);
    if (msl < 2) throw FormatError("header msl out of range: " + path);

    const std::uint64_t payload_size = seq_count * msl * 4;
    const std::uint64_t mask_size = (flags & kFlagMask) ? seq_count * ((msl + 7) / 8) : 0;
    if (bytes.size() != header_size + payload_size + mask_size)
        throw FormatError("file size does not match header (expected " +
                          std::to_string(header_size + payload_size + mask_size) + " bytes, got " +
                          std::to_string(bytes.size()) + "): " + path);

    ReadResult result;
    std::string manifest_path = manifest_path_for(path);
    if (std::filesystem::exists(manifest_path)) {
        result.manifest = load_manifest(manifest_path);
        std::string actual = sha256_hex(bytes.data() + header_size, payload_size);
        if (actual != result.manifest->payload_sha256)
            throw ChecksumMismatch("payload hash " + actual + " does not match manifest " +
                                   result.manifest->payload_sha256 + ": " + path);
        if ((flags & kFlagMask) && result.manifest->mask_sha256) {
            std::string mask_actual =
                sha256_hex(bytes.data() + header_size + payload_size, mask_size);
            if (mask_actual != *result.manifest->mask_sha256)
                throw ChecksumMismatch("mask hash does not match manifest: " + path);
        }
    }

    PackedDataset& ds = result.dataset;
    if (result.manifest) {
        ds.config = result.manifest->config;
        ds.stats = result.manifest->stats;
    } else {
        ds.config.msl = msl;
        ds.config.eos_id = eos_id;
        ds.config.pad_id = pad_id;
    }
    ds.has_provenance = false;
    ds.sequences.resize(seq_count);
    const std::uint8_t* p = bytes.data() + header_size;
    for (std::uint64_t s = 0; s < seq_count; ++s) {
        auto& seq = ds.sequences[s];
        seq.tokens.resize(msl);
        for (std::uint64_t i = 0; i < msl; ++i, p += 4) seq.tokens[i] = detail::get_u32(p);
    }
    if (flags & kFlagMask) {
        const std::size_t row_bytes = (msl + 7) / 8;
        const std::uint8_t* m = bytes.data() + header_size + payload_size;
        for (std::uint64_t s = 0; s < seq_count; ++s, m += row_bytes) {
            auto& seq = ds.sequences[s];
            seq.loss_mask.resize(msl);
            for (std::uint64_t i = 0; i < msl; ++i)
                seq.loss_mask[i] = (m[i / 8] >> (i % 8)) & 1u;
        }
    }
    ds.payload_sha256 = sha256_hex(bytes.data() + header_size, payload_size);
    return result;
}

inline std::string sha256_of_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    Sha256 h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return to_hex(h.finish());
}

}  // namespace atompack
