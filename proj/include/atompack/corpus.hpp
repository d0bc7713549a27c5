#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "atompack/types.hpp"

namespace atompack {

// ---------------------------------------------------------------------------
// Rows and documents
// ---------------------------------------------------------------------------

struct RawRow {
    std::uint64_t index = 0;  // ordinal position in the source file
    std::string text;
    std::uint64_t word_count = 0;  // maximal non-whitespace runs in text
};

struct Document {
    std::uint64_t doc_id = 0;  // contiguous from 0 in corpus order
    std::vector<TokenId> tokens;
    std::uint64_t source_index = 0;  // originating RawRow index

    bool operator==(const Document&) const = default;
};

struct FilterStats {
    std::uint64_t rows_in = 0;
    std::uint64_t rows_kept = 0;
    std::uint64_t rows_dropped = 0;
    std::uint64_t words_in = 0;
    std::uint64_t words_kept = 0;
    double row_drop_fraction = 0.0;
    double word_drop_fraction = 0.0;

    bool operator==(const FilterStats&) const = default;
};

// ---------------------------------------------------------------------------
// Word counting
// ---------------------------------------------------------------------------

// Whitespace per the Unicode semantics used by common text tooling
// (ASCII controls 0x09-0x0D and 0x1C-0x1F, space, NEL, NBSP, and the
// dedicated space blocks).
inline bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D:
        case 0x1C: case 0x1D: case 0x1E: case 0x1F:
        case 0x20: case 0x85: case 0xA0:
        case 0x1680:
        case 0x2028: case 0x2029: case 0x202F: case 0x205F:
        case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

namespace detail {

// Minimal UTF-8 decode; malformed bytes are passed through as single code
// units so counting never throws on dirty input.
inline char32_t next_codepoint(std::string_view s, std::size_t& i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    unsigned char b0 = byte(i);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    auto cont = [&](std::size_t k) {
        return k < s.size() && (byte(k) & 0xC0) == 0x80;
    };
    if ((b0 & 0xE0) == 0xC0 && cont(i + 1)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x1F) << 6) | (byte(i + 1) & 0x3F);
        i += 2;
        return cp;
    }
    if ((b0 & 0xF0) == 0xE0 && cont(i + 1) && cont(i + 2)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x0F) << 12) |
                      (static_cast<char32_t>(byte(i + 1) & 0x3F) << 6) | (byte(i + 2) & 0x3F);
        i += 3;
        return cp;
    }
    if ((b0 & 0xF8) == 0xF0 && cont(i + 1) && cont(i + 2) && cont(i + 3)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x07) << 18) |
                      (static_cast<char32_t>(byte(i + 1) & 0x3F) << 12) |
                      (static_cast<char32_t>(byte(i + 2) & 0x3F) << 6) | (byte(i + 3) & 0x3F);
        i += 4;
        return cp;
    }
    ++i;
    return 0xFFFD;
}

}  // namespace detail

inline std::uint64_t count_words(std::string_view text) {
    std::uint64_t words = 0;
    bool in_word = false;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = detail::next_codepoint(text, i);
        if (is_unicode_space(cp)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
    }
    return words;
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

// Keeps rows with word_count >= min_words, in original order. Blank rows
// fall out of the same threshold.
inline std::pair<std::vector<RawRow>, FilterStats> filter_rows(const std::vector<RawRow>& rows,
                                                               std::uint64_t min_words) {
    std::vector<RawRow> kept;
    FilterStats stats;
    stats.rows_in = rows.size();
    for (const RawRow& row : rows) {
        stats.words_in += row.word_count;
        if (row.word_count >= min_words) {
            stats.words_kept += row.word_count;
            kept.push_back(row);
        }
    }
    stats.rows_kept = kept.size();
    stats.rows_dropped = stats.rows_in - stats.rows_kept;
    stats.row_drop_fraction =
        stats.rows_in == 0 ? 0.0
                           : static_cast<double>(stats.rows_dropped) / static_cast<double>(stats.rows_in);
    stats.word_drop_fraction =
        stats.words_in == 0
            ? 0.0
            : static_cast<double>(stats.words_in - stats.words_kept) / static_cast<double>(stats.words_in);
    return {std::move(kept), stats};
}

// ---------------------------------------------------------------------------
// Tokenizer port
// ---------------------------------------------------------------------------

class TokenizerPort {
public:
    virtual ~TokenizerPort() = default;
    virtual std::vector<TokenId> encode(std::string_view text) const = 0;
    virtual std::string name() const = 0;
};

// Byte-level tokenizer: a bijection between byte strings and id sequences
// over 0..255. Reserved ids live at 256+ so it can never collide with them.
class ByteTokenizer final : public TokenizerPort {
public:
    static constexpr TokenId kVocabSize = 256;
    static constexpr TokenId kDefaultEos = 256;

    std::vector<TokenId> encode(std::string_view text) const override {
        std::vector<TokenId> out;
        out.reserve(text.size());
        for (char c : text) out.push_back(static_cast<unsigned char>(c));
        return out;
    }

    static std::string decode(const std::vector<TokenId>& tokens) {
        std::string out;
        out.reserve(tokens.size());
        for (TokenId t : tokens) out.push_back(static_cast<char>(t & 0xFF));
        return out;
    }

    std::string name() const override { return "byte-v1"; }
};

// One Document per row, doc_id in row order. Tokenization may run in
// parallel per row; output order is always source order.
inline std::vector<Document> tokenize_rows(const std::vector<RawRow>& rows,
                                           const TokenizerPort& tokenizer, TokenId eos_id,
                                           TokenId pad_id, unsigned threads = 1) {
    std::vector<Document> docs(rows.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<std::size_t>(threads, std::max<std::size_t>(rows.size(), 1));

    auto encode_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            docs[i].doc_id = i;
            docs[i].source_index = rows[i].index;
            docs[i].tokens = tokenizer.encode(rows[i].text);
        }
    };
    if (threads <= 1 || rows.size() < 2) {
        encode_range(0, rows.size());
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (rows.size() + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            std::size_t begin = t * chunk;
            std::size_t end = std::min(rows.size(), begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(encode_range, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].tokens.empty())
            throw EmptyTokenization("row " + std::to_string(rows[i].index) +
                                    " tokenized to zero tokens");
        for (TokenId t : docs[i].tokens) {
            if (t == eos_id || t == pad_id)
                throw ReservedTokenEmitted("tokenizer emitted reserved id " + std::to_string(t) +
                                           " for row " + std::to_string(rows[i].index));
        }
    }
    return docs;
}

// ---------------------------------------------------------------------------
// File readers
// ---------------------------------------------------------------------------

// One document per line. A line that parses as a JSON object with a "text"
// string field contributes that field; anything else is taken verbatim.
inline std::vector<RawRow> read_raw_rows(std::istream& in) {
    std::vector<RawRow> rows;
    std::string line;
    std::uint64_t index = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string text = line;
        if (!line.empty() && line.front() == '{') {
            auto parsed = nlohmann::json::parse(line, nullptr, false);
            if (parsed.is_object() && parsed.contains("text") && parsed["text"].is_string())
                text = parsed["text"].get<std::string>();
        }
        rows.push_back(RawRow{index++, std::move(text), 0});
        rows.back().word_count = count_words(rows.back().text);
    }
    return rows;
}

inline std::vector<RawRow> read_raw_rows(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open input file: " + path);
    return read_raw_rows(in);
}

// Line-delimited pre-tokenized records: either a bare JSON integer array or
// an object with a "tokens" array. Blank lines are skipped.
inline std::vector<Document> load_pretokenized(std::istream& in, TokenId eos_id, TokenId pad_id) {
    std::vector<Document> docs;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto parsed = nlohmann::json::parse(line, nullptr, false);
        const nlohmann::json* arr = nullptr;
        if (parsed.is_array()) {
            arr = &parsed;
        } else if (parsed.is_object() && parsed.contains("tokens") && parsed["tokens"].is_array()) {
            arr = &parsed["tokens"];
        } else {
            throw ParseError("line " + std::to_string(line_no) +
                             ": expected a token array or an object with a \"tokens\" array");
        }
        Document doc;
        doc.doc_id = docs.size();
        doc.source_index = line_no - 1;
        doc.tokens.reserve(arr->size());
        for (const auto& v : *arr) {
            if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
                throw ParseError("line " + std::to_string(line_no) +
                                 ": token ids must be non-negative integers");
            auto id = static_cast<std::uint64_t>(v.get<std::int64_t>());
            if (id == eos_id || id == pad_id)
                throw ReservedTokenEmitted("line " + std::to_string(line_no) +
                                           ": token id " + std::to_string(id) + " is reserved");
            doc.tokens.push_back(static_cast<TokenId>(id));
        }
        if (doc.tokens.empty())
            throw EmptyTokenization("line " + std::to_string(line_no) + ": empty token list");
        docs.push_back(std::move(doc));
    }
    return docs;
}

inline std::vector<Document> load_pretokenized(const std::string& path, TokenId eos_id,
                                               TokenId pad_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open pre-tokenized file: " + path);
    return load_pretokenized(in, eos_id, pad_id);
}

// Lightweight variant for accounting projections over corpora too large to
// hold as documents: token count per record, in file order.
inline std::vector<std::uint64_t> load_pretokenized_lengths(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open pre-tokenized file: " + path);
    std::vector<std::uint64_t> lengths;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto parsed = nlohmann::json::parse(line, nullptr, false);
        const nlohmann::json* arr = nullptr;
        if (parsed.is_array()) arr = &parsed;
        else if (parsed.is_object() && parsed.contains("tokens") && parsed["tokens"].is_array())
            arr = &parsed["tokens"];
        else
            throw ParseError("line " + std::to_string(line_no) + ": expected a token array");
        lengths.push_back(arr->size());
    }
    return lengths;
}

}  // namespace atompack
