#include <doctest.h>

#include <algorithm>
#include <map>

#include "atompack/packer.hpp"
#include "test_util.hpp"

using namespace atompack;

namespace {

PackConfig make_cfg(Strategy strategy, std::uint64_t msl, std::uint64_t atom,
                    std::uint64_t seed = 42) {
    PackConfig cfg;
    cfg.strategy = strategy;
    cfg.msl = msl;
    cfg.atom_size = atom;
    cfg.seed = seed;
    return cfg;
}

std::map<TokenId, std::uint64_t> word_multiset(const std::vector<Document>& docs) {
    std::map<TokenId, std::uint64_t> m;
    for (const auto& d : docs)
        for (TokenId t : d.tokens) ++m[t];
    return m;
}

std::map<TokenId, std::uint64_t> word_multiset(const PackedDataset& ds) {
    std::map<TokenId, std::uint64_t> m;
    for (const auto& s : ds.sequences)
        for (std::size_t i = 0; i < s.tokens.size(); ++i)
            if (s.classes[i] == TokenClass::word) ++m[s.tokens[i]];
    return m;
}

}  // namespace

TEST_CASE("PackConfig validation") {
    CHECK_NOTHROW(make_cfg(Strategy::concat, 64, 16).validate());
    CHECK_NOTHROW(make_cfg(Strategy::concat, 64, 256).validate());
    CHECK_THROWS_AS(make_cfg(Strategy::concat, 64, 48).validate(), IncompatibleSizes);
    CHECK_THROWS_AS(make_cfg(Strategy::concat, 1, 1).validate(), ConfigError);
    CHECK_THROWS_AS(make_cfg(Strategy::concat, 64, 1).validate(), ConfigError);

    // every cell of the experiment grid validates
    for (std::uint64_t msl : {32u, 64u, 128u}) {
        std::vector<std::uint64_t> atoms{msl / 4, msl / 2, msl, 2 * msl};
        if (msl != 128) atoms.push_back(4 * msl);
        for (std::uint64_t atom : atoms)
            for (Strategy s : {Strategy::concat, Strategy::padding})
                CHECK_NOTHROW(make_cfg(s, msl, atom).validate());
    }
}

TEST_CASE("segment_padding: 130-token document at msl = atom = 64") {
    auto docs = testutil::docs_from_lengths({130});
    auto cfg = make_cfg(Strategy::padding, 64, 64);
    auto atoms = segment_padding(docs[0], cfg);

    REQUIRE(atoms.size() == 3);
    for (const auto& a : atoms) CHECK(a.tokens.size() == 64);
    // [63 words + EOS], [63 words + EOS], [4 words + 60 pads]
    CHECK(std::count(atoms[0].classes.begin(), atoms[0].classes.end(), TokenClass::word) == 63);
    CHECK(atoms[0].classes.back() == TokenClass::chunk_eos);
    CHECK(atoms[0].tokens.back() == cfg.eos_id);
    CHECK(std::count(atoms[1].classes.begin(), atoms[1].classes.end(), TokenClass::word) == 63);
    CHECK(atoms[1].classes.back() == TokenClass::chunk_eos);
    CHECK(std::count(atoms[2].classes.begin(), atoms[2].classes.end(), TokenClass::word) == 4);
    CHECK(std::count(atoms[2].classes.begin(), atoms[2].classes.end(), TokenClass::tail_pad) == 60);
    CHECK(atoms[2].pad_count == 60);

    // concatenating span tokens in order reconstructs the document
    std::vector<TokenId> rebuilt;
    for (const auto& a : atoms)
        for (const auto& sp : a.spans) {
            CHECK(sp.doc_id == 0);
            for (std::uint64_t i = 0; i < sp.length; ++i)
                rebuilt.push_back(docs[0].tokens[sp.start + i]);
        }
    CHECK(rebuilt == docs[0].tokens);
}

TEST_CASE("segment_padding: exact-fit document of atom-1 tokens") {
    auto docs = testutil::docs_from_lengths({63});
    auto atoms = segment_padding(docs[0], make_cfg(Strategy::padding, 64, 64));
    REQUIRE(atoms.size() == 1);
    CHECK(atoms[0].tokens.size() == 64);
    CHECK(atoms[0].pad_count == 0);
    CHECK(atoms[0].classes.back() == TokenClass::chunk_eos);
}

TEST_CASE("segment_padding: oversized atom pads the tail to a multiple of msl") {
    // 35 tokens at msl=32, atom=128: one 64-token tail (35 words + 29 pads),
    // never 35 + 93
    auto docs = testutil::docs_from_lengths({35});
    auto atoms = segment_padding(docs[0], make_cfg(Strategy::padding, 32, 128));
    REQUIRE(atoms.size() == 1);
    CHECK(atoms[0].tokens.size() == 64);
    CHECK(atoms[0].pad_count == 29);
    CHECK(std::count(atoms[0].classes.begin(), atoms[0].classes.end(), TokenClass::word) == 35);
}

TEST_CASE("build_concat_stream: EOS interleaving") {
    PackConfig cfg = make_cfg(Strategy::concat, 4, 2);
    cfg.eos_id = 9;
    cfg.pad_id = 9;

    SUBCASE("two docs") {
        std::vector<Document> docs{{0, {10, 11, 12}, 0}, {1, {13, 14}, 1}};
        auto stream = build_concat_stream(docs, cfg);
        CHECK(stream.tokens == std::vector<TokenId>{10, 11, 12, 9, 13, 14, 9});
        CHECK(stream.region_start == std::vector<std::uint64_t>{0, 4, 7});
    }
    SUBCASE("empty doc list") {
        auto stream = build_concat_stream({}, cfg);
        CHECK(stream.tokens.empty());
    }
    SUBCASE("single one-token doc") {
        std::vector<Document> docs{{0, {5}, 0}};
        auto stream = build_concat_stream(docs, cfg);
        CHECK(stream.tokens == std::vector<TokenId>{5, 9});
    }
}

TEST_CASE("split_stream: chunking and remainder") {
    PackConfig cfg = make_cfg(Strategy::concat, 4, 2);
    cfg.eos_id = 9;
    cfg.pad_id = 9;
    std::vector<Document> docs{{0, {1, 2, 3}, 0}, {1, {4, 5}, 1}};  // stream of 7
    auto stream = build_concat_stream(docs, cfg);

    SUBCASE("drop remainder: 3 atoms, 1 token dropped") {
        auto atoms = split_stream(stream, docs, cfg);
        REQUIRE(atoms.size() == 3);
        for (const auto& a : atoms) CHECK(a.tokens.size() == 2);
        CHECK(atoms[0].tokens == std::vector<TokenId>{1, 2});
        CHECK(atoms[1].tokens == std::vector<TokenId>{3, 9});
        CHECK(atoms[1].classes[1] == TokenClass::stream_eos);
        CHECK(atoms[2].tokens == std::vector<TokenId>{4, 5});
        CHECK(atoms[2].spans == std::vector<Span>{Span{1, 0, 2}});
    }
    SUBCASE("pad fallback keeps the remainder") {
        cfg.drop_concat_remainder = false;
        auto atoms = split_stream(stream, docs, cfg);
        REQUIRE(atoms.size() == 4);
        CHECK(atoms[3].tokens == std::vector<TokenId>{9, 9});
        CHECK(atoms[3].classes == std::vector<TokenClass>{TokenClass::stream_eos,
                                                          TokenClass::tail_pad});
        CHECK(atoms[3].pad_count == 1);
    }
    SUBCASE("exactly divisible stream has no loss") {
        std::vector<Document> d2{{0, {1, 2, 3}, 0}};  // stream of 4
        auto s2 = build_concat_stream(d2, cfg);
        auto atoms = split_stream(s2, d2, cfg);
        CHECK(atoms.size() == 2);
    }
    SUBCASE("empty stream yields no atoms") {
        auto s2 = build_concat_stream({}, cfg);
        CHECK(split_stream(s2, {}, cfg).empty());
    }
}

TEST_CASE("shuffle_atoms: determinism and golden permutation") {
    auto docs = testutil::docs_from_lengths({3, 3, 3, 3, 3});
    PackConfig cfg = make_cfg(Strategy::padding, 4, 4);
    std::vector<Atom> atoms;
    for (const auto& d : docs)
        for (auto& a : segment_padding(d, cfg)) atoms.push_back(std::move(a));
    REQUIRE(atoms.size() == 5);

    SUBCASE("single atom unchanged") {
        std::vector<Atom> one{atoms[0]};
        CHECK(shuffle_atoms(one, 42)[0] == atoms[0]);
    }
    SUBCASE("same seed, same order") {
        CHECK(shuffle_atoms(atoms, 42) == shuffle_atoms(atoms, 42));
    }
    SUBCASE("golden permutation for 5 atoms at seed 42") {
        // frozen output of the pinned splitmix64 + Fisher-Yates generator
        auto shuffled = shuffle_atoms(atoms, 42);
        std::vector<std::uint64_t> order;
        for (const auto& a : shuffled) order.push_back(a.spans[0].doc_id);
        CHECK(order == std::vector<std::uint64_t>{1, 2, 0, 4, 3});
    }
    SUBCASE("shuffle is a permutation") {
        auto shuffled = shuffle_atoms(atoms, 7);
        auto sorted_tokens = [](const std::vector<Atom>& v) {
            std::vector<std::vector<TokenId>> t;
            for (const auto& a : v) t.push_back(a.tokens);
            std::sort(t.begin(), t.end());
            return t;
        };
        CHECK(sorted_tokens(shuffled) == sorted_tokens(atoms));
    }
}

TEST_CASE("reshape_to_msl: merge, identity, split") {
    SUBCASE("split one 64-atom into two 32-sequences, spans carried") {
        auto docs = testutil::docs_from_lengths({63});
        PackConfig cfg = make_cfg(Strategy::padding, 32, 64);
        auto atoms = segment_padding(docs[0], cfg);
        REQUIRE(atoms.size() == 1);
        REQUIRE(atoms[0].tokens.size() == 64);
        auto seqs = reshape_to_msl(atoms, cfg);
        REQUIRE(seqs.size() == 2);
        CHECK(seqs[0].tokens.size() == 32);
        CHECK(seqs[1].tokens.size() == 32);
        CHECK(seqs[0].spans == std::vector<Span>{Span{0, 0, 32}});
        CHECK(seqs[1].spans == std::vector<Span>{Span{0, 32, 31}});
        CHECK(seqs[1].classes.back() == TokenClass::chunk_eos);
    }
    SUBCASE("identity at atom == msl") {
        auto docs = testutil::docs_from_lengths({100});
        PackConfig cfg = make_cfg(Strategy::padding, 32, 32);
        auto atoms = segment_padding(docs[0], cfg);
        auto seqs = reshape_to_msl(atoms, cfg);
        REQUIRE(seqs.size() == atoms.size());
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            CHECK(seqs[i].tokens == atoms[i].tokens);
            CHECK(seqs[i].spans == atoms[i].spans);
        }
    }
    SUBCASE("merge with final incomplete group padded") {
        // atoms [a,b], [c,9], [d,e] at msl=4 -> [a,b,c,9], [d,e,pad,pad]
        PackConfig cfg = make_cfg(Strategy::concat, 4, 2);
        cfg.eos_id = 9;
        cfg.pad_id = 9;
        Atom a1{{10, 11}, {TokenClass::word, TokenClass::word}, {Span{0, 0, 2}}, 0};
        Atom a2{{12, 9}, {TokenClass::word, TokenClass::stream_eos}, {Span{0, 2, 1}}, 0};
        Atom a3{{13, 14}, {TokenClass::word, TokenClass::word}, {Span{1, 0, 2}}, 0};
        auto seqs = reshape_to_msl({a1, a2, a3}, cfg);
        REQUIRE(seqs.size() == 2);
        CHECK(seqs[0].tokens == std::vector<TokenId>{10, 11, 12, 9});
        CHECK(seqs[1].tokens == std::vector<TokenId>{13, 14, 9, 9});
        CHECK(seqs[1].classes ==
              std::vector<TokenClass>{TokenClass::word, TokenClass::word, TokenClass::merge_pad,
                                      TokenClass::merge_pad});
        CHECK(seqs[0].spans == std::vector<Span>{Span{0, 0, 2}, Span{0, 2, 1}});
    }
    SUBCASE("incompatible sizes rejected") {
        PackConfig bad = make_cfg(Strategy::concat, 4, 2);
        bad.atom_size = 3;
        CHECK_THROWS_AS(reshape_to_msl({}, bad), IncompatibleSizes);
    }
}

TEST_CASE("loss mask: first pad of each run participates, the rest do not") {
    // word word pad pad | eos-run still counts as a pad-valued run
    std::vector<TokenId> tokens{5, 6, 9, 9, 7, 9, 8};
    auto mask = compute_loss_mask(tokens, 9);
    CHECK(mask == std::vector<std::uint8_t>{1, 1, 1, 0, 1, 1, 1});
}

TEST_CASE("pack: composition and invariants") {
    SUBCASE("empty corpus gives an empty dataset") {
        auto ds = pack({}, make_cfg(Strategy::padding, 32, 32));
        CHECK(ds.sequences.empty());
        CHECK(ds.stats.sequence_count == 0);
        auto dc = pack({}, make_cfg(Strategy::concat, 32, 32));
        CHECK(dc.sequences.empty());
    }
    SUBCASE("padding conserves the word-token multiset") {
        auto docs = testutil::toy_corpus();
        for (std::uint64_t atom : {8u, 16u, 32u, 64u, 128u}) {
            auto ds = pack(docs, make_cfg(Strategy::padding, 32, atom));
            CHECK(word_multiset(ds) == word_multiset(docs));
            for (const auto& s : ds.sequences) CHECK(s.tokens.size() == 32);
        }
    }
    SUBCASE("concat with drop_remainder has no pad classes") {
        auto docs = testutil::toy_corpus();
        auto ds = pack(docs, make_cfg(Strategy::concat, 64, 64));
        for (const auto& s : ds.sequences)
            for (TokenClass c : s.classes) CHECK(!is_pad_class(c));
    }
    SUBCASE("padding atoms reference exactly one document") {
        auto docs = testutil::toy_corpus();
        auto ds = pack(docs, make_cfg(Strategy::padding, 64, 64));
        for (const auto& s : ds.sequences) CHECK(referenced_docs(s).size() == 1);
    }
    SUBCASE("documents containing reserved ids are rejected") {
        std::vector<Document> docs{{0, {1, 256, 2}, 0}};
        CHECK_THROWS_AS(pack(docs, make_cfg(Strategy::concat, 32, 32)), ReservedTokenEmitted);
    }
    SUBCASE("thread count does not change the result") {
        auto docs = testutil::toy_corpus();
        auto cfg = make_cfg(Strategy::padding, 32, 16);
        auto a = pack(docs, cfg, 1);
        auto b = pack(docs, cfg, 3);
        CHECK(a == b);
    }
}
