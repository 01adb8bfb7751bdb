#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "amlm/errors.hpp"
#include "amlm/nhot.hpp"
#include "amlm/rng.hpp"
#include "amlm/vocab.hpp"

using namespace amlm;

namespace {

Vocabulary make_vocab(std::vector<std::string> extra) {
    std::vector<std::string> e = {"<pad>", "<unk>", "<mask>", "<s>", "</s>"};
    for (int b = 0; b < 256; ++b) e.push_back(byte_fallback_spelling(static_cast<uint8_t>(b)));
    for (auto& s : extra) e.push_back(std::move(s));
    return Vocabulary::from_entries(std::move(e));
}

// Independent oracle: check every other normal entry with string::find.
std::vector<TokenId> oracle_row(const Vocabulary& vocab, TokenId id) {
    std::vector<TokenId> out;
    if (vocab.is_special(id) || vocab.is_byte_fallback(id)) return out;
    const std::string& s = vocab.entry(id);
    for (TokenId other = 0; other < vocab.size(); ++other) {
        if (other == id || vocab.is_special(other) || vocab.is_byte_fallback(other)) continue;
        const std::string& u = vocab.entry(other);
        if (u.size() < s.size() && s.find(u) != std::string::npos) out.push_back(other);
    }
    return out;  // already ascending by id
}

std::vector<TokenId> ids_of(const Vocabulary& vocab, std::vector<std::string> spellings) {
    std::vector<TokenId> out;
    for (const auto& s : spellings) out.push_back(*vocab.id_of(s));
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<TokenId> as_vec(std::span<const TokenId> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("substring features of abc") {
    auto vocab = make_vocab({"a", "b", "c", "ab", "bc", "abc"});
    auto table = build_nhot(vocab);
    CHECK(as_vec(encode(*vocab.id_of("abc"), table)) ==
          ids_of(vocab, {"a", "b", "c", "ab", "bc"}));
    CHECK(as_vec(encode(*vocab.id_of("ab"), table)) == ids_of(vocab, {"a", "b"}));
    CHECK(encode(*vocab.id_of("a"), table).empty());
}

TEST_CASE("marker-prefixed token decomposes into marked and bare substrings") {
    auto vocab = make_vocab({"\xE2\x96\x81" "doing", "\xE2\x96\x81" "doin", "g",
                             "\xE2\x96\x81" "do", "ing", "do", "in", "o"});
    auto table = build_nhot(vocab);
    auto got = as_vec(encode(*vocab.id_of("\xE2\x96\x81" "doing"), table));
    auto want = ids_of(vocab, {"\xE2\x96\x81" "doin", "g", "\xE2\x96\x81" "do", "ing",
                               "do", "in", "o"});
    CHECK(got == want);
    CHECK(got == oracle_row(vocab, *vocab.id_of("\xE2\x96\x81" "doing")));
}

TEST_CASE("repeated substrings appear once") {
    auto vocab = make_vocab({"a", "aaa", "aa"});
    auto table = build_nhot(vocab);
    CHECK(as_vec(encode(*vocab.id_of("aaa"), table)) == ids_of(vocab, {"a", "aa"}));
}

TEST_CASE("specials and byte tokens have empty rows and never appear as features") {
    auto vocab = make_vocab({"z<0x41>z", "a<s>q", "w"});
    auto table = build_nhot(vocab);
    CHECK(encode(vocab.pad_id(), table).empty());
    CHECK(encode(vocab.mask_id(), table).empty());
    CHECK(encode(vocab.byte_id('a'), table).empty());
    // "<0x41>" and "<s>" occur literally inside these spellings but are not features
    CHECK(encode(*vocab.id_of("z<0x41>z"), table).empty());
    CHECK(encode(*vocab.id_of("a<s>q"), table).empty());

    for (TokenId id = 0; id < vocab.size(); ++id) {
        for (TokenId f : table.row(id)) {
            CHECK_FALSE(vocab.is_special(f));
            CHECK_FALSE(vocab.is_byte_fallback(f));
            CHECK(f != id);
        }
        CHECK(std::is_sorted(table.row(id).begin(), table.row(id).end()));
    }
}

TEST_CASE("matches naive oracle on randomized vocabularies") {
    SplitMix64 rng(31);
    const char alphabet[] = {'a', 'b', 'c'};
    for (int iter = 0; iter < 30; ++iter) {
        std::vector<std::string> extra;
        for (int k = 0; k < 40; ++k) {
            std::string s;
            if (rng.next_below(3) == 0) s += "\xE2\x96\x81";
            uint64_t len = 1 + rng.next_below(5);
            for (uint64_t j = 0; j < len; ++j) s += alphabet[rng.next_below(3)];
            extra.push_back(std::move(s));
        }
        std::sort(extra.begin(), extra.end());
        extra.erase(std::unique(extra.begin(), extra.end()), extra.end());

        auto vocab = make_vocab(extra);
        auto table = build_nhot(vocab);
        for (TokenId id = 0; id < vocab.size(); ++id) {
            CHECK(as_vec(table.row(id)) == oracle_row(vocab, id));
        }

        // substring transitivity
        for (TokenId w = 0; w < vocab.size(); ++w) {
            auto wr = table.row(w);
            for (TokenId v : wr) {
                for (TokenId u : table.row(v)) {
                    CHECK(std::binary_search(wr.begin(), wr.end(), u));
                }
            }
        }

        // determinism / idempotence
        CHECK(build_nhot(vocab) == table);
    }
}

TEST_CASE("encode rejects out-of-range ids") {
    auto vocab = make_vocab({"a"});
    auto table = build_nhot(vocab);
    CHECK_THROWS_AS(encode(-1, table), ValidationError);
    CHECK_THROWS_AS(encode(vocab.size(), table), ValidationError);
}

TEST_CASE("table round-trips through disk") {
    auto vocab = make_vocab({"a", "b", "c", "ab", "bc", "abc"});
    auto table = build_nhot(vocab);
    auto path = (std::filesystem::temp_directory_path() / "amlm_nhot.bin").string();
    save_nhot(path, table);
    CHECK(load_nhot(path) == table);
    CHECK(load_nhot(path, vocab.size()) == table);
    CHECK_THROWS_AS(load_nhot(path, vocab.size() + 1), ValidationError);
    std::filesystem::remove(path);
}

TEST_CASE("loading rejects corrupt tables") {
    auto dir = std::filesystem::temp_directory_path();
    {
        auto bad = (dir / "amlm_nhot_magic.bin").string();
        LeWriter out(bad);
        out.bytes("WRONGMAG", 8);
        out.close();
        CHECK_THROWS_AS(load_nhot(bad), FormatError);
        std::filesystem::remove(bad);
    }
    {
        auto trunc = (dir / "amlm_nhot_trunc.bin").string();
        LeWriter out(trunc);
        out.bytes("AMLMNHT1", 8);
        out.u32(1);
        out.i32(300);
        out.i64(10);
        out.close();
        CHECK_THROWS_AS(load_nhot(trunc), FormatError);
        std::filesystem::remove(trunc);
    }
    CHECK_THROWS_AS(load_nhot("/nonexistent/nhot.bin"), IoError);
}
