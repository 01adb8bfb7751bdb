#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amlm/vocab.hpp"

namespace amlm {

// One tokenized document or training chunk.
struct TokenSequence {
    std::vector<TokenId> ids;
    int64_t doc_id = 0;
};

// Greedy longest-match subword segmenter over the vocabulary.
//
// Before matching, one word marker "▁" is prepended and every space becomes
// a marker, so word-initial entries like "▁do" match at word starts. Spans
// covered by no vocabulary entry fall back to single-byte tokens of the
// original bytes, which makes segmentation total: detokenize() inverts
// tokenize() exactly for any byte string, including literal "▁" characters,
// leading spaces, and invalid UTF-8.
//
// A marker position is only ever matched by a "▁" inside a vocabulary entry;
// a literal "▁" in the input never is, it goes through byte fallback. The
// synthetic leading marker emits nothing when unmatched, and while nothing
// has been emitted yet a space marker cannot start a match (otherwise
// " x" and "x" could tokenize identically).
//
// Stateless after construction; safe to share across threads.
class Tokenizer {
public:
    explicit Tokenizer(const Vocabulary& vocab);  // vocab must outlive the tokenizer

    std::vector<TokenId> tokenize(std::string_view text) const;
    std::string detokenize(std::span<const TokenId> ids) const;

    const Vocabulary& vocab() const { return *vocab_; }

private:
    struct TrieNode {
        TokenId token = -1;
        // (codepoint, child index) pairs, few per node; linear scan.
        std::vector<std::pair<char32_t, int32_t>> next;
    };

    int32_t child(int32_t node, char32_t cp) const;
    void insert(std::u32string_view key, TokenId id);

    const Vocabulary* vocab_;
    std::vector<TrieNode> trie_;
};

}  // namespace amlm
