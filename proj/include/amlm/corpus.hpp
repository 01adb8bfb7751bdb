#pragma once

#include <span>
#include <string>
#include <vector>

#include "amlm/tokenizer.hpp"

namespace amlm {

// One document per line.
std::vector<TokenSequence> load_text_corpus(const std::string& path, const Tokenizer& tok);

// One whitespace-separated decimal id sequence per line. Rejects ids outside
// the vocabulary and any PAD or MASK occurrences.
std::vector<TokenSequence> load_id_corpus(const std::string& path, const Vocabulary& vocab);

// Splits each document into contiguous chunks of at most seq_len tokens,
// keeping the final partial chunk. Empty documents produce no chunks.
std::vector<TokenSequence> chunk_sequences(std::span<const TokenSequence> docs, int32_t seq_len);

struct FrequencyRanking {
    std::vector<int32_t> rank_of;  // token id -> rank, 0 = most frequent
    std::vector<int64_t> counts;   // token id -> corpus occurrences
    std::vector<TokenId> by_rank;  // rank -> token id
};

// Ranks every vocabulary id by descending corpus count, ties broken by
// ascending id; unseen tokens follow all observed ones.
FrequencyRanking compute_frequency_ranking(std::span<const TokenSequence> corpus,
                                           int32_t vocab_size);

}  // namespace amlm
