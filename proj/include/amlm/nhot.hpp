#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amlm/serialize.hpp"
#include "amlm/vocab.hpp"

namespace amlm {

// Sparse binary feature table: for each token, the ids of all vocabulary
// entries whose raw spelling (word marker included) occurs as a contiguous
// proper substring of the token's spelling. Special and byte-fallback tokens
// have empty rows and never appear as features. Immutable once built.
struct NHotTable {
    int32_t vocab_size = 0;
    std::vector<int64_t> offsets;    // vocab_size + 1 entries
    std::vector<TokenId> features;   // flattened rows, each sorted ascending

    std::span<const TokenId> row(TokenId id) const {
        size_t i = static_cast<size_t>(id);
        return {features.data() + offsets[i],
                static_cast<size_t>(offsets[i + 1] - offsets[i])};
    }
    int64_t total_features() const { return static_cast<int64_t>(features.size()); }

    bool operator==(const NHotTable&) const = default;
};

NHotTable build_nhot(const Vocabulary& vocab);

// Precomputed sorted feature list for one token.
std::span<const TokenId> encode(TokenId id, const NHotTable& table);  // throws ValidationError

void write_nhot(LeWriter& out, const NHotTable& table);
NHotTable read_nhot(LeReader& in);
void save_nhot(const std::string& path, const NHotTable& table);
NHotTable load_nhot(const std::string& path);
// Rejects tables built for a different vocabulary size.
NHotTable load_nhot(const std::string& path, int32_t expected_vocab_size);

}  // namespace amlm
