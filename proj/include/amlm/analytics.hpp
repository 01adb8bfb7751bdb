#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "amlm/corpus.hpp"
#include "amlm/scheduler.hpp"
#include "amlm/serialize.hpp"
#include "amlm/vocab.hpp"

namespace amlm {

// Universal POS tag set; X doubles as the fallback for unmapped ids.
inline constexpr std::array<std::string_view, 17> kUposTags = {
    "ADJ",  "ADP",  "ADV",   "AUX",   "CCONJ", "DET",  "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM",  "VERB", "X"};

inline constexpr int kTagX = 16;

enum class TrackKind : int32_t { FreqBin = 0, Pos = 1, Token = 2 };

std::string track_kind_name(TrackKind kind);
TrackKind parse_track_kind(const std::string& name);

// token id -> UPOS tag index; everything starts as X.
struct PosMap {
    std::vector<uint8_t> tags;

    static PosMap all_x(int32_t vocab_size);
    // TSV lines "token_id<TAB>TAG". Ids must be in range, tags in the
    // closed set; unmentioned ids stay X.
    static PosMap from_file(const std::string& path, int32_t vocab_size);

    std::string_view tag_of(TokenId id) const { return kUposTags[tags[static_cast<size_t>(id)]]; }
};

struct TrajectoryRow {
    int64_t timestep = 0;
    TrackKind kind = TrackKind::FreqBin;
    std::string key;
    double mean_weight = 0.0;
    int64_t count = 0;

    bool operator==(const TrajectoryRow&) const = default;
};

struct TrajectoryLog {
    std::vector<TrajectoryRow> rows;

    void append(std::vector<TrajectoryRow> more);
    // (timestep, kind, key) with numeric keys compared as numbers
    void sort_rows();

    void write_csv(std::ostream& out) const;
    void write_csv(const std::string& path) const;
    void write_jsonl(const std::string& path) const;
    static TrajectoryLog read_csv(const std::string& path);

    bool operator==(const TrajectoryLog&) const = default;
};

// Mean current weight per frequency bin. Bin k covers ranks
// [k*bin_size, (k+1)*bin_size); special tokens are skipped and bins left
// empty by that are omitted. With occurrence counts, members contribute
// proportionally to their corpus frequency instead of once per type.
std::vector<TrajectoryRow> bin_by_frequency(const MaskWeightTable& table, const Vocabulary& vocab,
                                            const FrequencyRanking& ranking, int32_t bin_size,
                                            int64_t timestep,
                                            const std::vector<int64_t>* occurrence_counts = nullptr);

std::vector<TrajectoryRow> group_by_pos(const MaskWeightTable& table, const Vocabulary& vocab,
                                        const PosMap& pos_map, int64_t timestep,
                                        const std::vector<int64_t>* occurrence_counts = nullptr);

// Mean weight over all non-special token types.
double global_mean_weight(const MaskWeightTable& table, const Vocabulary& vocab);

// Frequency ranking artifact: "rank,token_id,count" rows in rank order.
void write_ranking_csv(const std::string& path, const FrequencyRanking& ranking);
FrequencyRanking read_ranking_csv(const std::string& path, int32_t vocab_size);

// Raw weight-table snapshots, one per boundary, for post-hoc regrouping.
struct WeightsSnapshot {
    int64_t timestep = 0;
    double p_current = 0.0;
    std::vector<double> weights;

    bool operator==(const WeightsSnapshot&) const = default;
};

struct WeightsLog {
    int32_t vocab_size = 0;
    std::vector<WeightsSnapshot> snapshots;

    void write(LeWriter& out) const;
    static WeightsLog read(LeReader& in);
    void save(const std::string& path) const;
    static WeightsLog load(const std::string& path);

    bool operator==(const WeightsLog&) const = default;
};

}  // namespace amlm
