#include "amlm/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <string_view>

#include <json.hpp>

#include "amlm/errors.hpp"

namespace amlm {

namespace {

constexpr std::string_view kWeightsMagic = "AMLMWLG1";
constexpr uint32_t kWeightsVersion = 1;
constexpr std::string_view kCsvHeader = "timestep,kind,key,mean_weight,count";

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool parse_i64(std::string_view s, int64_t& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Accum {
    double weighted_sum = 0.0;
    double weight_total = 0.0;
    double type_sum = 0.0;
    int64_t types = 0;

    double mean() const {
        if (weight_total > 0.0) return weighted_sum / weight_total;
        return types > 0 ? type_sum / static_cast<double>(types) : 0.0;
    }
};

}  // namespace

std::string track_kind_name(TrackKind kind) {
    switch (kind) {
        case TrackKind::FreqBin: return "freq_bin";
        case TrackKind::Pos: return "pos";
        case TrackKind::Token: return "token";
    }
    throw ValidationError("unknown track kind " + std::to_string(static_cast<int>(kind)));
}

TrackKind parse_track_kind(const std::string& name) {
    if (name == "freq_bin") return TrackKind::FreqBin;
    if (name == "pos") return TrackKind::Pos;
    if (name == "token") return TrackKind::Token;
    throw ValidationError("unknown track kind '" + name + "'");
}

PosMap PosMap::all_x(int32_t vocab_size) {
    if (vocab_size < 0) throw ValidationError("negative vocab size for POS map");
    PosMap map;
    map.tags.assign(static_cast<size_t>(vocab_size), static_cast<uint8_t>(kTagX));
    return map;
}

PosMap PosMap::from_file(const std::string& path, int32_t vocab_size) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open POS map '" + path + "'");
    PosMap map = all_x(vocab_size);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) continue;
        auto where = [&] { return path + ":" + std::to_string(lineno); };
        size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ValidationError("expected token_id<TAB>TAG at " + where());
        }
        int64_t id = 0;
        if (!parse_i64(std::string_view(line).substr(0, tab), id) || id < 0 ||
            id >= vocab_size) {
            throw ValidationError("bad token id '" + line.substr(0, tab) + "' at " + where());
        }
        std::string_view tag = std::string_view(line).substr(tab + 1);
        auto it = std::find(kUposTags.begin(), kUposTags.end(), tag);
        if (it == kUposTags.end()) {
            throw ValidationError("unknown POS tag '" + std::string(tag) + "' at " + where());
        }
        map.tags[static_cast<size_t>(id)] =
            static_cast<uint8_t>(std::distance(kUposTags.begin(), it));
    }
    return map;
}

std::vector<TrajectoryRow> bin_by_frequency(const MaskWeightTable& table, const Vocabulary& vocab,
                                            const FrequencyRanking& ranking, int32_t bin_size,
                                            int64_t timestep,
                                            const std::vector<int64_t>* occurrence_counts) {
    if (bin_size < 1) throw ValidationError("bin size must be positive");
    size_t n = table.w.size();
    if (n != static_cast<size_t>(vocab.size()) || ranking.by_rank.size() != n) {
        throw ValidationError("weight table, vocabulary and ranking sizes disagree");
    }
    std::vector<Accum> bins((n + static_cast<size_t>(bin_size) - 1) / bin_size);
    for (size_t rank = 0; rank < n; ++rank) {
        TokenId id = ranking.by_rank[rank];
        if (vocab.is_special(id)) continue;
        Accum& a = bins[rank / static_cast<size_t>(bin_size)];
        double w = table.w[static_cast<size_t>(id)];
        a.type_sum += w;
        a.types += 1;
        if (occurrence_counts) {
            double occ = static_cast<double>((*occurrence_counts)[static_cast<size_t>(id)]);
            a.weighted_sum += occ * w;
            a.weight_total += occ;
        }
    }
    std::vector<TrajectoryRow> rows;
    for (size_t b = 0; b < bins.size(); ++b) {
        if (bins[b].types == 0) continue;
        rows.push_back({timestep, TrackKind::FreqBin, std::to_string(b), bins[b].mean(),
                        bins[b].types});
    }
    return rows;
}

std::vector<TrajectoryRow> group_by_pos(const MaskWeightTable& table, const Vocabulary& vocab,
                                        const PosMap& pos_map, int64_t timestep,
                                        const std::vector<int64_t>* occurrence_counts) {
    size_t n = table.w.size();
    if (n != static_cast<size_t>(vocab.size()) || pos_map.tags.size() != n) {
        throw ValidationError("weight table, vocabulary and POS map sizes disagree");
    }
    std::array<Accum, kUposTags.size()> groups{};
    for (size_t id = 0; id < n; ++id) {
        if (vocab.is_special(static_cast<TokenId>(id))) continue;
        Accum& a = groups[pos_map.tags[id]];
        double w = table.w[id];
        a.type_sum += w;
        a.types += 1;
        if (occurrence_counts) {
            double occ = static_cast<double>((*occurrence_counts)[id]);
            a.weighted_sum += occ * w;
            a.weight_total += occ;
        }
    }
    std::vector<TrajectoryRow> rows;
    for (size_t t = 0; t < groups.size(); ++t) {
        if (groups[t].types == 0) continue;
        rows.push_back({timestep, TrackKind::Pos, std::string(kUposTags[t]), groups[t].mean(),
                        groups[t].types});
    }
    return rows;
}

double global_mean_weight(const MaskWeightTable& table, const Vocabulary& vocab) {
    double sum = 0.0;
    int64_t n = 0;
    for (size_t id = 0; id < table.w.size(); ++id) {
        if (vocab.is_special(static_cast<TokenId>(id))) continue;
        sum += table.w[id];
        n += 1;
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

void TrajectoryLog::append(std::vector<TrajectoryRow> more) {
    rows.insert(rows.end(), std::make_move_iterator(more.begin()),
                std::make_move_iterator(more.end()));
}

void TrajectoryLog::sort_rows() {
    auto key_less = [](const std::string& a, const std::string& b) {
        int64_t na = 0, nb = 0;
        if (parse_i64(a, na) && parse_i64(b, nb)) return na < nb;
        return a < b;
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const TrajectoryRow& a, const TrajectoryRow& b) {
        if (a.timestep != b.timestep) return a.timestep < b.timestep;
        if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
        return key_less(a.key, b.key);
    });
}

void TrajectoryLog::write_csv(std::ostream& out) const {
    out << kCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.timestep << ',' << track_kind_name(r.kind) << ',' << r.key << ','
            << format_double(r.mean_weight) << ',' << r.count << '\n';
    }
}

void TrajectoryLog::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    write_csv(out);
    out.flush();
    if (!out) throw IoError("short write to '" + path + "'");
}

void TrajectoryLog::write_jsonl(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    for (const auto& r : rows) {
        nlohmann::ordered_json obj = {{"timestep", r.timestep},
                                      {"kind", track_kind_name(r.kind)},
                                      {"key", r.key},
                                      {"mean_weight", r.mean_weight},
                                      {"count", r.count}};
        out << obj.dump() << '\n';
    }
    out.flush();
    if (!out) throw IoError("short write to '" + path + "'");
}

TrajectoryLog TrajectoryLog::read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty trajectory file '" + path + "'");
    strip_cr(line);
    if (line != kCsvHeader) {
        throw FormatError("unexpected header '" + line + "' in '" + path + "'");
    }
    TrajectoryLog log;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) continue;
        std::array<std::string_view, 5> fields;
        std::string_view rest = line;
        for (int f = 0; f < 4; ++f) {
            size_t comma = rest.find(',');
            if (comma == std::string_view::npos) {
                throw FormatError("expected 5 fields at " + path + ":" + std::to_string(lineno));
            }
            fields[static_cast<size_t>(f)] = rest.substr(0, comma);
            rest.remove_prefix(comma + 1);
        }
        fields[4] = rest;
        TrajectoryRow row;
        double mw = 0.0;
        auto [ptr, ec] =
            std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), mw);
        if (!parse_i64(fields[0], row.timestep) || ec != std::errc() ||
            ptr != fields[3].data() + fields[3].size() || !parse_i64(fields[4], row.count)) {
            throw FormatError("bad numeric field at " + path + ":" + std::to_string(lineno));
        }
        row.kind = parse_track_kind(std::string(fields[1]));
        row.key = std::string(fields[2]);
        row.mean_weight = mw;
        log.rows.push_back(std::move(row));
    }
    return log;
}

void write_ranking_csv(const std::string& path, const FrequencyRanking& ranking) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "rank,token_id,count\n";
    for (size_t rank = 0; rank < ranking.by_rank.size(); ++rank) {
        TokenId id = ranking.by_rank[rank];
        out << rank << ',' << id << ',' << ranking.counts[static_cast<size_t>(id)] << '\n';
    }
    out.flush();
    if (!out) throw IoError("short write to '" + path + "'");
}

FrequencyRanking read_ranking_csv(const std::string& path, int32_t vocab_size) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty ranking file '" + path + "'");
    strip_cr(line);
    if (line != "rank,token_id,count") {
        throw FormatError("unexpected header '" + line + "' in '" + path + "'");
    }
    FrequencyRanking r;
    r.rank_of.assign(static_cast<size_t>(vocab_size), -1);
    r.counts.assign(static_cast<size_t>(vocab_size), 0);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) continue;
        auto bad = [&] {
            return FormatError("bad ranking row at " + path + ":" + std::to_string(lineno));
        };
        std::string_view sv = line;
        size_t c1 = sv.find(',');
        size_t c2 = c1 == std::string_view::npos ? c1 : sv.find(',', c1 + 1);
        if (c2 == std::string_view::npos) throw bad();
        int64_t rank = 0, id = 0, count = 0;
        if (!parse_i64(sv.substr(0, c1), rank) ||
            !parse_i64(sv.substr(c1 + 1, c2 - c1 - 1), id) ||
            !parse_i64(sv.substr(c2 + 1), count)) {
            throw bad();
        }
        if (rank != static_cast<int64_t>(r.by_rank.size()) || id < 0 || id >= vocab_size ||
            count < 0 || r.rank_of[static_cast<size_t>(id)] != -1) {
            throw bad();
        }
        r.by_rank.push_back(static_cast<TokenId>(id));
        r.rank_of[static_cast<size_t>(id)] = static_cast<int32_t>(rank);
        r.counts[static_cast<size_t>(id)] = count;
    }
    if (r.by_rank.size() != static_cast<size_t>(vocab_size)) {
        throw FormatError("ranking '" + path + "' does not cover the vocabulary");
    }
    return r;
}

void WeightsLog::write(LeWriter& out) const {
    out.bytes(kWeightsMagic.data(), kWeightsMagic.size());
    out.u32(kWeightsVersion);
    out.i32(vocab_size);
    out.u64(snapshots.size());
    for (const auto& s : snapshots) {
        if (s.weights.size() != static_cast<size_t>(vocab_size)) {
            throw ValidationError("weight snapshot size does not match vocab size");
        }
        out.i64(s.timestep);
        out.f64(s.p_current);
        out.f64_array(s.weights);
    }
}

WeightsLog WeightsLog::read(LeReader& in) {
    in.expect_magic(kWeightsMagic, "weights log");
    uint32_t version = in.u32();
    if (version != kWeightsVersion) {
        throw FormatError("unsupported weights log version " + std::to_string(version) + " in '" +
                          in.path() + "'");
    }
    WeightsLog log;
    log.vocab_size = in.i32();
    if (log.vocab_size < 0) throw FormatError("negative vocab size in '" + in.path() + "'");
    uint64_t n = in.u64();
    log.snapshots.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        WeightsSnapshot s;
        s.timestep = in.i64();
        s.p_current = in.f64();
        s.weights = in.f64_array(static_cast<size_t>(log.vocab_size));
        log.snapshots.push_back(std::move(s));
    }
    return log;
}

void WeightsLog::save(const std::string& path) const {
    LeWriter out(path);
    write(out);
    out.close();
}

WeightsLog WeightsLog::load(const std::string& path) {
    LeReader in(path);
    return read(in);
}

}  // namespace amlm
