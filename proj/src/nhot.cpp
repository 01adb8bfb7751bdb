#include "amlm/nhot.hpp"

#include <algorithm>
#include <string_view>
#include <unordered_map>

#include "amlm/errors.hpp"

namespace amlm {

NHotTable build_nhot(const Vocabulary& vocab) {
    std::unordered_map<std::string_view, TokenId> index;
    index.reserve(static_cast<size_t>(vocab.size()));
    for (TokenId id = 0; id < vocab.size(); ++id) {
        if (vocab.is_special(id) || vocab.is_byte_fallback(id)) continue;
        index.emplace(vocab.entry(id), id);
    }

    NHotTable table;
    table.vocab_size = vocab.size();
    table.offsets.reserve(static_cast<size_t>(vocab.size()) + 1);
    table.offsets.push_back(0);
    std::vector<TokenId> scratch;
    for (TokenId id = 0; id < vocab.size(); ++id) {
        if (!vocab.is_special(id) && !vocab.is_byte_fallback(id)) {
            std::string_view s = vocab.entry(id);
            scratch.clear();
            for (size_t start = 0; start < s.size(); ++start) {
                size_t max_len = s.size() - start;
                if (start == 0) max_len -= 1;  // skip the whole string itself
                for (size_t len = 1; len <= max_len; ++len) {
                    auto it = index.find(s.substr(start, len));
                    if (it != index.end()) scratch.push_back(it->second);
                }
            }
            std::sort(scratch.begin(), scratch.end());
            scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
            table.features.insert(table.features.end(), scratch.begin(), scratch.end());
        }
        table.offsets.push_back(static_cast<int64_t>(table.features.size()));
    }
    return table;
}

std::span<const TokenId> encode(TokenId id, const NHotTable& table) {
    if (id < 0 || id >= table.vocab_size) {
        throw ValidationError("token id " + std::to_string(id) +
                              " out of range for n-hot table of size " +
                              std::to_string(table.vocab_size));
    }
    return table.row(id);
}

static constexpr std::string_view kNHotMagic = "AMLMNHT1";
static constexpr uint32_t kNHotVersion = 1;

void write_nhot(LeWriter& out, const NHotTable& table) {
    out.bytes(kNHotMagic.data(), kNHotMagic.size());
    out.u32(kNHotVersion);
    out.i32(table.vocab_size);
    out.i64(table.total_features());
    out.i64_array(table.offsets);
    out.i32_array(table.features);
}

NHotTable read_nhot(LeReader& in) {
    in.expect_magic(kNHotMagic, "n-hot table");
    uint32_t version = in.u32();
    if (version != kNHotVersion) {
        throw FormatError("unsupported n-hot table version " + std::to_string(version) +
                          " in '" + in.path() + "'");
    }
    NHotTable table;
    table.vocab_size = in.i32();
    int64_t total = in.i64();
    if (table.vocab_size < 0 || total < 0) {
        throw FormatError("nonsense sizes in n-hot table '" + in.path() + "'");
    }
    table.offsets = in.i64_array(static_cast<size_t>(table.vocab_size) + 1);
    table.features = in.i32_array(static_cast<size_t>(total));
    if (table.offsets.front() != 0 || table.offsets.back() != total ||
        !std::is_sorted(table.offsets.begin(), table.offsets.end())) {
        throw FormatError("corrupt offset index in n-hot table '" + in.path() + "'");
    }
    for (TokenId f : table.features) {
        if (f < 0 || f >= table.vocab_size) {
            throw FormatError("feature id out of range in n-hot table '" + in.path() + "'");
        }
    }
    return table;
}

void save_nhot(const std::string& path, const NHotTable& table) {
    LeWriter out(path);
    write_nhot(out, table);
    out.close();
}

NHotTable load_nhot(const std::string& path) {
    LeReader in(path);
    return read_nhot(in);
}

NHotTable load_nhot(const std::string& path, int32_t expected_vocab_size) {
    NHotTable table = load_nhot(path);
    if (table.vocab_size != expected_vocab_size) {
        throw ValidationError("n-hot table '" + path + "' was built for vocab size " +
                              std::to_string(table.vocab_size) + ", expected " +
                              std::to_string(expected_vocab_size));
    }
    return table;
}

}  // namespace amlm
