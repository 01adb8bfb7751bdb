#include "amlm/vocab.hpp"

#include <cstdio>
#include <fstream>

#include "amlm/errors.hpp"

namespace amlm {

std::string byte_fallback_spelling(uint8_t b) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "<0x%02X>", b);
    return std::string(buf);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open vocab file '" + path + "'");
    }
    std::vector<std::string> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        entries.push_back(line);
    }
    return from_entries(std::move(entries));
}

Vocabulary Vocabulary::from_entries(std::vector<std::string> entries) {
    Vocabulary v;
    v.entries_ = std::move(entries);
    v.index_entries();
    return v;
}

void Vocabulary::index_entries() {
    index_.clear();
    index_.reserve(entries_.size() * 2);
    for (size_t i = 0; i < entries_.size(); ++i) {
        const std::string& e = entries_[i];
        if (e.empty()) {
            throw ValidationError("empty token at line " + std::to_string(i + 1));
        }
        auto [it, inserted] = index_.emplace(e, static_cast<TokenId>(i));
        if (!inserted) {
            throw ValidationError("duplicate token '" + e + "' at lines " +
                                  std::to_string(it->second + 1) + " and " +
                                  std::to_string(i + 1));
        }
    }

    auto find_required = [&](std::string_view spelling) -> TokenId {
        auto it = index_.find(std::string(spelling));
        if (it == index_.end()) {
            throw ValidationError("missing special token '" + std::string(spelling) + "'");
        }
        return it->second;
    };
    special_ids_[static_cast<size_t>(SpecialToken::Pad)] = find_required(kPadSpelling);
    special_ids_[static_cast<size_t>(SpecialToken::Unk)] = find_required(kUnkSpelling);
    special_ids_[static_cast<size_t>(SpecialToken::Mask)] = find_required(kMaskSpelling);
    special_ids_[static_cast<size_t>(SpecialToken::Bos)] = find_required(kBosSpelling);
    special_ids_[static_cast<size_t>(SpecialToken::Eos)] = find_required(kEosSpelling);

    byte_value_.assign(entries_.size(), -1);
    for (int b = 0; b < 256; ++b) {
        std::string spelling = byte_fallback_spelling(static_cast<uint8_t>(b));
        auto it = index_.find(spelling);
        if (it == index_.end()) {
            throw ValidationError("missing byte-fallback token '" + spelling + "'");
        }
        byte_ids_[static_cast<size_t>(b)] = it->second;
        byte_value_[static_cast<size_t>(it->second)] = static_cast<int16_t>(b);
    }

    special_mask_.assign(entries_.size(), false);
    for (TokenId id : special_ids_) {
        special_mask_[static_cast<size_t>(id)] = true;
    }

    non_special_ids_.clear();
    non_special_ids_.reserve(entries_.size() - 5);
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (!special_mask_[i]) {
            non_special_ids_.push_back(static_cast<TokenId>(i));
        }
    }
}

std::optional<TokenId> Vocabulary::id_of(std::string_view spelling) const {
    auto it = index_.find(std::string(spelling));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

}  // namespace amlm
