#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace amlm {

using TokenId = int32_t;

enum class SpecialToken : int { Pad = 0, Unk = 1, Mask = 2, Bos = 3, Eos = 4 };

// Reserved spellings in vocab files.
inline constexpr std::string_view kPadSpelling = "<pad>";
inline constexpr std::string_view kUnkSpelling = "<unk>";
inline constexpr std::string_view kMaskSpelling = "<mask>";
inline constexpr std::string_view kBosSpelling = "<s>";
inline constexpr std::string_view kEosSpelling = "</s>";

// Word-boundary marker U+2581 as UTF-8 bytes.
inline constexpr std::string_view kWordMarkerUtf8 = "\xE2\x96\x81";
inline constexpr char32_t kWordMarkerCp = U'\x2581';

// Spelling of the byte-fallback entry for byte b, e.g. "<0x2E>".
std::string byte_fallback_spelling(uint8_t b);

// An immutable token inventory loaded from a one-token-per-line UTF-8 file.
// Ids are line numbers. The five special tokens and all 256 byte-fallback
// entries must be present; everything is validated at load time.
class Vocabulary {
public:
    static Vocabulary load(const std::string& path);
    static Vocabulary from_entries(std::vector<std::string> entries);

    int32_t size() const { return static_cast<int32_t>(entries_.size()); }
    const std::string& entry(TokenId id) const { return entries_.at(static_cast<size_t>(id)); }
    std::optional<TokenId> id_of(std::string_view spelling) const;

    TokenId special_id(SpecialToken which) const {
        return special_ids_[static_cast<size_t>(which)];
    }
    TokenId pad_id() const { return special_id(SpecialToken::Pad); }
    TokenId unk_id() const { return special_id(SpecialToken::Unk); }
    TokenId mask_id() const { return special_id(SpecialToken::Mask); }
    TokenId bos_id() const { return special_id(SpecialToken::Bos); }
    TokenId eos_id() const { return special_id(SpecialToken::Eos); }

    // True only for the five special tokens. Byte-fallback entries are
    // ordinary maskable tokens.
    bool is_special(TokenId id) const { return special_mask_[static_cast<size_t>(id)]; }

    TokenId byte_id(uint8_t b) const { return byte_ids_[b]; }
    bool is_byte_fallback(TokenId id) const { return byte_value_[static_cast<size_t>(id)] >= 0; }
    // Byte value of a byte-fallback token, -1 otherwise.
    int byte_value(TokenId id) const { return byte_value_[static_cast<size_t>(id)]; }

    // Every id except the five specials, ascending.
    const std::vector<TokenId>& non_special_ids() const { return non_special_ids_; }
    int32_t non_special_count() const { return static_cast<int32_t>(non_special_ids_.size()); }

private:
    Vocabulary() = default;
    void index_entries();  // throws ValidationError on any invariant violation

    std::vector<std::string> entries_;
    std::unordered_map<std::string, TokenId> index_;
    std::array<TokenId, 5> special_ids_{};
    std::array<TokenId, 256> byte_ids_{};
    std::vector<bool> special_mask_;
    std::vector<int16_t> byte_value_;
    std::vector<TokenId> non_special_ids_;
};

}  // namespace amlm
