#include "amlm/tokenizer.hpp"

#include <algorithm>

namespace amlm {

namespace {

// Codepoints for bytes that do not form valid UTF-8 get mapped above the
// Unicode range, one sentinel per byte value, so they only ever match the
// identical raw byte in a vocabulary entry.
constexpr char32_t kInvalidBase = 0x40000000;

struct DecodedChar {
    char32_t cp;
    int32_t offset;  // byte offset into the source string
    int32_t nbytes;
};

bool is_cont(unsigned char b) { return (b & 0xC0) == 0x80; }

// Strict UTF-8 decode; any malformed unit decodes one byte to a sentinel.
std::vector<DecodedChar> decode_permissive(std::string_view s) {
    std::vector<DecodedChar> out;
    out.reserve(s.size());
    size_t i = 0;
    const size_t n = s.size();
    while (i < n) {
        unsigned char b0 = static_cast<unsigned char>(s[i]);
        char32_t cp = 0;
        int len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xE0) == 0xC0 && i + 1 < n && is_cont(s[i + 1])) {
            cp = (char32_t(b0 & 0x1F) << 6) | char32_t(s[i + 1] & 0x3F);
            len = cp >= 0x80 ? 2 : 0;
        } else if ((b0 & 0xF0) == 0xE0 && i + 2 < n && is_cont(s[i + 1]) && is_cont(s[i + 2])) {
            cp = (char32_t(b0 & 0x0F) << 12) | (char32_t(s[i + 1] & 0x3F) << 6) |
                 char32_t(s[i + 2] & 0x3F);
            len = (cp >= 0x800 && !(cp >= 0xD800 && cp <= 0xDFFF)) ? 3 : 0;
        } else if ((b0 & 0xF8) == 0xF0 && i + 3 < n && is_cont(s[i + 1]) && is_cont(s[i + 2]) &&
                   is_cont(s[i + 3])) {
            cp = (char32_t(b0 & 0x07) << 18) | (char32_t(s[i + 1] & 0x3F) << 12) |
                 (char32_t(s[i + 2] & 0x3F) << 6) | char32_t(s[i + 3] & 0x3F);
            len = (cp >= 0x10000 && cp <= 0x10FFFF) ? 4 : 0;
        }
        if (len == 0) {
            cp = kInvalidBase | b0;
            len = 1;
        }
        out.push_back({cp, static_cast<int32_t>(i), len});
        i += static_cast<size_t>(len);
    }
    return out;
}

std::u32string decode_to_u32(std::string_view s) {
    std::u32string out;
    for (const DecodedChar& c : decode_permissive(s)) {
        out.push_back(c.cp);
    }
    return out;
}

enum class CharSource : uint8_t { Synthetic, Space, Literal };

struct MatchChar {
    char32_t cp;
    CharSource src;
    int32_t offset;  // into the original text; unused for Synthetic
    int32_t nbytes;
};

}  // namespace

Tokenizer::Tokenizer(const Vocabulary& vocab) : vocab_(&vocab) {
    trie_.emplace_back();
    for (TokenId id = 0; id < vocab.size(); ++id) {
        // Special and byte-fallback spellings are control syntax, not text;
        // they never match raw input.
        if (vocab.is_special(id) || vocab.is_byte_fallback(id)) continue;
        insert(decode_to_u32(vocab.entry(id)), id);
    }
}

void Tokenizer::insert(std::u32string_view key, TokenId id) {
    int32_t node = 0;
    for (char32_t cp : key) {
        int32_t c = child(node, cp);
        if (c < 0) {
            c = static_cast<int32_t>(trie_.size());
            trie_[static_cast<size_t>(node)].next.emplace_back(cp, c);
            trie_.emplace_back();
        }
        node = c;
    }
    trie_[static_cast<size_t>(node)].token = id;
}

int32_t Tokenizer::child(int32_t node, char32_t cp) const {
    for (const auto& [c, idx] : trie_[static_cast<size_t>(node)].next) {
        if (c == cp) return idx;
    }
    return -1;
}

std::vector<TokenId> Tokenizer::tokenize(std::string_view text) const {
    std::vector<MatchChar> chars;
    chars.reserve(text.size() + 1);
    chars.push_back({kWordMarkerCp, CharSource::Synthetic, 0, 0});
    for (const DecodedChar& c : decode_permissive(text)) {
        if (c.cp == U' ') {
            chars.push_back({kWordMarkerCp, CharSource::Space, c.offset, c.nbytes});
        } else {
            chars.push_back({c.cp, CharSource::Literal, c.offset, c.nbytes});
        }
    }

    std::vector<TokenId> out;
    bool emitted = false;
    size_t i = 0;
    while (i < chars.size()) {
        TokenId best = -1;
        size_t best_len = 0;
        int32_t node = 0;
        for (size_t j = i; j < chars.size(); ++j) {
            const MatchChar& c = chars[j];
            // A literal "▁" in the text never matches a vocabulary "▁".
            if (c.cp == kWordMarkerCp && c.src == CharSource::Literal) break;
            // Before anything is emitted, a space marker cannot start a
            // match; only the synthetic marker may open a "▁..." entry.
            if (j == i && !emitted && c.src == CharSource::Space) break;
            node = child(node, c.cp);
            if (node < 0) break;
            if (trie_[static_cast<size_t>(node)].token >= 0) {
                best = trie_[static_cast<size_t>(node)].token;
                best_len = j - i + 1;
            }
        }
        if (best >= 0) {
            out.push_back(best);
            emitted = true;
            i += best_len;
        } else {
            const MatchChar& c = chars[i];
            switch (c.src) {
                case CharSource::Synthetic:
                    break;  // emits nothing
                case CharSource::Space:
                    out.push_back(vocab_->byte_id(' '));
                    emitted = true;
                    break;
                case CharSource::Literal:
                    for (int32_t k = 0; k < c.nbytes; ++k) {
                        out.push_back(vocab_->byte_id(
                            static_cast<uint8_t>(text[static_cast<size_t>(c.offset + k)])));
                    }
                    emitted = true;
                    break;
            }
            ++i;
        }
    }
    return out;
}

std::string Tokenizer::detokenize(std::span<const TokenId> ids) const {
    std::string out;
    bool first = true;
    for (TokenId id : ids) {
        if (vocab_->is_byte_fallback(id)) {
            out.push_back(static_cast<char>(vocab_->byte_value(id)));
            first = false;
            continue;
        }
        if (vocab_->is_special(id)) continue;
        std::string_view surf = vocab_->entry(id);
        // The first emitted token's leading "▁" is the synthetic word
        // marker: drop it. Every other "▁" was a space.
        if (first && surf.starts_with(kWordMarkerUtf8)) {
            surf.remove_prefix(kWordMarkerUtf8.size());
        }
        size_t pos = 0;
        while (pos < surf.size()) {
            size_t m = surf.find(kWordMarkerUtf8, pos);
            if (m == std::string_view::npos) {
                out.append(surf.substr(pos));
                break;
            }
            out.append(surf.substr(pos, m - pos));
            out.push_back(' ');
            pos = m + kWordMarkerUtf8.size();
        }
        first = false;
    }
    return out;
}

}  // namespace amlm
