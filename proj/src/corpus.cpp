#include "amlm/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

#include "amlm/errors.hpp"

namespace amlm {

std::vector<TokenSequence> load_text_corpus(const std::string& path, const Tokenizer& tok) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open corpus file '" + path + "'");
    }
    std::vector<TokenSequence> docs;
    std::string line;
    int64_t doc_id = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        docs.push_back({tok.tokenize(line), doc_id});
        ++doc_id;
    }
    return docs;
}

std::vector<TokenSequence> load_id_corpus(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open corpus file '" + path + "'");
    }
    std::vector<TokenSequence> docs;
    std::string line;
    int64_t doc_id = 0;
    while (std::getline(in, line)) {
        TokenSequence seq;
        seq.doc_id = doc_id;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p < end) {
            while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
            if (p >= end) break;
            int32_t id = 0;
            auto [next, ec] = std::from_chars(p, end, id);
            if (ec != std::errc{} || id < 0) {
                throw ValidationError("bad token id on line " + std::to_string(doc_id + 1) +
                                      " of '" + path + "'");
            }
            if (id >= vocab.size()) {
                throw ValidationError("token id " + std::to_string(id) + " on line " +
                                      std::to_string(doc_id + 1) + " exceeds vocab size " +
                                      std::to_string(vocab.size()));
            }
            if (id == vocab.pad_id() || id == vocab.mask_id()) {
                throw ValidationError("PAD/MASK id " + std::to_string(id) +
                                      " in raw corpus, line " + std::to_string(doc_id + 1));
            }
            seq.ids.push_back(id);
            p = next;
        }
        docs.push_back(std::move(seq));
        ++doc_id;
    }
    return docs;
}

std::vector<TokenSequence> chunk_sequences(std::span<const TokenSequence> docs, int32_t seq_len) {
    if (seq_len < 1) {
        throw ValidationError("seq_len must be >= 1");
    }
    std::vector<TokenSequence> chunks;
    for (const TokenSequence& doc : docs) {
        size_t n = doc.ids.size();
        for (size_t start = 0; start < n; start += static_cast<size_t>(seq_len)) {
            size_t len = std::min(n - start, static_cast<size_t>(seq_len));
            TokenSequence chunk;
            chunk.doc_id = doc.doc_id;
            chunk.ids.assign(doc.ids.begin() + static_cast<ptrdiff_t>(start),
                             doc.ids.begin() + static_cast<ptrdiff_t>(start + len));
            chunks.push_back(std::move(chunk));
        }
    }
    return chunks;
}

FrequencyRanking compute_frequency_ranking(std::span<const TokenSequence> corpus,
                                           int32_t vocab_size) {
    FrequencyRanking r;
    r.counts.assign(static_cast<size_t>(vocab_size), 0);
    for (const TokenSequence& seq : corpus) {
        for (TokenId id : seq.ids) {
            r.counts[static_cast<size_t>(id)] += 1;
        }
    }
    r.by_rank.resize(static_cast<size_t>(vocab_size));
    std::iota(r.by_rank.begin(), r.by_rank.end(), 0);
    std::sort(r.by_rank.begin(), r.by_rank.end(), [&](TokenId a, TokenId b) {
        int64_t ca = r.counts[static_cast<size_t>(a)];
        int64_t cb = r.counts[static_cast<size_t>(b)];
        if (ca != cb) return ca > cb;
        return a < b;
    });
    r.rank_of.resize(static_cast<size_t>(vocab_size));
    for (int32_t rank = 0; rank < vocab_size; ++rank) {
        r.rank_of[static_cast<size_t>(r.by_rank[static_cast<size_t>(rank)])] = rank;
    }
    return r;
}

}  // namespace amlm
