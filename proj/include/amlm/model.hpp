#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amlm/nhot.hpp"
#include "amlm/rng.hpp"
#include "amlm/scheduler.hpp"
#include "amlm/serialize.hpp"

namespace amlm {

struct ToyModelConfig {
    int32_t d_model = 32;
    int32_t n_layers = 2;
    int32_t n_heads = 2;
    int32_t d_ff = 0;     // 0 means 4 * d_model
    int32_t max_len = 512;
    double dropout = 0.1;
    bool use_nhot = false;
    bool nhot_normalize = false;  // divide n-hot features by their count
    bool tie_embeddings = true;

    int32_t ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
    void validate() const;  // throws ValidationError
};

// One sequence of a training batch: corrupted input, clean targets, and the
// positions the loss is computed at.
struct MaskedBatchItem {
    std::span<const TokenId> input_ids;
    std::span<const TokenId> original_ids;
    std::vector<int32_t> masked_positions;  // ascending
};

struct BatchOutcome {
    std::vector<PredictionOutcome> outcomes;  // one per masked position
    double mean_loss = 0.0;
};

template <typename S>
struct ParamBlockRef {
    std::string name;
    std::vector<S>* value;
    std::vector<S>* grad;
    std::vector<int64_t> shape;
    bool decay;  // weight decay applies (matrices only)
};

// Pre-norm transformer encoder for masked-token prediction, sized for a
// desk-scale run: token embeddings (optionally composed with a projected
// n-hot substring vector), fixed sinusoidal positions, n_layers of
// self-attention + GELU feed-forward, and a softmax head over the vocabulary
// evaluated only at masked positions, scored against the original ids.
//
// Templated on the scalar so training runs in float and gradient checks in
// double. forward() caches activations; backward() consumes the cache and
// accumulates exact gradients of the mean masked cross-entropy.
template <typename S>
class MlmModel {
public:
    MlmModel(const ToyModelConfig& cfg, int32_t vocab_size, uint64_t seed);

    // train=true applies dropout using draws from dropout_rng (required when
    // dropout > 0). Throws DivergenceError (step -1) on non-finite activations.
    BatchOutcome forward(std::span<const MaskedBatchItem> batch, const NHotTable* nhot,
                         bool train, SplitMix64* dropout_rng);
    void backward();  // gradients of the last forward; grads are zeroed first

    void zero_grads();
    std::vector<ParamBlockRef<S>> blocks();

    const ToyModelConfig& config() const { return cfg_; }
    int32_t vocab_size() const { return vocab_size_; }

    // logits/probabilities per masked position of the last forward,
    // item-major, positions ascending
    const std::vector<std::vector<S>>& last_logits() const { return last_logits_; }
    const std::vector<std::vector<S>>& last_probs() const { return last_probs_; }

    void write(LeWriter& out) const;
    static MlmModel read(LeReader& in);
    void save(const std::string& path) const;
    static MlmModel load(const std::string& path);

private:
    struct Param {
        std::vector<S> v, g;
        void resize(size_t n) {
            v.assign(n, S(0));
            g.assign(n, S(0));
        }
    };
    struct Layer {
        Param wq, bq, wk, bk, wv, bv, wo, bo;
        Param ln1_g, ln1_b, ln2_g, ln2_b;
        Param w1, b1, w2, b2;
    };
    struct LayerCache {
        std::vector<S> x_in, ln1_xhat, q, k, v, probs, concat, drop1;
        std::vector<S> x_mid, ln2_xhat, ff_pre, ff_act, drop2;
        std::vector<S> ln1_rstd, ln2_rstd;
    };
    struct ItemCache {
        const MaskedBatchItem* item = nullptr;
        int32_t L = 0;
        std::vector<S> drop0;
        std::vector<LayerCache> layers;
        std::vector<S> x_last, final_xhat, final_rstd, y;
    };

    MlmModel() = default;
    void allocate();
    void init_params(uint64_t seed);
    void build_positional();

    ToyModelConfig cfg_;
    int32_t vocab_size_ = 0;

    Param tok_emb_;    // [V, D]
    Param nhot_proj_;  // [V, D], only if use_nhot
    std::vector<Layer> layers_;
    Param final_g_, final_b_;
    Param out_w_;  // [V, D], only if not tied
    Param out_b_;  // [V]
    std::vector<S> pos_enc_;  // [max_len, D], fixed

    std::vector<ItemCache> cache_;
    const NHotTable* cached_nhot_ = nullptr;
    int64_t total_masked_ = 0;
    std::vector<std::vector<S>> last_logits_, last_probs_;
};

using MlmModelF = MlmModel<float>;
using MlmModelD = MlmModel<double>;

}  // namespace amlm
