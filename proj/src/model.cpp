#include "amlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "amlm/errors.hpp"

namespace amlm {

namespace {

constexpr double kLnEps = 1e-5;

template <typename S>
void linear(const S* W, const S* b, const S* x, S* y, int32_t out, int32_t in) {
    for (int32_t o = 0; o < out; ++o) {
        S acc = b ? b[o] : S(0);
        const S* row = W + static_cast<size_t>(o) * in;
        for (int32_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// Accumulates dW, db, and dx for y = W x + b given dy.
template <typename S>
void linear_backward(const S* W, const S* x, const S* dy, S* dW, S* db, S* dx, int32_t out,
                     int32_t in) {
    for (int32_t o = 0; o < out; ++o) {
        S d = dy[o];
        if (db) db[o] += d;
        const S* row = W + static_cast<size_t>(o) * in;
        S* drow = dW + static_cast<size_t>(o) * in;
        for (int32_t i = 0; i < in; ++i) {
            drow[i] += d * x[i];
            if (dx) dx[i] += row[i] * d;
        }
    }
}

// Per-position normalization; caches xhat and rstd for the backward pass.
template <typename S>
void layer_norm(const S* x, const S* gain, const S* bias, S* y, S* xhat, S* rstd, int32_t L,
                int32_t D) {
    for (int32_t j = 0; j < L; ++j) {
        const S* xj = x + static_cast<size_t>(j) * D;
        S mean = 0;
        for (int32_t d = 0; d < D; ++d) mean += xj[d];
        mean /= S(D);
        S var = 0;
        for (int32_t d = 0; d < D; ++d) var += (xj[d] - mean) * (xj[d] - mean);
        var /= S(D);
        S r = S(1) / std::sqrt(var + S(kLnEps));
        rstd[j] = r;
        S* xh = xhat + static_cast<size_t>(j) * D;
        S* yj = y + static_cast<size_t>(j) * D;
        for (int32_t d = 0; d < D; ++d) {
            xh[d] = (xj[d] - mean) * r;
            yj[d] = gain[d] * xh[d] + bias[d];
        }
    }
}

template <typename S>
void layer_norm_backward(const S* xhat, const S* rstd, const S* gain, const S* dy, S* dgain,
                         S* dbias, S* dx, int32_t L, int32_t D) {
    for (int32_t j = 0; j < L; ++j) {
        const S* xh = xhat + static_cast<size_t>(j) * D;
        const S* dyj = dy + static_cast<size_t>(j) * D;
        S* dxj = dx + static_cast<size_t>(j) * D;
        S m1 = 0, m2 = 0;
        for (int32_t d = 0; d < D; ++d) {
            S dxh = dyj[d] * gain[d];
            m1 += dxh;
            m2 += dxh * xh[d];
            dgain[d] += dyj[d] * xh[d];
            dbias[d] += dyj[d];
        }
        m1 /= S(D);
        m2 /= S(D);
        for (int32_t d = 0; d < D; ++d) {
            S dxh = dyj[d] * gain[d];
            dxj[d] += rstd[j] * (dxh - m1 - xh[d] * m2);
        }
    }
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

template <typename S>
S gelu(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(kInvSqrt2)));
}

template <typename S>
S gelu_grad(S x) {
    S cdf = S(0.5) * (S(1) + std::erf(x * S(kInvSqrt2)));
    S pdf = std::exp(S(-0.5) * x * x) * S(kInvSqrt2Pi);
    return cdf + x * pdf;
}

}  // namespace

void ToyModelConfig::validate() const {
    if (d_model < 1 || n_heads < 1 || n_layers < 0 || max_len < 1 || d_ff < 0) {
        throw ValidationError("model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ValidationError("d_model (" + std::to_string(d_model) +
                              ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw ValidationError("dropout must be in [0, 1)");
    }
}

template <typename S>
MlmModel<S>::MlmModel(const ToyModelConfig& cfg, int32_t vocab_size, uint64_t seed)
    : cfg_(cfg), vocab_size_(vocab_size) {
    cfg_.validate();
    if (vocab_size < 1) throw ValidationError("vocab_size must be positive");
    allocate();
    init_params(seed);
    build_positional();
}

template <typename S>
void MlmModel<S>::allocate() {
    size_t V = static_cast<size_t>(vocab_size_);
    size_t D = static_cast<size_t>(cfg_.d_model);
    size_t F = static_cast<size_t>(cfg_.ff_dim());
    tok_emb_.resize(V * D);
    if (cfg_.use_nhot) nhot_proj_.resize(V * D);
    layers_.resize(static_cast<size_t>(cfg_.n_layers));
    for (Layer& l : layers_) {
        l.wq.resize(D * D);
        l.bq.resize(D);
        l.wk.resize(D * D);
        l.bk.resize(D);
        l.wv.resize(D * D);
        l.bv.resize(D);
        l.wo.resize(D * D);
        l.bo.resize(D);
        l.ln1_g.resize(D);
        l.ln1_b.resize(D);
        l.w1.resize(F * D);
        l.b1.resize(F);
        l.w2.resize(D * F);
        l.b2.resize(D);
        l.ln2_g.resize(D);
        l.ln2_b.resize(D);
    }
    final_g_.resize(D);
    final_b_.resize(D);
    if (!cfg_.tie_embeddings) out_w_.resize(V * D);
    out_b_.resize(V);
}

template <typename S>
std::vector<ParamBlockRef<S>> MlmModel<S>::blocks() {
    std::vector<ParamBlockRef<S>> out;
    int64_t V = vocab_size_, D = cfg_.d_model, F = cfg_.ff_dim();
    auto add = [&](std::string name, Param& p, std::vector<int64_t> shape) {
        out.push_back({std::move(name), &p.v, &p.g, shape, shape.size() >= 2});
    };
    add("token_embedding", tok_emb_, {V, D});
    if (cfg_.use_nhot) add("nhot_projection", nhot_proj_, {V, D});
    for (size_t i = 0; i < layers_.size(); ++i) {
        std::string p = "layer" + std::to_string(i) + ".";
        Layer& l = layers_[i];
        add(p + "attn_wq", l.wq, {D, D});
        add(p + "attn_bq", l.bq, {D});
        add(p + "attn_wk", l.wk, {D, D});
        add(p + "attn_bk", l.bk, {D});
        add(p + "attn_wv", l.wv, {D, D});
        add(p + "attn_bv", l.bv, {D});
        add(p + "attn_wo", l.wo, {D, D});
        add(p + "attn_bo", l.bo, {D});
        add(p + "ln1_gain", l.ln1_g, {D});
        add(p + "ln1_bias", l.ln1_b, {D});
        add(p + "ff_w1", l.w1, {F, D});
        add(p + "ff_b1", l.b1, {F});
        add(p + "ff_w2", l.w2, {D, F});
        add(p + "ff_b2", l.b2, {D});
        add(p + "ln2_gain", l.ln2_g, {D});
        add(p + "ln2_bias", l.ln2_b, {D});
    }
    add("final_ln_gain", final_g_, {D});
    add("final_ln_bias", final_b_, {D});
    if (!cfg_.tie_embeddings) add("output_weight", out_w_, {V, D});
    add("output_bias", out_b_, {V});
    return out;
}

template <typename S>
void MlmModel<S>::init_params(uint64_t seed) {
    SplitMix64 rng = SplitMix64::stream(seed, "init");
    for (auto& b : blocks()) {
        if (b.shape.size() >= 2) {
            for (S& v : *b.value) v = S(0.02 * rng.next_gaussian());
        } else if (b.name.ends_with("gain")) {
            std::fill(b.value->begin(), b.value->end(), S(1));
        } else {
            std::fill(b.value->begin(), b.value->end(), S(0));
        }
    }
}

template <typename S>
void MlmModel<S>::build_positional() {
    int32_t D = cfg_.d_model;
    pos_enc_.assign(static_cast<size_t>(cfg_.max_len) * D, S(0));
    for (int32_t j = 0; j < cfg_.max_len; ++j) {
        for (int32_t d = 0; d < D; d += 2) {
            double freq = std::pow(10000.0, -static_cast<double>(d) / D);
            pos_enc_[static_cast<size_t>(j) * D + d] = S(std::sin(j * freq));
            if (d + 1 < D) pos_enc_[static_cast<size_t>(j) * D + d + 1] = S(std::cos(j * freq));
        }
    }
}

template <typename S>
void MlmModel<S>::zero_grads() {
    for (auto& b : blocks()) std::fill(b.grad->begin(), b.grad->end(), S(0));
}

template <typename S>
BatchOutcome MlmModel<S>::forward(std::span<const MaskedBatchItem> batch, const NHotTable* nhot,
                                  bool train, SplitMix64* dropout_rng) {
    const int32_t D = cfg_.d_model, H = cfg_.n_heads, F = cfg_.ff_dim(), V = vocab_size_;
    const int32_t dh = D / H;
    const S att_scale = S(1) / std::sqrt(S(dh));
    const bool drop_on = train && cfg_.dropout > 0.0;
    if (cfg_.use_nhot && nhot == nullptr) {
        throw ValidationError("model uses n-hot features but no table was provided");
    }
    if (drop_on && dropout_rng == nullptr) {
        throw ValidationError("training with dropout requires an rng");
    }

    auto fill_drop = [&](std::vector<S>& m, size_t n) {
        m.assign(n, S(1));
        if (drop_on) {
            S keep_inv = S(1.0 / (1.0 - cfg_.dropout));
            for (S& e : m) e = dropout_rng->next_double() < cfg_.dropout ? S(0) : keep_inv;
        }
    };

    cache_.clear();
    cache_.resize(batch.size());
    cached_nhot_ = nhot;
    last_logits_.clear();
    last_probs_.clear();
    total_masked_ = 0;
    for (const auto& it : batch) total_masked_ += static_cast<int64_t>(it.masked_positions.size());

    BatchOutcome result;
    double loss_sum = 0.0;

    for (size_t bi = 0; bi < batch.size(); ++bi) {
        const MaskedBatchItem& it = batch[bi];
        ItemCache& c = cache_[bi];
        c.item = &it;
        const int32_t L = static_cast<int32_t>(it.input_ids.size());
        c.L = L;
        if (L == 0) continue;
        if (L > cfg_.max_len) {
            throw ValidationError("sequence of length " + std::to_string(L) +
                                  " exceeds max_len " + std::to_string(cfg_.max_len));
        }
        if (it.original_ids.size() != it.input_ids.size()) {
            throw ValidationError("input/original id length mismatch");
        }

        size_t LD = static_cast<size_t>(L) * D;
        std::vector<S> x(LD);
        for (int32_t j = 0; j < L; ++j) {
            TokenId id = it.input_ids[j];
            if (id < 0 || id >= V) throw ValidationError("token id out of range in batch");
            const S* e = tok_emb_.v.data() + static_cast<size_t>(id) * D;
            const S* pe = pos_enc_.data() + static_cast<size_t>(j) * D;
            S* xj = x.data() + static_cast<size_t>(j) * D;
            for (int32_t d = 0; d < D; ++d) xj[d] = e[d] + pe[d];
            if (cfg_.use_nhot) {
                auto feats = nhot->row(id);
                if (!feats.empty()) {
                    S norm = cfg_.nhot_normalize ? S(1.0 / static_cast<double>(feats.size()))
                                                 : S(1);
                    for (TokenId f : feats) {
                        const S* pr = nhot_proj_.v.data() + static_cast<size_t>(f) * D;
                        for (int32_t d = 0; d < D; ++d) xj[d] += norm * pr[d];
                    }
                }
            }
        }
        fill_drop(c.drop0, LD);
        for (size_t i = 0; i < LD; ++i) x[i] *= c.drop0[i];

        c.layers.resize(layers_.size());
        std::vector<S> h(LD), h2(LD);
        for (size_t li = 0; li < layers_.size(); ++li) {
            Layer& l = layers_[li];
            LayerCache& lc = c.layers[li];
            lc.x_in = x;
            lc.ln1_xhat.resize(LD);
            lc.ln1_rstd.resize(static_cast<size_t>(L));
            layer_norm(x.data(), l.ln1_g.v.data(), l.ln1_b.v.data(), h.data(),
                       lc.ln1_xhat.data(), lc.ln1_rstd.data(), L, D);

            lc.q.resize(LD);
            lc.k.resize(LD);
            lc.v.resize(LD);
            for (int32_t j = 0; j < L; ++j) {
                const S* hj = h.data() + static_cast<size_t>(j) * D;
                linear(l.wq.v.data(), l.bq.v.data(), hj, lc.q.data() + static_cast<size_t>(j) * D,
                       D, D);
                linear(l.wk.v.data(), l.bk.v.data(), hj, lc.k.data() + static_cast<size_t>(j) * D,
                       D, D);
                linear(l.wv.v.data(), l.bv.v.data(), hj, lc.v.data() + static_cast<size_t>(j) * D,
                       D, D);
            }

            lc.probs.assign(static_cast<size_t>(H) * L * L, S(0));
            lc.concat.assign(LD, S(0));
            std::vector<S> scores(static_cast<size_t>(L));
            for (int32_t hd = 0; hd < H; ++hd) {
                int32_t off = hd * dh;
                for (int32_t j = 0; j < L; ++j) {
                    const S* qj = lc.q.data() + static_cast<size_t>(j) * D + off;
                    S mx = std::numeric_limits<S>::lowest();
                    for (int32_t k = 0; k < L; ++k) {
                        const S* kk = lc.k.data() + static_cast<size_t>(k) * D + off;
                        S s = 0;
                        for (int32_t d = 0; d < dh; ++d) s += qj[d] * kk[d];
                        s *= att_scale;
                        scores[static_cast<size_t>(k)] = s;
                        mx = std::max(mx, s);
                    }
                    S denom = 0;
                    S* pr = lc.probs.data() + (static_cast<size_t>(hd) * L + j) * L;
                    for (int32_t k = 0; k < L; ++k) {
                        S e = std::exp(scores[static_cast<size_t>(k)] - mx);
                        pr[k] = e;
                        denom += e;
                    }
                    S inv = S(1) / denom;
                    S* oj = lc.concat.data() + static_cast<size_t>(j) * D + off;
                    for (int32_t k = 0; k < L; ++k) {
                        pr[k] *= inv;
                        const S* vk = lc.v.data() + static_cast<size_t>(k) * D + off;
                        for (int32_t d = 0; d < dh; ++d) oj[d] += pr[k] * vk[d];
                    }
                }
            }

            fill_drop(lc.drop1, LD);
            std::vector<S> proj(static_cast<size_t>(D));
            for (int32_t j = 0; j < L; ++j) {
                linear(l.wo.v.data(), l.bo.v.data(),
                       lc.concat.data() + static_cast<size_t>(j) * D, proj.data(), D, D);
                S* xj = x.data() + static_cast<size_t>(j) * D;
                const S* dm = lc.drop1.data() + static_cast<size_t>(j) * D;
                for (int32_t d = 0; d < D; ++d) xj[d] += dm[d] * proj[d];
            }

            lc.x_mid = x;
            lc.ln2_xhat.resize(LD);
            lc.ln2_rstd.resize(static_cast<size_t>(L));
            layer_norm(x.data(), l.ln2_g.v.data(), l.ln2_b.v.data(), h2.data(),
                       lc.ln2_xhat.data(), lc.ln2_rstd.data(), L, D);

            lc.ff_pre.resize(static_cast<size_t>(L) * F);
            lc.ff_act.resize(static_cast<size_t>(L) * F);
            fill_drop(lc.drop2, LD);
            std::vector<S> ff_out(static_cast<size_t>(D));
            for (int32_t j = 0; j < L; ++j) {
                S* pre = lc.ff_pre.data() + static_cast<size_t>(j) * F;
                S* act = lc.ff_act.data() + static_cast<size_t>(j) * F;
                linear(l.w1.v.data(), l.b1.v.data(), h2.data() + static_cast<size_t>(j) * D, pre,
                       F, D);
                for (int32_t f = 0; f < F; ++f) act[f] = gelu(pre[f]);
                linear(l.w2.v.data(), l.b2.v.data(), act, ff_out.data(), D, F);
                S* xj = x.data() + static_cast<size_t>(j) * D;
                const S* dm = lc.drop2.data() + static_cast<size_t>(j) * D;
                for (int32_t d = 0; d < D; ++d) xj[d] += dm[d] * ff_out[d];
            }
        }

        c.x_last = x;
        c.final_xhat.resize(LD);
        c.final_rstd.resize(static_cast<size_t>(L));
        c.y.resize(LD);
        layer_norm(x.data(), final_g_.v.data(), final_b_.v.data(), c.y.data(),
                   c.final_xhat.data(), c.final_rstd.data(), L, D);
        for (S v : c.y) {
            if (!std::isfinite(static_cast<double>(v))) {
                throw DivergenceError(-1, "non-finite activations in forward pass");
            }
        }

        const S* W_out = cfg_.tie_embeddings ? tok_emb_.v.data() : out_w_.v.data();
        for (int32_t pos : it.masked_positions) {
            if (pos < 0 || pos >= L) throw ValidationError("masked position out of range");
            TokenId target = it.original_ids[static_cast<size_t>(pos)];
            if (target < 0 || target >= V) throw ValidationError("target id out of range");

            std::vector<S> z(static_cast<size_t>(V));
            linear(W_out, out_b_.v.data(), c.y.data() + static_cast<size_t>(pos) * D, z.data(), V,
                   D);

            S mx = z[0];
            TokenId arg = 0;
            for (int32_t v = 1; v < V; ++v) {
                if (z[static_cast<size_t>(v)] > mx) {  // ties keep the lowest id
                    mx = z[static_cast<size_t>(v)];
                    arg = v;
                }
            }
            S denom = 0;
            std::vector<S> p(static_cast<size_t>(V));
            for (int32_t v = 0; v < V; ++v) {
                S e = std::exp(z[static_cast<size_t>(v)] - mx);
                p[static_cast<size_t>(v)] = e;
                denom += e;
            }
            S inv = S(1) / denom;
            for (S& e : p) e *= inv;
            S loss = std::log(denom) + mx - z[static_cast<size_t>(target)];
            if (!std::isfinite(static_cast<double>(loss))) {
                throw DivergenceError(-1, "non-finite loss in forward pass");
            }

            result.outcomes.push_back(
                {target, arg == target, static_cast<double>(loss)});
            loss_sum += static_cast<double>(loss);
            last_logits_.push_back(std::move(z));
            last_probs_.push_back(std::move(p));
        }
    }

    result.mean_loss = total_masked_ > 0 ? loss_sum / static_cast<double>(total_masked_) : 0.0;
    return result;
}

template <typename S>
void MlmModel<S>::backward() {
    zero_grads();
    if (total_masked_ == 0) return;
    const int32_t D = cfg_.d_model, H = cfg_.n_heads, F = cfg_.ff_dim(), V = vocab_size_;
    const int32_t dh = D / H;
    const S att_scale = S(1) / std::sqrt(S(dh));
    const S inv_m = S(1) / S(static_cast<double>(total_masked_));

    size_t logit_idx = 0;
    for (ItemCache& c : cache_) {
        const MaskedBatchItem& it = *c.item;
        const int32_t L = c.L;
        if (L == 0) continue;
        size_t LD = static_cast<size_t>(L) * D;

        const S* W_out = cfg_.tie_embeddings ? tok_emb_.v.data() : out_w_.v.data();
        S* gW_out = cfg_.tie_embeddings ? tok_emb_.g.data() : out_w_.g.data();

        std::vector<S> dy(LD, S(0));
        std::vector<S> dz(static_cast<size_t>(V));
        for (int32_t pos : it.masked_positions) {
            const std::vector<S>& p = last_probs_[logit_idx++];
            TokenId target = it.original_ids[static_cast<size_t>(pos)];
            for (int32_t v = 0; v < V; ++v) dz[static_cast<size_t>(v)] = p[static_cast<size_t>(v)] * inv_m;
            dz[static_cast<size_t>(target)] -= inv_m;
            linear_backward(W_out, c.y.data() + static_cast<size_t>(pos) * D, dz.data(), gW_out,
                            out_b_.g.data(), dy.data() + static_cast<size_t>(pos) * D, V, D);
        }

        std::vector<S> dx(LD, S(0));
        layer_norm_backward(c.final_xhat.data(), c.final_rstd.data(), final_g_.v.data(),
                            dy.data(), final_g_.g.data(), final_b_.g.data(), dx.data(), L, D);

        std::vector<S> d_branch(LD), d_h(LD), d_q(LD), d_k(LD), d_v(LD), d_concat(LD);
        std::vector<S> h(LD), d_act(static_cast<size_t>(F)), d_pre(static_cast<size_t>(F));
        for (size_t li = layers_.size(); li-- > 0;) {
            Layer& l = layers_[li];
            LayerCache& lc = c.layers[li];

            // feed-forward branch: x_out = x_mid + drop2 .* FF(LN2(x_mid))
            std::fill(d_h.begin(), d_h.end(), S(0));
            for (int32_t j = 0; j < L; ++j) {
                const S* dm = lc.drop2.data() + static_cast<size_t>(j) * D;
                const S* dxj = dx.data() + static_cast<size_t>(j) * D;
                S* db = d_branch.data() + static_cast<size_t>(j) * D;
                for (int32_t d = 0; d < D; ++d) db[d] = dxj[d] * dm[d];
            }
            // recompute h2 = ln2_gain .* xhat + ln2_bias
            for (int32_t j = 0; j < L; ++j) {
                const S* xh = lc.ln2_xhat.data() + static_cast<size_t>(j) * D;
                S* hj = h.data() + static_cast<size_t>(j) * D;
                for (int32_t d = 0; d < D; ++d) hj[d] = l.ln2_g.v[static_cast<size_t>(d)] * xh[d] +
                                                        l.ln2_b.v[static_cast<size_t>(d)];
            }
            for (int32_t j = 0; j < L; ++j) {
                const S* pre = lc.ff_pre.data() + static_cast<size_t>(j) * F;
                const S* act = lc.ff_act.data() + static_cast<size_t>(j) * F;
                std::fill(d_act.begin(), d_act.end(), S(0));
                linear_backward(l.w2.v.data(), act, d_branch.data() + static_cast<size_t>(j) * D,
                                l.w2.g.data(), l.b2.g.data(), d_act.data(), D, F);
                for (int32_t f = 0; f < F; ++f) d_pre[static_cast<size_t>(f)] =
                    d_act[static_cast<size_t>(f)] * gelu_grad(pre[f]);
                linear_backward(l.w1.v.data(), h.data() + static_cast<size_t>(j) * D,
                                d_pre.data(), l.w1.g.data(), l.b1.g.data(),
                                d_h.data() + static_cast<size_t>(j) * D, F, D);
            }
            layer_norm_backward(lc.ln2_xhat.data(), lc.ln2_rstd.data(), l.ln2_g.v.data(),
                                d_h.data(), l.ln2_g.g.data(), l.ln2_b.g.data(), dx.data(), L, D);

            // attention branch: x_mid = x_in + drop1 .* (Wo * concat + bo)
            std::fill(d_concat.begin(), d_concat.end(), S(0));
            for (int32_t j = 0; j < L; ++j) {
                const S* dm = lc.drop1.data() + static_cast<size_t>(j) * D;
                const S* dxj = dx.data() + static_cast<size_t>(j) * D;
                S* db = d_branch.data() + static_cast<size_t>(j) * D;
                for (int32_t d = 0; d < D; ++d) db[d] = dxj[d] * dm[d];
            }
            for (int32_t j = 0; j < L; ++j) {
                linear_backward(l.wo.v.data(), lc.concat.data() + static_cast<size_t>(j) * D,
                                d_branch.data() + static_cast<size_t>(j) * D, l.wo.g.data(),
                                l.bo.g.data(), d_concat.data() + static_cast<size_t>(j) * D, D,
                                D);
            }

            std::fill(d_q.begin(), d_q.end(), S(0));
            std::fill(d_k.begin(), d_k.end(), S(0));
            std::fill(d_v.begin(), d_v.end(), S(0));
            std::vector<S> d_probs(static_cast<size_t>(L));
            for (int32_t hd = 0; hd < H; ++hd) {
                int32_t off = hd * dh;
                for (int32_t j = 0; j < L; ++j) {
                    const S* pr = lc.probs.data() + (static_cast<size_t>(hd) * L + j) * L;
                    const S* dao = d_concat.data() + static_cast<size_t>(j) * D + off;
                    S dot_pd = 0;
                    for (int32_t k = 0; k < L; ++k) {
                        const S* vk = lc.v.data() + static_cast<size_t>(k) * D + off;
                        S dp = 0;
                        for (int32_t d = 0; d < dh; ++d) dp += dao[d] * vk[d];
                        d_probs[static_cast<size_t>(k)] = dp;
                        dot_pd += pr[k] * dp;
                        S* dvk = d_v.data() + static_cast<size_t>(k) * D + off;
                        for (int32_t d = 0; d < dh; ++d) dvk[d] += pr[k] * dao[d];
                    }
                    const S* qj = lc.q.data() + static_cast<size_t>(j) * D + off;
                    S* dqj = d_q.data() + static_cast<size_t>(j) * D + off;
                    for (int32_t k = 0; k < L; ++k) {
                        S ds = pr[k] * (d_probs[static_cast<size_t>(k)] - dot_pd) * att_scale;
                        const S* kk = lc.k.data() + static_cast<size_t>(k) * D + off;
                        S* dkk = d_k.data() + static_cast<size_t>(k) * D + off;
                        for (int32_t d = 0; d < dh; ++d) {
                            dqj[d] += ds * kk[d];
                            dkk[d] += ds * qj[d];
                        }
                    }
                }
            }

            // recompute h = ln1_gain .* xhat + ln1_bias
            for (int32_t j = 0; j < L; ++j) {
                const S* xh = lc.ln1_xhat.data() + static_cast<size_t>(j) * D;
                S* hj = h.data() + static_cast<size_t>(j) * D;
                for (int32_t d = 0; d < D; ++d) hj[d] = l.ln1_g.v[static_cast<size_t>(d)] * xh[d] +
                                                        l.ln1_b.v[static_cast<size_t>(d)];
            }
            std::fill(d_h.begin(), d_h.end(), S(0));
            for (int32_t j = 0; j < L; ++j) {
                const S* hj = h.data() + static_cast<size_t>(j) * D;
                S* dhj = d_h.data() + static_cast<size_t>(j) * D;
                linear_backward(l.wq.v.data(), hj, d_q.data() + static_cast<size_t>(j) * D,
                                l.wq.g.data(), l.bq.g.data(), dhj, D, D);
                linear_backward(l.wk.v.data(), hj, d_k.data() + static_cast<size_t>(j) * D,
                                l.wk.g.data(), l.bk.g.data(), dhj, D, D);
                linear_backward(l.wv.v.data(), hj, d_v.data() + static_cast<size_t>(j) * D,
                                l.wv.g.data(), l.bv.g.data(), dhj, D, D);
            }
            layer_norm_backward(lc.ln1_xhat.data(), lc.ln1_rstd.data(), l.ln1_g.v.data(),
                                d_h.data(), l.ln1_g.g.data(), l.ln1_b.g.data(), dx.data(), L, D);
        }

        // embedding backward through the input dropout
        for (int32_t j = 0; j < L; ++j) {
            TokenId id = it.input_ids[static_cast<size_t>(j)];
            const S* dm = c.drop0.data() + static_cast<size_t>(j) * D;
            const S* dxj = dx.data() + static_cast<size_t>(j) * D;
            S* ge = tok_emb_.g.data() + static_cast<size_t>(id) * D;
            for (int32_t d = 0; d < D; ++d) ge[d] += dxj[d] * dm[d];
            if (cfg_.use_nhot) {
                auto feats = cached_nhot_->row(id);
                if (!feats.empty()) {
                    S norm = cfg_.nhot_normalize ? S(1.0 / static_cast<double>(feats.size()))
                                                 : S(1);
                    for (TokenId f : feats) {
                        S* gp = nhot_proj_.g.data() + static_cast<size_t>(f) * D;
                        for (int32_t d = 0; d < D; ++d) gp[d] += norm * dxj[d] * dm[d];
                    }
                }
            }
        }
    }
}

static constexpr std::string_view kModelMagic = "AMLMMDL1";
static constexpr uint32_t kModelVersion = 1;

template <typename S>
void MlmModel<S>::write(LeWriter& out) const {
    out.bytes(kModelMagic.data(), kModelMagic.size());
    out.u32(kModelVersion);
    out.i32(cfg_.d_model);
    out.i32(cfg_.n_layers);
    out.i32(cfg_.n_heads);
    out.i32(cfg_.d_ff);
    out.i32(cfg_.max_len);
    out.f64(cfg_.dropout);
    out.u8(cfg_.use_nhot ? 1 : 0);
    out.u8(cfg_.nhot_normalize ? 1 : 0);
    out.u8(cfg_.tie_embeddings ? 1 : 0);
    out.i32(vocab_size_);
    out.u8(static_cast<uint8_t>(sizeof(S)));
    auto bl = const_cast<MlmModel*>(this)->blocks();
    out.u32(static_cast<uint32_t>(bl.size()));
    for (const auto& b : bl) {
        out.str(b.name);
        out.u32(static_cast<uint32_t>(b.shape.size()));
        for (int64_t d : b.shape) out.i64(d);
        if constexpr (sizeof(S) == 4) {
            out.f32_array(*b.value);
        } else {
            out.f64_array(*b.value);
        }
    }
}

template <typename S>
MlmModel<S> MlmModel<S>::read(LeReader& in) {
    in.expect_magic(kModelMagic, "model checkpoint");
    uint32_t version = in.u32();
    if (version != kModelVersion) {
        throw FormatError("unsupported model checkpoint version " + std::to_string(version) +
                          " in '" + in.path() + "'");
    }
    MlmModel m;
    m.cfg_.d_model = in.i32();
    m.cfg_.n_layers = in.i32();
    m.cfg_.n_heads = in.i32();
    m.cfg_.d_ff = in.i32();
    m.cfg_.max_len = in.i32();
    m.cfg_.dropout = in.f64();
    m.cfg_.use_nhot = in.u8() != 0;
    m.cfg_.nhot_normalize = in.u8() != 0;
    m.cfg_.tie_embeddings = in.u8() != 0;
    m.vocab_size_ = in.i32();
    m.cfg_.validate();
    if (m.vocab_size_ < 1) throw FormatError("bad vocab size in model checkpoint");
    uint8_t ssize = in.u8();
    if (ssize != sizeof(S)) {
        throw FormatError("model checkpoint in '" + in.path() + "' stores " +
                          std::to_string(ssize) + "-byte scalars, expected " +
                          std::to_string(sizeof(S)));
    }
    m.allocate();
    m.build_positional();
    auto bl = m.blocks();
    uint32_t n = in.u32();
    if (n != bl.size()) {
        throw FormatError("model checkpoint block count mismatch in '" + in.path() + "'");
    }
    for (auto& b : bl) {
        std::string name = in.str();
        if (name != b.name) {
            throw FormatError("model checkpoint block '" + name + "' where '" + b.name +
                              "' was expected in '" + in.path() + "'");
        }
        uint32_t ndim = in.u32();
        std::vector<int64_t> shape(ndim);
        for (auto& d : shape) d = in.i64();
        if (shape != b.shape) {
            throw FormatError("shape mismatch for block '" + name + "' in '" + in.path() + "'");
        }
        if constexpr (sizeof(S) == 4) {
            *b.value = in.f32_array(b.value->size());
        } else {
            *b.value = in.f64_array(b.value->size());
        }
    }
    return m;
}

template <typename S>
void MlmModel<S>::save(const std::string& path) const {
    LeWriter out(path);
    write(out);
    out.close();
}

template <typename S>
MlmModel<S> MlmModel<S>::load(const std::string& path) {
    LeReader in(path);
    return read(in);
}

template class MlmModel<float>;
template class MlmModel<double>;

}  // namespace amlm
