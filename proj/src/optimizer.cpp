#include "amlm/optimizer.hpp"

#include <cmath>

#include "amlm/errors.hpp"

namespace amlm {

double lr_at(int64_t step, int64_t total_steps, double peak, double warmup_ratio) {
    if (total_steps < 1) total_steps = 1;
    int64_t warmup = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(warmup_ratio * static_cast<double>(total_steps))));
    if (step <= warmup) {
        return peak * static_cast<double>(step) / static_cast<double>(warmup);
    }
    if (total_steps <= warmup) return peak;
    double prog = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
    prog = std::min(1.0, std::max(0.0, prog));
    return peak * 0.5 * (1.0 + std::cos(prog * 3.14159265358979323846));
}

template <typename S>
double clip_global_norm(std::span<ParamBlockRef<S>> blocks, double clip) {
    double sq = 0.0;
    for (const auto& b : blocks) {
        for (S g : *b.grad) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    double norm = std::sqrt(sq);
    if (clip > 0.0 && norm > clip) {
        S scale = S(clip / norm);
        for (auto& b : blocks) {
            for (S& g : *b.grad) g *= scale;
        }
    }
    return norm;
}

template <typename S>
double AdamW<S>::step(std::span<ParamBlockRef<S>> blocks) {
    if (m_.empty()) {
        m_.resize(blocks.size());
        v_.resize(blocks.size());
        for (size_t i = 0; i < blocks.size(); ++i) {
            m_[i].assign(blocks[i].value->size(), S(0));
            v_[i].assign(blocks[i].value->size(), S(0));
        }
    }
    if (m_.size() != blocks.size()) {
        throw ValidationError("optimizer state does not match the parameter blocks");
    }

    clip_global_norm(blocks, cfg_.grad_clip);

    double lr = lr_at(t_, cfg_.total_steps, cfg_.lr, cfg_.warmup_ratio);
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_ + 1));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_ + 1));
    const S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2);

    for (size_t i = 0; i < blocks.size(); ++i) {
        auto& val = *blocks[i].value;
        auto& grad = *blocks[i].grad;
        if (m_[i].size() != val.size()) {
            throw ValidationError("optimizer moment size mismatch for block '" +
                                  blocks[i].name + "'");
        }
        const double decay = blocks[i].decay ? cfg_.weight_decay : 0.0;
        for (size_t e = 0; e < val.size(); ++e) {
            S g = grad[e];
            m_[i][e] = b1 * m_[i][e] + (S(1) - b1) * g;
            v_[i][e] = b2 * v_[i][e] + (S(1) - b2) * g * g;
            double mhat = static_cast<double>(m_[i][e]) / bc1;
            double vhat = static_cast<double>(v_[i][e]) / bc2;
            double upd = lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                               decay * static_cast<double>(val[e]));
            val[e] = S(static_cast<double>(val[e]) - upd);
        }
    }
    t_ += 1;
    return lr;
}

template <typename S>
void AdamW<S>::write(LeWriter& out) const {
    out.i64(t_);
    out.u32(static_cast<uint32_t>(m_.size()));
    for (size_t i = 0; i < m_.size(); ++i) {
        out.u64(m_[i].size());
        if constexpr (sizeof(S) == 4) {
            out.f32_array(m_[i]);
            out.f32_array(v_[i]);
        } else {
            out.f64_array(m_[i]);
            out.f64_array(v_[i]);
        }
    }
}

template <typename S>
void AdamW<S>::read_state(LeReader& in) {
    t_ = in.i64();
    uint32_t n = in.u32();
    m_.resize(n);
    v_.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        size_t len = in.u64();
        if constexpr (sizeof(S) == 4) {
            m_[i] = in.f32_array(len);
            v_[i] = in.f32_array(len);
        } else {
            m_[i] = in.f64_array(len);
            v_[i] = in.f64_array(len);
        }
    }
}

template double clip_global_norm<float>(std::span<ParamBlockRef<float>>, double);
template double clip_global_norm<double>(std::span<ParamBlockRef<double>>, double);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace amlm
