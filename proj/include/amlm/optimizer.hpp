#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "amlm/model.hpp"
#include "amlm/serialize.hpp"

namespace amlm {

// Linear warmup from zero to peak over ceil(warmup_ratio * total) steps,
// then cosine decay to zero at total_steps.
double lr_at(int64_t step, int64_t total_steps, double peak, double warmup_ratio);

// Scales all gradients in place by clip/norm when the global L2 norm exceeds
// clip; clip <= 0 disables. Returns the pre-clip norm.
template <typename S>
double clip_global_norm(std::span<ParamBlockRef<S>> blocks, double clip);

struct AdamWConfig {
    double lr = 2e-3;  // peak rate
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double warmup_ratio = 0.01;
    int64_t total_steps = 1;
    double grad_clip = 1.0;
};

// Adaptive-moment optimizer with decoupled weight decay; decay touches only
// blocks flagged for it (matrices). Moment buffers are keyed by block order.
template <typename S>
class AdamW {
public:
    explicit AdamW(const AdamWConfig& cfg) : cfg_(cfg) {}

    // Clips, then applies one update with the scheduled rate. Returns the
    // learning rate used.
    double step(std::span<ParamBlockRef<S>> blocks);
    int64_t steps_done() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

    void write(LeWriter& out) const;
    void read_state(LeReader& in);

private:
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<S>> m_, v_;
};

using AdamWF = AdamW<float>;
using AdamWD = AdamW<double>;

}  // namespace amlm
