#include "amlm/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "amlm/errors.hpp"

namespace amlm {

MaskMetric parse_metric(std::string_view name) {
    if (name == "regular") return MaskMetric::Regular;
    if (name == "hard") return MaskMetric::Hard;
    if (name == "soft") return MaskMetric::Soft;
    throw ValidationError("unknown metric '" + std::string(name) +
                          "' (expected regular, hard, or soft)");
}

std::string_view metric_name(MaskMetric m) {
    switch (m) {
        case MaskMetric::Regular: return "regular";
        case MaskMetric::Hard: return "hard";
        case MaskMetric::Soft: return "soft";
    }
    return "?";
}

void MaskScheduleConfig::validate() const {
    if (!(p_end > 0.0 && p_end <= p_start && p_start <= 1.0)) {
        throw ValidationError("require 0 < p_end <= p_start <= 1 (got p_start=" +
                              std::to_string(p_start) + ", p_end=" + std::to_string(p_end) + ")");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ValidationError("lambda must be in [0,1], got " + std::to_string(lambda));
    }
    if (total_steps < 1) throw ValidationError("total_steps must be >= 1");
    if (timestep_batches < 1) throw ValidationError("timestep_batches must be >= 1");
    if (mask_frac < 0.0 || random_frac < 0.0 || keep_frac < 0.0 ||
        std::fabs(mask_frac + random_frac + keep_frac - 1.0) > 1e-9) {
        throw ValidationError("mask_frac + random_frac + keep_frac must sum to 1");
    }
}

TokenStatsAccumulator::TokenStatsAccumulator(int32_t vocab_size)
    : correct(static_cast<size_t>(vocab_size), 0),
      total(static_cast<size_t>(vocab_size), 0),
      loss_sum(static_cast<size_t>(vocab_size), 0.0),
      loss_count(static_cast<size_t>(vocab_size), 0) {}

void TokenStatsAccumulator::reset() {
    std::fill(correct.begin(), correct.end(), 0);
    std::fill(total.begin(), total.end(), 0);
    std::fill(loss_sum.begin(), loss_sum.end(), 0.0);
    std::fill(loss_count.begin(), loss_count.end(), 0);
}

void TokenStatsAccumulator::merge(const TokenStatsAccumulator& other) {
    if (other.size() != size()) {
        throw ValidationError("cannot merge accumulators of different sizes");
    }
    for (size_t i = 0; i < total.size(); ++i) {
        correct[i] += other.correct[i];
        total[i] += other.total[i];
        loss_sum[i] += other.loss_sum[i];
        loss_count[i] += other.loss_count[i];
    }
}

MaskRng MaskRng::from_seed(uint64_t seed) {
    return {SplitMix64::stream(seed, "mask"), SplitMix64::stream(seed, "actions")};
}

MaskWeightTable init_weights(const MaskScheduleConfig& cfg, const Vocabulary& vocab) {
    cfg.validate();
    MaskWeightTable table;
    table.w.assign(static_cast<size_t>(vocab.size()), 0.0);
    for (TokenId id : vocab.non_special_ids()) {
        table.w[static_cast<size_t>(id)] = cfg.p_start;
    }
    table.t = 0;
    table.p_current = cfg.p_start;
    return table;
}

double scheduled_p(int64_t step, const MaskScheduleConfig& cfg) {
    if (step >= cfg.total_steps) return cfg.p_end;
    if (step < 0) return cfg.p_start;
    double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
    return cfg.p_start + (cfg.p_end - cfg.p_start) * frac;
}

void set_current_p(MaskWeightTable& table, const MaskScheduleConfig& cfg,
                   const Vocabulary& vocab, double p) {
    table.p_current = p;
    if (cfg.metric == MaskMetric::Regular) {
        for (TokenId id : vocab.non_special_ids()) {
            table.w[static_cast<size_t>(id)] = p;
        }
    }
}

void record_batch(TokenStatsAccumulator& acc, std::span<const PredictionOutcome> outcomes) {
    for (const PredictionOutcome& o : outcomes) {
        if (!std::isfinite(o.loss) || o.loss < 0.0) {
            std::fprintf(stderr, "warning: dropping outcome for token %d with loss %g\n",
                         o.token, o.loss);
            continue;
        }
        size_t i = static_cast<size_t>(o.token);
        acc.total[i] += 1;
        if (o.correct) acc.correct[i] += 1;
        acc.loss_sum[i] += o.loss;
        acc.loss_count[i] += 1;
    }
}

double hard_score(int64_t correct, int64_t total) {
    if (correct < 0 || total < 0 || correct > total) {
        throw ValidationError("corrupted accumulator: correct=" + std::to_string(correct) +
                              " total=" + std::to_string(total));
    }
    return (static_cast<double>(correct) + 0.5) / (static_cast<double>(total) + 1.0);
}

std::vector<std::pair<TokenId, double>> soft_scores(const TokenStatsAccumulator& acc) {
    std::vector<std::pair<TokenId, double>> mean;  // (id, mean loss) first
    for (int32_t id = 0; id < acc.size(); ++id) {
        size_t i = static_cast<size_t>(id);
        if (acc.loss_count[i] > 0) {
            mean.push_back({id, acc.loss_sum[i] / static_cast<double>(acc.loss_count[i])});
        }
    }
    if (mean.empty()) return mean;
    double lo = mean[0].second, hi = mean[0].second;
    for (const auto& [id, m] : mean) {
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    for (auto& [id, m] : mean) {
        m = (hi == lo) ? 0.5 : 1.0 - (m - lo) / (hi - lo);
    }
    return mean;
}

void update_weights(MaskWeightTable& table, TokenStatsAccumulator& acc,
                    const MaskScheduleConfig& cfg, const Vocabulary& vocab,
                    int64_t boundary_step) {
    double p_sample = scheduled_p(boundary_step, cfg);
    if (cfg.metric == MaskMetric::Regular) {
        set_current_p(table, cfg, vocab, p_sample);
    } else {
        double p_target = cfg.ema_tracks_schedule ? p_sample : cfg.p_end;
        auto apply = [&](TokenId id, double score) {
            size_t i = static_cast<size_t>(id);
            table.w[i] = cfg.lambda * table.w[i] + (1.0 - cfg.lambda) * p_target * (1.0 - score);
        };
        if (cfg.metric == MaskMetric::Hard) {
            for (TokenId id : vocab.non_special_ids()) {
                size_t i = static_cast<size_t>(id);
                if (acc.total[i] > 0) apply(id, hard_score(acc.correct[i], acc.total[i]));
            }
        } else {
            for (const auto& [id, score] : soft_scores(acc)) {
                if (!vocab.is_special(id)) apply(id, score);
            }
        }
        table.p_current = p_sample;
    }
    acc.reset();
    table.t += 1;
}

std::vector<double> mask_probabilities(std::span<const TokenId> ids,
                                       const MaskWeightTable& table,
                                       const MaskScheduleConfig& cfg,
                                       const Vocabulary& vocab) {
    std::vector<double> q(ids.size(), 0.0);
    auto uniform_fallback = [&] {
        for (size_t j = 0; j < ids.size(); ++j) {
            if (!vocab.is_special(ids[j])) q[j] = table.p_current;
        }
    };
    if (cfg.metric == MaskMetric::Regular) {
        uniform_fallback();
        return q;
    }
    double sum = 0.0;
    for (TokenId id : ids) sum += table.w[static_cast<size_t>(id)];
    if (sum <= 0.0) {
        uniform_fallback();
        return q;
    }
    double c = table.p_current * static_cast<double>(ids.size()) / sum;
    for (size_t j = 0; j < ids.size(); ++j) {
        q[j] = std::min(1.0, c * table.w[static_cast<size_t>(ids[j])]);
    }
    return q;
}

MaskDecision sample_mask(std::span<const TokenId> ids, const MaskWeightTable& table,
                         const MaskScheduleConfig& cfg, const Vocabulary& vocab, MaskRng& rng) {
    std::vector<double> q = mask_probabilities(ids, table, cfg, vocab);
    MaskDecision decision;
    std::vector<int32_t> selected;
    for (size_t j = 0; j < ids.size(); ++j) {
        double u = rng.select.next_double();
        if (u < q[j]) selected.push_back(static_cast<int32_t>(j));
    }
    const std::vector<TokenId>& pool = vocab.non_special_ids();
    for (int32_t pos : selected) {
        MaskAction action;
        action.position = pos;
        double a = rng.actions.next_double();
        if (a < cfg.mask_frac) {
            action.kind = MaskActionKind::Mask;
        } else if (a < cfg.mask_frac + cfg.random_frac) {
            action.kind = MaskActionKind::Random;
            action.random_id = pool[rng.actions.next_below(pool.size())];
        } else {
            action.kind = MaskActionKind::Keep;
        }
        decision.actions.push_back(action);
    }
    return decision;
}

std::vector<TokenId> apply_mask(std::span<const TokenId> ids, const MaskDecision& decision,
                                const Vocabulary& vocab) {
    std::vector<TokenId> out(ids.begin(), ids.end());
    for (const MaskAction& a : decision.actions) {
        size_t j = static_cast<size_t>(a.position);
        switch (a.kind) {
            case MaskActionKind::Mask: out[j] = vocab.mask_id(); break;
            case MaskActionKind::Random: out[j] = a.random_id; break;
            case MaskActionKind::Keep: break;
        }
    }
    return out;
}

static constexpr std::string_view kSchedulerMagic = "AMLMSCH1";
static constexpr uint32_t kSchedulerVersion = 1;

void write_scheduler_state(LeWriter& out, const SchedulerState& state) {
    out.bytes(kSchedulerMagic.data(), kSchedulerMagic.size());
    out.u32(kSchedulerVersion);
    const MaskScheduleConfig& c = state.config;
    out.f64(c.p_start);
    out.f64(c.p_end);
    out.i64(c.total_steps);
    out.f64(c.lambda);
    out.i64(c.timestep_batches);
    out.u8(static_cast<uint8_t>(c.metric));
    out.f64(c.mask_frac);
    out.f64(c.random_frac);
    out.f64(c.keep_frac);
    out.u64(c.seed);
    out.u8(c.ema_tracks_schedule ? 1 : 0);

    out.i64(state.table.t);
    out.f64(state.table.p_current);
    out.u64(state.table.w.size());
    out.f64_array(state.table.w);

    out.u64(state.acc.total.size());
    out.i64_array(state.acc.correct);
    out.i64_array(state.acc.total);
    out.f64_array(state.acc.loss_sum);
    out.i64_array(state.acc.loss_count);

    out.u64(state.rng.select.state());
    out.u64(state.rng.actions.state());
}

SchedulerState read_scheduler_state(LeReader& in) {
    in.expect_magic(kSchedulerMagic, "scheduler state");
    uint32_t version = in.u32();
    if (version != kSchedulerVersion) {
        throw FormatError("unsupported scheduler state version " + std::to_string(version) +
                          " in '" + in.path() + "'");
    }
    SchedulerState state;
    MaskScheduleConfig& c = state.config;
    c.p_start = in.f64();
    c.p_end = in.f64();
    c.total_steps = in.i64();
    c.lambda = in.f64();
    c.timestep_batches = in.i64();
    c.metric = static_cast<MaskMetric>(in.u8());
    c.mask_frac = in.f64();
    c.random_frac = in.f64();
    c.keep_frac = in.f64();
    c.seed = in.u64();
    c.ema_tracks_schedule = in.u8() != 0;

    state.table.t = in.i64();
    state.table.p_current = in.f64();
    size_t n = in.u64();
    state.table.w = in.f64_array(n);

    size_t an = in.u64();
    if (an != n) {
        throw FormatError("scheduler state in '" + in.path() +
                          "' has mismatched table/accumulator sizes");
    }
    state.acc.correct = in.i64_array(an);
    state.acc.total = in.i64_array(an);
    state.acc.loss_sum = in.f64_array(an);
    state.acc.loss_count = in.i64_array(an);

    state.rng.select.set_state(in.u64());
    state.rng.actions.set_state(in.u64());
    return state;
}

void save_scheduler_state(const std::string& path, const SchedulerState& state) {
    LeWriter out(path);
    write_scheduler_state(out, state);
    out.close();
}

SchedulerState load_scheduler_state(const std::string& path) {
    LeReader in(path);
    return read_scheduler_state(in);
}

}  // namespace amlm
