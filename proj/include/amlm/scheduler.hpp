#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amlm/rng.hpp"
#include "amlm/serialize.hpp"
#include "amlm/tokenizer.hpp"
#include "amlm/vocab.hpp"

namespace amlm {

// How per-token difficulty is scored at each timestep boundary.
//   regular: no adaptation, every non-special token keeps the scheduled rate
//   hard:    smoothed prediction accuracy
//   soft:    min-max normalized inverted mean loss
enum class MaskMetric : uint8_t { Regular = 0, Hard = 1, Soft = 2 };

MaskMetric parse_metric(std::string_view name);  // throws ValidationError
std::string_view metric_name(MaskMetric m);

struct MaskScheduleConfig {
    double p_start = 0.40;           // masking rate at batch 0
    double p_end = 0.15;             // masking rate at total_steps
    int64_t total_steps = 1;         // batches over which the rate decays
    double lambda = 0.2;             // EMA coefficient on the previous weight
    int64_t timestep_batches = 200;  // batches per adaptation timestep
    MaskMetric metric = MaskMetric::Hard;
    double mask_frac = 0.8;
    double random_frac = 0.1;
    double keep_frac = 0.1;
    uint64_t seed = 0;
    // If true, the EMA update targets the decayed rate at the boundary step;
    // if false, it always targets p_end.
    bool ema_tracks_schedule = true;

    void validate() const;  // throws ValidationError
};

// Per-token masking weights. w is indexed by token id; special tokens stay
// at exactly 0.
struct MaskWeightTable {
    std::vector<double> w;
    int64_t t = 0;          // completed timesteps
    double p_current = 0.0; // scheduled rate used for sampling
};

// Prediction statistics for one timestep, keyed by token type. Associative
// merge lets parallel workers accumulate privately.
struct TokenStatsAccumulator {
    std::vector<int64_t> correct;
    std::vector<int64_t> total;
    std::vector<double> loss_sum;
    std::vector<int64_t> loss_count;

    TokenStatsAccumulator() = default;
    explicit TokenStatsAccumulator(int32_t vocab_size);

    int32_t size() const { return static_cast<int32_t>(total.size()); }
    void reset();
    void merge(const TokenStatsAccumulator& other);
};

// One masked-position prediction: which token was hidden, whether the model
// got it right, and its cross-entropy loss.
struct PredictionOutcome {
    TokenId token = 0;
    bool correct = false;
    double loss = 0.0;
};

enum class MaskActionKind : uint8_t { Mask = 0, Random = 1, Keep = 2 };

struct MaskAction {
    int32_t position = 0;
    MaskActionKind kind = MaskActionKind::Mask;
    TokenId random_id = -1;  // set only for Random
};

struct MaskDecision {
    std::vector<MaskAction> actions;  // ascending position
};

// Independent streams so the selection pattern does not depend on how many
// action draws previous sequences consumed.
struct MaskRng {
    SplitMix64 select;
    SplitMix64 actions;

    static MaskRng from_seed(uint64_t seed);
};

MaskWeightTable init_weights(const MaskScheduleConfig& cfg, const Vocabulary& vocab);

// Linear decay from p_start to p_end; steps past total_steps clamp to p_end.
double scheduled_p(int64_t step, const MaskScheduleConfig& cfg);

// Sets the sampling rate; under the regular metric also refreshes the weight
// table so w[i] == p_current stays true between boundaries.
void set_current_p(MaskWeightTable& table, const MaskScheduleConfig& cfg,
                   const Vocabulary& vocab, double p);

// Adds one batch of outcomes. Entries with non-finite or negative loss are
// dropped with a warning on stderr (a sign of diverging training).
void record_batch(TokenStatsAccumulator& acc, std::span<const PredictionOutcome> outcomes);

// Smoothed accuracy (correct + 0.5) / (total + 1).
double hard_score(int64_t correct, int64_t total);  // throws ValidationError if correct > total

// Mean loss per observed id, min-max normalized over the observed set and
// inverted. All-equal losses map every score to 0.5. Pairs are ascending by id.
std::vector<std::pair<TokenId, double>> soft_scores(const TokenStatsAccumulator& acc);

// Timestep-boundary update: w <- lambda*w + (1-lambda)*p*(1-score) for every
// non-special id observed this timestep; unobserved ids keep their weight.
// Resets the accumulator, increments t, and refreshes p_current for
// boundary_step. Under the regular metric the table is just set uniformly.
void update_weights(MaskWeightTable& table, TokenStatsAccumulator& acc,
                    const MaskScheduleConfig& cfg, const Vocabulary& vocab,
                    int64_t boundary_step);

// Per-position selection probabilities q_j = min(1, c*w[id_j]) with
// c = p_current*L / sum_j w[id_j]; uniform p_current on non-special positions
// when the weight sum is zero or the metric is regular.
std::vector<double> mask_probabilities(std::span<const TokenId> ids,
                                       const MaskWeightTable& table,
                                       const MaskScheduleConfig& cfg,
                                       const Vocabulary& vocab);

// Independent Bernoulli(q_j) selection, then mask/random/keep assignment per
// selected position. Random replacements are uniform over non-special ids.
MaskDecision sample_mask(std::span<const TokenId> ids, const MaskWeightTable& table,
                         const MaskScheduleConfig& cfg, const Vocabulary& vocab, MaskRng& rng);

// Corrupted copy of the sequence according to the decision.
std::vector<TokenId> apply_mask(std::span<const TokenId> ids, const MaskDecision& decision,
                                const Vocabulary& vocab);

struct SchedulerState {
    MaskScheduleConfig config;
    MaskWeightTable table;
    TokenStatsAccumulator acc;
    MaskRng rng;
};

void write_scheduler_state(LeWriter& out, const SchedulerState& state);
SchedulerState read_scheduler_state(LeReader& in);
void save_scheduler_state(const std::string& path, const SchedulerState& state);
SchedulerState load_scheduler_state(const std::string& path);

}  // namespace amlm
