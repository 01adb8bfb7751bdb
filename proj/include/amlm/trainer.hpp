#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "amlm/analytics.hpp"
#include "amlm/corpus.hpp"
#include "amlm/manifest.hpp"
#include "amlm/model.hpp"
#include "amlm/nhot.hpp"
#include "amlm/optimizer.hpp"
#include "amlm/run_config.hpp"
#include "amlm/scheduler.hpp"

namespace amlm {

struct TimestepLoss {
    int64_t timestep = 0;
    double mean_loss = 0.0;
    int64_t masked = 0;
};

struct TrainResult {
    int64_t batches_done = 0;
    int64_t timesteps_done = 0;
    std::vector<TimestepLoss> losses;
};

// Drives the full pretraining loop: per-batch weighted mask sampling,
// forward/backward, optimizer step, per-type statistics, boundary weight
// updates, trajectory logging and boundary checkpoints. All randomness fans
// out from config.seed, so a run is a pure function of its inputs, and a
// checkpoint restores every piece of state needed to continue byte-for-byte.
class Trainer {
public:
    explicit Trainer(const RunConfig& cfg);
    static Trainer resume(const std::string& checkpoint_path);

    // Runs the remaining batches, writing artifacts into out_dir:
    // manifest.json, ranking.csv, trajectory.csv/.jsonl, weights_log.bin,
    // losses.csv, model.ckpt and checkpoints/state_t<N>.ckpt. On divergence
    // the partial artifacts are flushed and DivergenceError is rethrown with
    // the failing batch index.
    TrainResult run(const std::string& out_dir, bool quiet = false);

    const RunConfig& config() const { return cfg_; }
    int64_t batches_done() const { return batches_done_; }
    const TrajectoryLog& trajectory() const { return traj_; }
    const WeightsLog& weights_log() const { return wlog_; }
    const std::vector<TimestepLoss>& losses() const { return losses_; }
    const Vocabulary& vocab() const { return *vocab_; }

    void write_checkpoint(const std::string& path) const;

private:
    Trainer() = default;
    void load_inputs();
    void rebuild_order();
    void log_boundary(int64_t timestep);
    void write_artifacts(const std::string& out_dir) const;
    RunManifest build_manifest() const;

    RunConfig cfg_;
    std::optional<Vocabulary> vocab_;
    std::vector<TokenSequence> chunks_;
    FrequencyRanking ranking_;
    std::optional<NHotTable> nhot_;
    std::optional<PosMap> pos_map_;

    SchedulerState sched_;
    std::optional<MlmModel<float>> model_;
    std::optional<AdamW<float>> opt_;
    SplitMix64 dropout_rng_;

    int64_t batches_done_ = 0;
    int64_t epoch_ = 0;
    int64_t cursor_ = 0;
    std::vector<int64_t> order_;  // this epoch's chunk visit order

    TrajectoryLog traj_;
    WeightsLog wlog_;
    std::vector<TimestepLoss> losses_;
};

}  // namespace amlm
