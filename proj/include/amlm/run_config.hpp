#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "amlm/model.hpp"
#include "amlm/optimizer.hpp"
#include "amlm/scheduler.hpp"

namespace amlm {

// Flat key=value run configuration. Every field has a stable key; set() and
// items() are exact inverses so configs echo through manifests and
// checkpoints without drift.
struct RunConfig {
    // inputs
    std::string vocab_path;
    std::string corpus_path;
    std::string corpus_format = "text";  // text | ids
    std::string nhot_path;               // optional prebuilt table
    std::string pos_map_path;            // optional token->POS TSV

    // masking schedule
    std::string metric = "hard";
    double p_start = 0.4;
    double p_end = 0.15;
    double lambda = 0.2;
    int64_t timestep_batches = 200;
    double mask_frac = 0.8;
    double random_frac = 0.1;
    double keep_frac = 0.1;
    bool ema_tracks_schedule = true;

    // model
    int32_t d_model = 32;
    int32_t n_layers = 2;
    int32_t n_heads = 2;
    int32_t d_ff = 0;
    int32_t max_len = 0;  // 0: seq_len
    double dropout = 0.1;
    bool use_nhot = false;
    bool nhot_normalize = false;
    bool tie_embeddings = true;

    // optimization
    int64_t total_batches = 2000;
    int32_t batch_size = 16;
    int32_t seq_len = 64;
    double lr = 2e-3;
    double warmup_ratio = 0.01;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    uint64_t seed = 0;

    // analytics
    int32_t bin_size = 1000;
    bool occurrence_weighted = false;
    int32_t checkpoint_interval = 1;  // timesteps between checkpoints

    static RunConfig from_file(const std::string& path);

    // Throws ValidationError naming the key when it is unknown or the value
    // does not parse.
    void set(const std::string& key, const std::string& value);

    // All keys with their current values, in canonical order. Feeding the
    // pairs back through set() reproduces the config exactly.
    std::vector<std::pair<std::string, std::string>> items() const;

    void validate() const;

    MaskScheduleConfig schedule_config() const;
    ToyModelConfig model_config() const;
    AdamWConfig optimizer_config() const;
};

}  // namespace amlm
