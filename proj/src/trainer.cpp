#include "amlm/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "amlm/errors.hpp"

namespace fs = std::filesystem;

namespace amlm {

namespace {

constexpr std::string_view kTrainerMagic = "AMLMTRN1";
constexpr uint32_t kTrainerVersion = 1;

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    load_inputs();
    sched_.config = cfg_.schedule_config();
    sched_.table = init_weights(sched_.config, *vocab_);
    sched_.acc = TokenStatsAccumulator(vocab_->size());
    sched_.rng = MaskRng::from_seed(cfg_.seed);
    model_.emplace(cfg_.model_config(), vocab_->size(), cfg_.seed);
    opt_.emplace(cfg_.optimizer_config());
    dropout_rng_ = SplitMix64::stream(cfg_.seed, "dropout");
    wlog_.vocab_size = vocab_->size();
    rebuild_order();
}

void Trainer::load_inputs() {
    vocab_.emplace(Vocabulary::load(cfg_.vocab_path));
    std::vector<TokenSequence> docs;
    if (cfg_.corpus_format == "text") {
        Tokenizer tok(*vocab_);
        docs = load_text_corpus(cfg_.corpus_path, tok);
    } else {
        docs = load_id_corpus(cfg_.corpus_path, *vocab_);
    }
    chunks_ = chunk_sequences(docs, cfg_.seq_len);
    if (chunks_.empty()) {
        throw ValidationError("corpus '" + cfg_.corpus_path + "' yields no training sequences");
    }
    ranking_ = compute_frequency_ranking(chunks_, vocab_->size());
    if (cfg_.use_nhot) {
        if (cfg_.nhot_path.empty()) {
            nhot_.emplace(build_nhot(*vocab_));
        } else {
            nhot_.emplace(load_nhot(cfg_.nhot_path, vocab_->size()));
        }
    }
    if (!cfg_.pos_map_path.empty()) {
        pos_map_.emplace(PosMap::from_file(cfg_.pos_map_path, vocab_->size()));
    }
}

void Trainer::rebuild_order() {
    order_.resize(chunks_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int64_t>(i);
    SplitMix64 rng = SplitMix64::stream(cfg_.seed, "order", static_cast<uint64_t>(epoch_));
    for (size_t i = order_.size(); i > 1; --i) {
        size_t j = rng.next_below(static_cast<uint32_t>(i));
        std::swap(order_[i - 1], order_[j]);
    }
}

void Trainer::log_boundary(int64_t timestep) {
    const std::vector<int64_t>* occ = cfg_.occurrence_weighted ? &ranking_.counts : nullptr;
    traj_.append(
        bin_by_frequency(sched_.table, *vocab_, ranking_, cfg_.bin_size, timestep, occ));
    if (pos_map_) {
        traj_.append(group_by_pos(sched_.table, *vocab_, *pos_map_, timestep, occ));
    }
    wlog_.snapshots.push_back({timestep, sched_.table.p_current, sched_.table.w});
}

RunManifest Trainer::build_manifest() const {
    RunManifest m;
    m.created = iso8601_utc_now();
    m.seed = cfg_.seed;
    m.config = cfg_.items();
    auto add_input = [&](const std::string& label, const std::string& path) {
        if (path.empty()) return;
        m.inputs.emplace_back(label, path);
        m.input_digests.emplace_back(label, digest_file(path));
    };
    add_input("vocab", cfg_.vocab_path);
    add_input("corpus", cfg_.corpus_path);
    add_input("nhot_table", cfg_.nhot_path);
    add_input("pos_map", cfg_.pos_map_path);
    m.artifacts = {
        {"ranking", "ranking.csv"},           {"trajectory", "trajectory.csv"},
        {"trajectory_jsonl", "trajectory.jsonl"}, {"weights_log", "weights_log.bin"},
        {"losses", "losses.csv"},             {"model", "model.ckpt"},
        {"checkpoints", "checkpoints"},
    };
    return m;
}

void Trainer::write_artifacts(const std::string& out_dir) const {
    TrajectoryLog sorted = traj_;
    sorted.sort_rows();
    sorted.write_csv(out_dir + "/trajectory.csv");
    sorted.write_jsonl(out_dir + "/trajectory.jsonl");
    wlog_.save(out_dir + "/weights_log.bin");
    std::ofstream out(out_dir + "/losses.csv", std::ios::binary);
    if (!out) throw IoError("cannot write '" + out_dir + "/losses.csv'");
    out << "timestep,mean_loss,masked\n";
    for (const auto& l : losses_) {
        out << l.timestep << ',' << format_g17(l.mean_loss) << ',' << l.masked << '\n';
    }
    out.flush();
    if (!out) throw IoError("short write to '" + out_dir + "/losses.csv'");
}

TrainResult Trainer::run(const std::string& out_dir, bool quiet) {
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "checkpoints", ec);
    if (ec) throw IoError("cannot create run directory '" + out_dir + "': " + ec.message());

    build_manifest().save(out_dir + "/manifest.json");
    write_ranking_csv(out_dir + "/ranking.csv", ranking_);
    if (batches_done_ == 0 && wlog_.snapshots.empty()) log_boundary(0);

    double ts_loss_sum = 0.0;
    int64_t ts_masked = 0;

    std::vector<std::vector<TokenId>> corrupted;
    std::vector<MaskedBatchItem> items;
    auto blocks = model_->blocks();

    try {
        while (batches_done_ < cfg_.total_batches) {
            set_current_p(sched_.table, sched_.config, *vocab_,
                          scheduled_p(batches_done_, sched_.config));

            corrupted.clear();
            items.clear();
            for (int32_t b = 0; b < cfg_.batch_size && cursor_ < static_cast<int64_t>(order_.size());
                 ++b) {
                const TokenSequence& chunk = chunks_[static_cast<size_t>(order_[cursor_++])];
                MaskDecision dec =
                    sample_mask(chunk.ids, sched_.table, sched_.config, *vocab_, sched_.rng);
                corrupted.push_back(apply_mask(chunk.ids, dec, *vocab_));
                MaskedBatchItem item;
                item.original_ids = chunk.ids;
                item.masked_positions.reserve(dec.actions.size());
                for (const MaskAction& a : dec.actions) item.masked_positions.push_back(a.position);
                items.push_back(std::move(item));
            }
            for (size_t i = 0; i < items.size(); ++i) items[i].input_ids = corrupted[i];
            if (cursor_ >= static_cast<int64_t>(order_.size())) {
                epoch_ += 1;
                cursor_ = 0;
                rebuild_order();
            }

            BatchOutcome out = model_->forward(items, nhot_ ? &*nhot_ : nullptr,
                                               true, &dropout_rng_);
            record_batch(sched_.acc, out.outcomes);
            model_->backward();
            opt_->step(blocks);
            ts_loss_sum += out.mean_loss * static_cast<double>(out.outcomes.size());
            ts_masked += static_cast<int64_t>(out.outcomes.size());
            batches_done_ += 1;

            if (batches_done_ % sched_.config.timestep_batches == 0) {
                update_weights(sched_.table, sched_.acc, sched_.config, *vocab_, batches_done_);
                int64_t t = sched_.table.t;
                log_boundary(t);
                losses_.push_back(
                    {t, ts_masked > 0 ? ts_loss_sum / static_cast<double>(ts_masked) : 0.0,
                     ts_masked});
                if (!quiet) {
                    std::fprintf(stderr, "timestep %lld  batch %lld  loss %.4f  p %.4f\n",
                                 static_cast<long long>(t),
                                 static_cast<long long>(batches_done_), losses_.back().mean_loss,
                                 sched_.table.p_current);
                }
                ts_loss_sum = 0.0;
                ts_masked = 0;
                if (t % cfg_.checkpoint_interval == 0) {
                    write_checkpoint(out_dir + "/checkpoints/state_t" + std::to_string(t) +
                                     ".ckpt");
                }
            }
        }
    } catch (const DivergenceError& e) {
        write_artifacts(out_dir);
        throw DivergenceError(batches_done_, e.what());
    }

    model_->save(out_dir + "/model.ckpt");
    write_artifacts(out_dir);

    TrainResult result;
    result.batches_done = batches_done_;
    result.timesteps_done = sched_.table.t;
    result.losses = losses_;
    return result;
}

void Trainer::write_checkpoint(const std::string& path) const {
    LeWriter out(path);
    out.bytes(kTrainerMagic.data(), kTrainerMagic.size());
    out.u32(kTrainerVersion);
    auto config_items = cfg_.items();
    out.u32(static_cast<uint32_t>(config_items.size()));
    for (const auto& [k, v] : config_items) {
        out.str(k);
        out.str(v);
    }
    out.i64(batches_done_);
    out.i64(epoch_);
    out.i64(cursor_);
    out.u64(dropout_rng_.state());
    write_scheduler_state(out, sched_);
    model_->write(out);
    opt_->write(out);
    out.u64(traj_.rows.size());
    for (const auto& r : traj_.rows) {
        out.i64(r.timestep);
        out.i32(static_cast<int32_t>(r.kind));
        out.str(r.key);
        out.f64(r.mean_weight);
        out.i64(r.count);
    }
    wlog_.write(out);
    out.u64(losses_.size());
    for (const auto& l : losses_) {
        out.i64(l.timestep);
        out.f64(l.mean_loss);
        out.i64(l.masked);
    }
    out.close();
}

Trainer Trainer::resume(const std::string& checkpoint_path) {
    LeReader in(checkpoint_path);
    in.expect_magic(kTrainerMagic, "training checkpoint");
    uint32_t version = in.u32();
    if (version != kTrainerVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in '" +
                          checkpoint_path + "'");
    }
    Trainer t;
    uint32_t n_config = in.u32();
    for (uint32_t i = 0; i < n_config; ++i) {
        std::string key = in.str();
        std::string value = in.str();
        t.cfg_.set(key, value);
    }
    t.cfg_.validate();
    t.load_inputs();
    t.batches_done_ = in.i64();
    t.epoch_ = in.i64();
    t.cursor_ = in.i64();
    t.dropout_rng_.set_state(in.u64());
    t.sched_ = read_scheduler_state(in);
    t.model_.emplace(MlmModel<float>::read(in));
    t.opt_.emplace(t.cfg_.optimizer_config());
    t.opt_->read_state(in);

    uint64_t n_rows = in.u64();
    t.traj_.rows.reserve(n_rows);
    for (uint64_t i = 0; i < n_rows; ++i) {
        TrajectoryRow r;
        r.timestep = in.i64();
        int32_t kind = in.i32();
        if (kind < 0 || kind > 2) {
            throw FormatError("bad trajectory kind in '" + checkpoint_path + "'");
        }
        r.kind = static_cast<TrackKind>(kind);
        r.key = in.str();
        r.mean_weight = in.f64();
        r.count = in.i64();
        t.traj_.rows.push_back(std::move(r));
    }
    t.wlog_ = WeightsLog::read(in);

    uint64_t n_losses = in.u64();
    t.losses_.reserve(n_losses);
    for (uint64_t i = 0; i < n_losses; ++i) {
        TimestepLoss l;
        l.timestep = in.i64();
        l.mean_loss = in.f64();
        l.masked = in.i64();
        t.losses_.push_back(l);
    }

    if (t.model_->vocab_size() != t.vocab_->size() ||
        t.sched_.table.w.size() != static_cast<size_t>(t.vocab_->size()) ||
        t.wlog_.vocab_size != t.vocab_->size()) {
        throw ValidationError("checkpoint '" + checkpoint_path +
                              "' does not match the configured vocabulary");
    }
    if (t.batches_done_ < 0 || t.cursor_ < 0 ||
        t.cursor_ > static_cast<int64_t>(t.chunks_.size())) {
        throw FormatError("nonsense training cursor in '" + checkpoint_path + "'");
    }
    t.rebuild_order();
    return t;
}

}  // namespace amlm
