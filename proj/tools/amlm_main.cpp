#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amlm/analytics.hpp"
#include "amlm/corpus.hpp"
#include "amlm/errors.hpp"
#include "amlm/manifest.hpp"
#include "amlm/nhot.hpp"
#include "amlm/run_config.hpp"
#include "amlm/tokenizer.hpp"
#include "amlm/trainer.hpp"
#include "amlm/vocab.hpp"

namespace {

using namespace amlm;

int cmd_tokenize(const std::string& vocab_path, const std::string& corpus_path,
                 const std::string& out_path) {
    Vocabulary vocab = Vocabulary::load(vocab_path);
    Tokenizer tok(vocab);
    auto docs = load_text_corpus(corpus_path, tok);

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + out_path + "'");
    std::vector<bool> seen(static_cast<size_t>(vocab.size()), false);
    int64_t tokens = 0;
    for (const auto& doc : docs) {
        for (size_t i = 0; i < doc.ids.size(); ++i) {
            if (i > 0) out << ' ';
            out << doc.ids[i];
            seen[static_cast<size_t>(doc.ids[i])] = true;
            ++tokens;
        }
        out << '\n';
    }
    out.flush();
    if (!out) throw IoError("short write to '" + out_path + "'");

    if (tokens == 0) std::fprintf(stderr, "warning: corpus '%s' is empty\n", corpus_path.c_str());
    int64_t types = 0;
    for (bool s : seen) types += s ? 1 : 0;
    std::printf("documents: %zu\ntokens: %lld\ntypes: %lld\n", docs.size(),
                static_cast<long long>(tokens), static_cast<long long>(types));
    return 0;
}

int cmd_nhot(const std::string& vocab_path, const std::string& out_path) {
    Vocabulary vocab = Vocabulary::load(vocab_path);
    NHotTable table = build_nhot(vocab);
    save_nhot(out_path, table);
    std::printf("vocab size: %d\nfeature entries: %lld\n", table.vocab_size,
                static_cast<long long>(table.total_features()));
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::string resume_path;
    std::string out_dir;
    std::string metric;
    std::string schedule;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
    bool seed_given = false;
    int nhot_flag = 0;  // +1 on, -1 off
    bool quiet = false;
};

int cmd_train(const TrainArgs& args) {
    TrainResult result;
    if (!args.resume_path.empty()) {
        Trainer trainer = Trainer::resume(args.resume_path);
        result = trainer.run(args.out_dir, args.quiet);
    } else {
        RunConfig cfg;
        if (!args.config_path.empty()) cfg = RunConfig::from_file(args.config_path);
        if (args.schedule == "constant") {
            cfg.p_start = cfg.p_end;
        } else if (args.schedule == "decay") {
            cfg.p_start = 0.4;
            cfg.p_end = 0.15;
        }
        if (!args.metric.empty()) cfg.metric = args.metric;
        if (args.nhot_flag != 0) cfg.use_nhot = args.nhot_flag > 0;
        for (const std::string& kv : args.overrides) {
            size_t eq = kv.find('=');
            if (eq == std::string::npos) {
                throw ValidationError("--set expects key=value, got '" + kv + "'");
            }
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (args.seed_given) cfg.seed = args.seed;
        Trainer trainer(cfg);
        result = trainer.run(args.out_dir, args.quiet);
    }
    double final_loss = result.losses.empty() ? 0.0 : result.losses.back().mean_loss;
    std::printf("batches: %lld\ntimesteps: %lld\nfinal mean loss: %.6f\n",
                static_cast<long long>(result.batches_done),
                static_cast<long long>(result.timesteps_done), final_loss);
    return 0;
}

struct StatsArgs {
    std::string run_dir;
    std::string group;
    std::string pos_map_path;
    std::string out_path;
    int32_t bin_size = 0;  // 0: take the run's configured value
    bool occurrence_weighted = false;
};

int cmd_stats(const StatsArgs& args) {
    RunManifest manifest = RunManifest::load(args.run_dir + "/manifest.json");
    std::string vocab_path;
    for (const auto& [label, path] : manifest.inputs) {
        if (label == "vocab") vocab_path = path;
    }
    if (vocab_path.empty()) {
        throw ValidationError("manifest in '" + args.run_dir + "' does not record a vocabulary");
    }
    Vocabulary vocab = Vocabulary::load(vocab_path);
    WeightsLog wlog = WeightsLog::load(args.run_dir + "/weights_log.bin");
    if (wlog.vocab_size != vocab.size()) {
        throw ValidationError("weights log does not match the vocabulary in '" + args.run_dir +
                              "'");
    }

    int32_t bin_size = args.bin_size;
    if (bin_size <= 0) {
        bin_size = 1000;
        for (const auto& [k, v] : manifest.config) {
            if (k == "bin_size") bin_size = static_cast<int32_t>(std::stol(v));
        }
    }

    FrequencyRanking ranking;
    bool need_ranking = args.group == "freq" || args.occurrence_weighted;
    if (need_ranking) {
        ranking = read_ranking_csv(args.run_dir + "/ranking.csv", vocab.size());
    }
    const std::vector<int64_t>* occ = args.occurrence_weighted ? &ranking.counts : nullptr;

    PosMap pos_map;
    if (args.group == "pos") {
        if (args.pos_map_path.empty()) {
            throw ValidationError("--group pos requires --pos-map");
        }
        pos_map = PosMap::from_file(args.pos_map_path, vocab.size());
    }

    TrajectoryLog log;
    for (const auto& snap : wlog.snapshots) {
        MaskWeightTable table;
        table.w = snap.weights;
        table.t = snap.timestep;
        table.p_current = snap.p_current;
        if (args.group == "freq") {
            log.append(bin_by_frequency(table, vocab, ranking, bin_size, snap.timestep, occ));
        } else {
            log.append(group_by_pos(table, vocab, pos_map, snap.timestep, occ));
        }
    }
    log.sort_rows();
    if (args.out_path.empty()) {
        log.write_csv(std::cout);
    } else {
        log.write_csv(args.out_path);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive masked language modeling toolkit"};
    app.require_subcommand(1);

    std::string vocab_path, corpus_path, out_path;
    auto* tokenize = app.add_subcommand("tokenize", "segment a text corpus into token ids");
    tokenize->add_option("--vocab", vocab_path, "vocabulary file, one token per line")->required();
    tokenize->add_option("--corpus", corpus_path, "text corpus, one document per line")
        ->required();
    tokenize->add_option("--out", out_path, "output id file")->required();

    std::string nhot_vocab, nhot_out;
    auto* nhot = app.add_subcommand("nhot", "precompute the substring feature table");
    nhot->add_option("--vocab", nhot_vocab, "vocabulary file")->required();
    nhot->add_option("--out", nhot_out, "output table file")->required();

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "run adaptive masked-LM pretraining");
    auto* cfg_opt = train->add_option("--config", ta.config_path, "run config file (key=value)");
    auto* resume_opt =
        train->add_option("--resume", ta.resume_path, "continue from a training checkpoint");
    resume_opt->excludes(cfg_opt);
    cfg_opt->excludes(resume_opt);
    train->add_option("--out-dir", ta.out_dir, "run directory for artifacts")->required();
    auto* metric_opt = train->add_option("--metric", ta.metric, "difficulty metric")
                           ->check(CLI::IsMember({"regular", "hard", "soft"}));
    auto* schedule_opt =
        train->add_option("--schedule", ta.schedule, "masking rate schedule")
            ->check(CLI::IsMember({"constant", "decay"}));
    auto* nhot_on = train->add_flag("--nhot", "compose embeddings with n-hot features");
    auto* nhot_off = train->add_flag("--no-nhot", "plain embeddings");
    nhot_on->excludes(nhot_off);
    auto* set_opt = train->add_option("--set", ta.overrides,
                                      "override a config key, repeatable (key=value)");
    auto* seed_opt = train->add_option("--seed", ta.seed, "master random seed");
    train->add_flag("--quiet", ta.quiet, "suppress per-timestep progress");
    for (auto* opt : {metric_opt, schedule_opt, set_opt, seed_opt}) opt->excludes(resume_opt);
    resume_opt->excludes(nhot_on);
    resume_opt->excludes(nhot_off);

    StatsArgs sa;
    auto* stats = app.add_subcommand("stats", "regroup logged mask weights for plotting");
    stats->add_option("--run-dir", sa.run_dir, "directory written by train")->required();
    stats->add_option("--group", sa.group, "grouping axis")
        ->check(CLI::IsMember({"freq", "pos"}))
        ->required();
    stats->add_option("--pos-map", sa.pos_map_path, "token_id<TAB>TAG file (UPOS)");
    stats->add_option("--bin-size", sa.bin_size, "frequency ranks per bin");
    stats->add_option("--out", sa.out_path, "output CSV (stdout when omitted)");
    stats->add_flag("--occurrence-weighted", sa.occurrence_weighted,
                    "weight group means by corpus frequency");

    try {
        app.parse(argc, argv);
        if (tokenize->parsed()) return cmd_tokenize(vocab_path, corpus_path, out_path);
        if (nhot->parsed()) return cmd_nhot(nhot_vocab, nhot_out);
        if (train->parsed()) {
            ta.seed_given = seed_opt->count() > 0;
            if (nhot_on->count() > 0) ta.nhot_flag = 1;
            if (nhot_off->count() > 0) ta.nhot_flag = -1;
            return cmd_train(ta);
        }
        if (stats->parsed()) return cmd_stats(sa);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: training diverged at batch %lld: %s\n",
                     static_cast<long long>(e.step), e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
