#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "amlm/errors.hpp"
#include "amlm/scheduler.hpp"
#include "amlm/vocab.hpp"

using namespace amlm;

namespace {

Vocabulary make_vocab(int n_words) {
    std::vector<std::string> e = {"<pad>", "<unk>", "<mask>", "<s>", "</s>"};
    for (int b = 0; b < 256; ++b) e.push_back(byte_fallback_spelling(static_cast<uint8_t>(b)));
    for (int i = 0; i < n_words; ++i)
        e.push_back("\xE2\x96\x81" "w" + std::to_string(i));
    return Vocabulary::from_entries(std::move(e));
}

MaskScheduleConfig base_config() {
    MaskScheduleConfig cfg;
    cfg.p_start = 0.40;
    cfg.p_end = 0.15;
    cfg.total_steps = 1000;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("config validation") {
    auto cfg = base_config();
    CHECK_NOTHROW(cfg.validate());
    SUBCASE("fracs must sum to one") {
        cfg.mask_frac = 0.7;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
    }
    SUBCASE("p ordering") {
        cfg.p_end = 0.5;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg.p_end = 0.0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
    }
    SUBCASE("lambda range") {
        cfg.lambda = 1.5;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
    }
    SUBCASE("counts") {
        cfg.total_steps = 0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
    }
    CHECK(parse_metric("hard") == MaskMetric::Hard);
    CHECK(parse_metric("soft") == MaskMetric::Soft);
    CHECK(parse_metric("regular") == MaskMetric::Regular);
    CHECK_THROWS_AS(parse_metric("medium"), ValidationError);
    CHECK(metric_name(MaskMetric::Soft) == "soft");
}

TEST_CASE("initial weights are uniform at p_start and zero on specials") {
    auto vocab = make_vocab(3);
    auto cfg = base_config();

    cfg.p_start = 0.40;
    auto table = init_weights(cfg, vocab);
    CHECK(table.t == 0);
    CHECK(table.p_current == 0.40);
    for (TokenId id : vocab.non_special_ids()) CHECK(table.w[static_cast<size_t>(id)] == 0.40);
    CHECK(table.w[static_cast<size_t>(vocab.mask_id())] == 0.0);
    CHECK(table.w[static_cast<size_t>(vocab.pad_id())] == 0.0);

    cfg.p_start = 0.15;
    cfg.p_end = 0.15;
    auto flat = init_weights(cfg, vocab);
    for (TokenId id : vocab.non_special_ids()) CHECK(flat.w[static_cast<size_t>(id)] == 0.15);
}

TEST_CASE("scheduled p decays linearly and clamps") {
    auto cfg = base_config();
    CHECK(scheduled_p(0, cfg) == doctest::Approx(0.40));
    CHECK(scheduled_p(cfg.total_steps, cfg) == doctest::Approx(0.15));
    CHECK(scheduled_p(cfg.total_steps / 2, cfg) == doctest::Approx(0.275));
    CHECK(scheduled_p(cfg.total_steps * 3, cfg) == doctest::Approx(0.15));
}

TEST_CASE("record_batch accumulates and drops bad losses") {
    auto vocab = make_vocab(4);
    TokenStatsAccumulator acc(vocab.size());
    TokenId i = 261;

    std::vector<PredictionOutcome> outs = {{i, true, 0.1}, {i, true, 0.1}};
    record_batch(acc, outs);
    CHECK(acc.correct[static_cast<size_t>(i)] == 2);
    CHECK(acc.total[static_cast<size_t>(i)] == 2);
    CHECK(acc.loss_sum[static_cast<size_t>(i)] == doctest::Approx(0.2));
    CHECK(acc.loss_count[static_cast<size_t>(i)] == 2);

    std::vector<PredictionOutcome> bad = {{i, false, std::nan("")},
                                          {i, false, std::numeric_limits<double>::infinity()},
                                          {i, false, -1.0}};
    record_batch(acc, bad);
    CHECK(acc.total[static_cast<size_t>(i)] == 2);  // all dropped

    // merge(A,B) == record(A then B)
    SplitMix64 rng(9);
    std::vector<PredictionOutcome> stream;
    for (int k = 0; k < 200; ++k) {
        stream.push_back({static_cast<TokenId>(261 + rng.next_below(4)), rng.next_below(2) == 0,
                          rng.next_double() * 5.0});
    }
    TokenStatsAccumulator whole(vocab.size()), partA(vocab.size()), partB(vocab.size());
    record_batch(whole, stream);
    record_batch(partA, std::span(stream).subspan(0, 77));
    record_batch(partB, std::span(stream).subspan(77));
    partA.merge(partB);
    CHECK(partA.correct == whole.correct);
    CHECK(partA.total == whole.total);
    CHECK(partA.loss_count == whole.loss_count);
    for (size_t k = 0; k < whole.loss_sum.size(); ++k) {
        CHECK(partA.loss_sum[k] == doctest::Approx(whole.loss_sum[k]).epsilon(1e-12));
    }
}

TEST_CASE("hard score is smoothed accuracy") {
    CHECK(hard_score(0, 0) == doctest::Approx(0.5));
    CHECK(hard_score(1, 1) == doctest::Approx(0.75));
    CHECK(hard_score(199, 200) == doctest::Approx(199.5 / 201.0));
    CHECK_THROWS_AS(hard_score(3, 2), ValidationError);
    CHECK_THROWS_AS(hard_score(-1, 2), ValidationError);
}

TEST_CASE("soft scores are inverted min-max normalized mean losses") {
    auto vocab = make_vocab(4);
    TokenId a = 261, b = 262, c = 263;

    TokenStatsAccumulator acc(vocab.size());
    std::vector<PredictionOutcome> outs = {{a, true, 0.0}, {b, false, 2.0}};
    record_batch(acc, outs);
    auto scores = soft_scores(acc);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0] == std::pair<TokenId, double>{a, 1.0});
    CHECK(scores[1] == std::pair<TokenId, double>{b, 0.0});

    acc.reset();
    std::vector<PredictionOutcome> three = {{a, true, 0.0}, {b, false, 1.0}, {c, false, 2.0}};
    record_batch(acc, three);
    scores = soft_scores(acc);
    REQUIRE(scores.size() == 3);
    CHECK(scores[0].second == doctest::Approx(1.0));
    CHECK(scores[1].second == doctest::Approx(0.5));
    CHECK(scores[2].second == doctest::Approx(0.0));

    acc.reset();
    std::vector<PredictionOutcome> equal = {{a, true, 1.25}, {b, false, 1.25}, {c, false, 1.25}};
    record_batch(acc, equal);
    for (const auto& [id, s] : soft_scores(acc)) CHECK(s == doctest::Approx(0.5));

    acc.reset();
    CHECK(soft_scores(acc).empty());
}

TEST_CASE("weight update hits the stated arithmetic") {
    auto vocab = make_vocab(4);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Soft;
    cfg.p_start = 0.15;
    cfg.p_end = 0.15;
    cfg.lambda = 0.2;

    auto table = init_weights(cfg, vocab);
    TokenStatsAccumulator acc(vocab.size());
    TokenId a = 261, b = 262, c = 263;
    // a gets score 1 (lowest loss), b score 0 (highest), c untouched
    std::vector<PredictionOutcome> outs = {{a, true, 0.0}, {b, false, 3.0}};
    record_batch(acc, outs);
    update_weights(table, acc, cfg, vocab, 200);

    CHECK(table.w[static_cast<size_t>(b)] == doctest::Approx(0.15));  // score 0: fixed point
    CHECK(table.w[static_cast<size_t>(a)] == doctest::Approx(0.03));  // score 1: lambda*w
    CHECK(table.w[static_cast<size_t>(c)] == doctest::Approx(0.15));  // unobserved keeps w
    CHECK(table.t == 1);
    CHECK(acc.total[static_cast<size_t>(a)] == 0);  // reset after the boundary
    CHECK(table.w[static_cast<size_t>(vocab.mask_id())] == 0.0);
}

TEST_CASE("constant score contracts geometrically to the fixed point") {
    auto vocab = make_vocab(2);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Hard;
    cfg.p_start = 0.15;
    cfg.p_end = 0.15;
    cfg.lambda = 0.2;

    auto table = init_weights(cfg, vocab);
    TokenId a = 261;
    double s = hard_score(1, 1);  // 0.75 every timestep
    double target = 0.15 * (1.0 - s);
    double w0 = 0.15;
    for (int t = 1; t <= 12; ++t) {
        TokenStatsAccumulator acc(vocab.size());
        std::vector<PredictionOutcome> outs = {{a, true, 0.5}};
        record_batch(acc, outs);
        update_weights(table, acc, cfg, vocab, t * 200);
        double expect = target + std::pow(cfg.lambda, t) * (w0 - target);
        CHECK(table.w[static_cast<size_t>(a)] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("weights stay within [0, max historical p] under random updates") {
    auto vocab = make_vocab(6);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Hard;
    auto table = init_weights(cfg, vocab);
    SplitMix64 rng(5);
    for (int t = 1; t <= 30; ++t) {
        TokenStatsAccumulator acc(vocab.size());
        std::vector<PredictionOutcome> outs;
        for (int k = 0; k < 50; ++k) {
            outs.push_back({static_cast<TokenId>(261 + rng.next_below(6)), rng.next_below(2) == 0,
                            rng.next_double()});
        }
        record_batch(acc, outs);
        update_weights(table, acc, cfg, vocab, t * 37);
        for (TokenId id : vocab.non_special_ids()) {
            double w = table.w[static_cast<size_t>(id)];
            CHECK(w >= 0.0);
            CHECK(w <= cfg.p_start + 1e-12);
        }
    }
}

TEST_CASE("raising a token's score never raises its next weight") {
    auto vocab = make_vocab(3);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Hard;
    SplitMix64 rng(11);
    for (int iter = 0; iter < 50; ++iter) {
        auto ta = init_weights(cfg, vocab);
        auto tb = init_weights(cfg, vocab);
        TokenId x = 261;
        int64_t total = 1 + static_cast<int64_t>(rng.next_below(20));
        int64_t ca = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(total)));
        int64_t cb = ca + 1 + static_cast<int64_t>(
                                  rng.next_below(static_cast<uint64_t>(total - ca)));
        TokenStatsAccumulator accA(vocab.size()), accB(vocab.size());
        for (int64_t k = 0; k < total; ++k) {
            std::vector<PredictionOutcome> oa = {{x, k < ca, 0.5}};
            std::vector<PredictionOutcome> ob = {{x, k < cb, 0.5}};
            record_batch(accA, oa);
            record_batch(accB, ob);
        }
        int64_t step = static_cast<int64_t>(rng.next_below(1000));
        update_weights(ta, accA, cfg, vocab, step);
        update_weights(tb, accB, cfg, vocab, step);
        CHECK(tb.w[static_cast<size_t>(x)] <= ta.w[static_cast<size_t>(x)]);
    }
}

TEST_CASE("ema target can be pinned to p_end") {
    auto vocab = make_vocab(2);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Hard;
    TokenId a = 261;
    int64_t mid = cfg.total_steps / 2;  // scheduled p there is 0.275
    double s = hard_score(1, 1);

    for (bool tracks : {true, false}) {
        cfg.ema_tracks_schedule = tracks;
        auto table = init_weights(cfg, vocab);
        TokenStatsAccumulator acc(vocab.size());
        std::vector<PredictionOutcome> outs = {{a, true, 0.5}};
        record_batch(acc, outs);
        update_weights(table, acc, cfg, vocab, mid);
        double p_target = tracks ? 0.275 : 0.15;
        double expect = cfg.lambda * 0.40 + (1 - cfg.lambda) * p_target * (1 - s);
        CHECK(table.w[static_cast<size_t>(a)] == doctest::Approx(expect));
        CHECK(table.p_current == doctest::Approx(0.275));  // sampling rate always decays
    }
}

TEST_CASE("regular metric keeps the table uniform at the scheduled rate") {
    auto vocab = make_vocab(3);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Regular;
    auto table = init_weights(cfg, vocab);
    TokenStatsAccumulator acc(vocab.size());
    std::vector<PredictionOutcome> outs = {{261, false, 2.0}, {262, true, 0.1}};
    record_batch(acc, outs);
    update_weights(table, acc, cfg, vocab, cfg.total_steps / 2);
    for (TokenId id : vocab.non_special_ids()) {
        CHECK(table.w[static_cast<size_t>(id)] == doctest::Approx(0.275));
    }
    set_current_p(table, cfg, vocab, 0.2);
    for (TokenId id : vocab.non_special_ids()) {
        CHECK(table.w[static_cast<size_t>(id)] == doctest::Approx(0.2));
    }
    CHECK(table.w[static_cast<size_t>(vocab.unk_id())] == 0.0);
}

TEST_CASE("selection probabilities renormalize to the scheduled mean") {
    auto vocab = make_vocab(4);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Hard;
    auto table = init_weights(cfg, vocab);
    TokenId a = 261, b = 262;

    SUBCASE("uniform weights scale to exactly p") {
        for (TokenId id : vocab.non_special_ids()) table.w[static_cast<size_t>(id)] = 0.075;
        table.p_current = 0.15;
        std::vector<TokenId> seq(10, a);
        auto q = mask_probabilities(seq, table, cfg, vocab);
        for (double v : q) CHECK(v == doctest::Approx(0.15));
    }

    SUBCASE("two weights, no clamping") {
        table.w[static_cast<size_t>(a)] = 0.3;
        table.w[static_cast<size_t>(b)] = 0.1;
        table.p_current = 0.15;
        std::vector<TokenId> seq = {a, b};
        auto q = mask_probabilities(seq, table, cfg, vocab);
        CHECK(q[0] == doctest::Approx(0.225));
        CHECK(q[1] == doctest::Approx(0.075));
        CHECK((q[0] + q[1]) / 2 == doctest::Approx(0.15));
    }

    SUBCASE("zero weight sum falls back to uniform p on non-specials") {
        std::fill(table.w.begin(), table.w.end(), 0.0);
        table.p_current = 0.15;
        std::vector<TokenId> seq = {a, vocab.pad_id(), b};
        auto q = mask_probabilities(seq, table, cfg, vocab);
        CHECK(q[0] == doctest::Approx(0.15));
        CHECK(q[1] == 0.0);
        CHECK(q[2] == doctest::Approx(0.15));
    }

    SUBCASE("regular metric is exactly uniform regardless of table contents") {
        cfg.metric = MaskMetric::Regular;
        table.w[static_cast<size_t>(a)] = 0.9;  // garbage that must be ignored
        table.p_current = 0.15;
        std::vector<TokenId> seq = {a, b, vocab.mask_id()};
        auto q = mask_probabilities(seq, table, cfg, vocab);
        CHECK(q[0] == 0.15);
        CHECK(q[1] == 0.15);
        CHECK(q[2] == 0.0);
    }
}

TEST_CASE("clamped positions saturate and drag the realized mean down") {
    auto vocab = make_vocab(3);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Hard;
    auto table = init_weights(cfg, vocab);
    TokenId a = 261, b = 262, c = 263;
    table.w[static_cast<size_t>(a)] = 1.0;
    table.w[static_cast<size_t>(b)] = 0.001;
    table.w[static_cast<size_t>(c)] = 0.001;
    table.p_current = 0.5;
    std::vector<TokenId> seq = {a, b, c};

    auto q = mask_probabilities(seq, table, cfg, vocab);
    double expected_c = 0.5 * 3 / 1.002;
    CHECK(q[0] == 1.0);  // clamped
    CHECK(q[1] == doctest::Approx(expected_c * 0.001));
    CHECK(q[2] == doctest::Approx(expected_c * 0.001));
    double mean_q = (q[0] + q[1] + q[2]) / 3;
    CHECK(mean_q < 0.5);

    auto rng = MaskRng::from_seed(3);
    const int kTrials = 100000;
    int64_t counts[3] = {0, 0, 0};
    int64_t selected_total = 0;
    for (int trial = 0; trial < kTrials; ++trial) {
        auto d = sample_mask(seq, table, cfg, vocab, rng);
        for (const auto& act : d.actions) counts[act.position] += 1;
        selected_total += static_cast<int64_t>(d.actions.size());
    }
    CHECK(counts[0] == kTrials);  // probability exactly 1
    CHECK(static_cast<double>(counts[1]) / kTrials == doctest::Approx(q[1]).epsilon(0.25));
    double realized_mean = static_cast<double>(selected_total) / (3.0 * kTrials);
    CHECK(realized_mean < 0.5);
    CHECK(realized_mean == doctest::Approx(mean_q).epsilon(0.01));
}

TEST_CASE("empirical mask rate matches p when nothing clamps") {
    auto vocab = make_vocab(8);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Hard;
    auto table = init_weights(cfg, vocab);
    SplitMix64 wrng(21);
    for (TokenId id : vocab.non_special_ids()) {
        table.w[static_cast<size_t>(id)] = 0.05 + 0.25 * wrng.next_double();
    }
    table.p_current = 0.15;

    auto rng = MaskRng::from_seed(17);
    const int kSeqs = 20000, kLen = 32;
    int64_t selected = 0;
    for (int s = 0; s < kSeqs; ++s) {
        std::vector<TokenId> seq;
        for (int j = 0; j < kLen; ++j)
            seq.push_back(static_cast<TokenId>(261 + wrng.next_below(8)));
        auto q = mask_probabilities(seq, table, cfg, vocab);
        for (double v : q) REQUIRE(v < 1.0);  // no clamping in this regime
        selected += static_cast<int64_t>(sample_mask(seq, table, cfg, vocab, rng).actions.size());
    }
    double rate = static_cast<double>(selected) / (static_cast<double>(kSeqs) * kLen);
    CHECK(rate == doctest::Approx(0.15).epsilon(0.0333));  // +-0.005 absolute
}

TEST_CASE("corruption actions split 80/10/10") {
    auto vocab = make_vocab(8);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Hard;
    auto table = init_weights(cfg, vocab);
    table.p_current = 0.4;

    auto rng = MaskRng::from_seed(99);
    int64_t n_mask = 0, n_random = 0, n_keep = 0;
    std::vector<TokenId> seq(64, 261);
    while (n_mask + n_random + n_keep < 100000) {
        auto d = sample_mask(seq, table, cfg, vocab, rng);
        for (const auto& a : d.actions) {
            switch (a.kind) {
                case MaskActionKind::Mask: ++n_mask; break;
                case MaskActionKind::Random:
                    ++n_random;
                    CHECK_FALSE(vocab.is_special(a.random_id));
                    break;
                case MaskActionKind::Keep: ++n_keep; break;
            }
        }
    }
    double n = static_cast<double>(n_mask + n_random + n_keep);
    CHECK(n_mask / n == doctest::Approx(0.8).epsilon(0.0125));   // +-0.01 absolute
    CHECK(n_random / n == doctest::Approx(0.1).epsilon(0.1));
    CHECK(n_keep / n == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("special positions are never selected") {
    auto vocab = make_vocab(4);
    for (MaskMetric m : {MaskMetric::Regular, MaskMetric::Hard, MaskMetric::Soft}) {
        auto cfg = base_config();
        cfg.metric = m;
        auto table = init_weights(cfg, vocab);
        table.p_current = 1.0;  // force maximal selection pressure
        std::vector<TokenId> seq = {vocab.pad_id(), 261, vocab.mask_id(), 262, vocab.eos_id()};
        auto rng = MaskRng::from_seed(7);
        for (int trial = 0; trial < 2000; ++trial) {
            auto d = sample_mask(seq, table, cfg, vocab, rng);
            for (const auto& a : d.actions) {
                CHECK_FALSE(vocab.is_special(seq[static_cast<size_t>(a.position)]));
            }
        }
    }
}

TEST_CASE("identical seeds give identical decision streams") {
    auto vocab = make_vocab(6);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Hard;
    auto table = init_weights(cfg, vocab);
    table.p_current = 0.3;

    auto rng1 = MaskRng::from_seed(1234);
    auto rng2 = MaskRng::from_seed(1234);
    SplitMix64 srng(2);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TokenId> seq;
        for (int j = 0; j < 16; ++j)
            seq.push_back(static_cast<TokenId>(261 + srng.next_below(6)));
        auto d1 = sample_mask(seq, table, cfg, vocab, rng1);
        auto d2 = sample_mask(seq, table, cfg, vocab, rng2);
        REQUIRE(d1.actions.size() == d2.actions.size());
        for (size_t k = 0; k < d1.actions.size(); ++k) {
            CHECK(d1.actions[k].position == d2.actions[k].position);
            CHECK(d1.actions[k].kind == d2.actions[k].kind);
            CHECK(d1.actions[k].random_id == d2.actions[k].random_id);
        }
    }
}

TEST_CASE("apply_mask corrupts exactly the selected positions") {
    auto vocab = make_vocab(4);
    std::vector<TokenId> seq = {261, 262, 263, 264};
    MaskDecision d;
    d.actions.push_back({0, MaskActionKind::Mask, -1});
    d.actions.push_back({2, MaskActionKind::Random, 263});
    d.actions.push_back({3, MaskActionKind::Keep, -1});
    auto out = apply_mask(seq, d, vocab);
    CHECK(out == std::vector<TokenId>{vocab.mask_id(), 262, 263, 264});
}

TEST_CASE("scheduler state round-trips through disk exactly") {
    auto vocab = make_vocab(5);
    auto cfg = base_config();
    cfg.metric = MaskMetric::Soft;
    cfg.ema_tracks_schedule = false;
    cfg.seed = 777;

    SchedulerState state;
    state.config = cfg;
    state.table = init_weights(cfg, vocab);
    state.acc = TokenStatsAccumulator(vocab.size());
    state.rng = MaskRng::from_seed(cfg.seed);

    // churn everything so the round trip is non-trivial
    SplitMix64 rng(4);
    for (int t = 1; t <= 3; ++t) {
        std::vector<PredictionOutcome> outs;
        for (int k = 0; k < 40; ++k) {
            outs.push_back({static_cast<TokenId>(261 + rng.next_below(5)),
                            rng.next_below(2) == 0, rng.next_double() * 3});
        }
        record_batch(state.acc, outs);
        if (t < 3) update_weights(state.table, state.acc, cfg, vocab, t * 200);
    }
    std::vector<TokenId> seq(20, 262);
    sample_mask(seq, state.table, cfg, vocab, state.rng);

    auto path = (std::filesystem::temp_directory_path() / "amlm_sched_state.bin").string();
    save_scheduler_state(path, state);
    auto loaded = load_scheduler_state(path);

    CHECK(loaded.config.p_start == cfg.p_start);
    CHECK(loaded.config.metric == cfg.metric);
    CHECK(loaded.config.ema_tracks_schedule == cfg.ema_tracks_schedule);
    CHECK(loaded.config.seed == cfg.seed);
    CHECK(loaded.table.t == state.table.t);
    CHECK(loaded.table.p_current == state.table.p_current);
    CHECK(loaded.table.w == state.table.w);
    CHECK(loaded.acc.correct == state.acc.correct);
    CHECK(loaded.acc.total == state.acc.total);
    CHECK(loaded.acc.loss_sum == state.acc.loss_sum);
    CHECK(loaded.acc.loss_count == state.acc.loss_count);
    CHECK(loaded.rng.select.state() == state.rng.select.state());
    CHECK(loaded.rng.actions.state() == state.rng.actions.state());

    // the resumed stream continues identically
    auto d1 = sample_mask(seq, state.table, cfg, vocab, state.rng);
    auto d2 = sample_mask(seq, loaded.table, cfg, vocab, loaded.rng);
    REQUIRE(d1.actions.size() == d2.actions.size());

    std::filesystem::remove(path);
}

TEST_CASE("state loading rejects bad files") {
    auto dir = std::filesystem::temp_directory_path();
    {
        auto bad = (dir / "amlm_sched_badmagic.bin").string();
        LeWriter out(bad);
        out.bytes("NOTMAGIC", 8);
        out.u32(1);
        out.close();
        CHECK_THROWS_AS(load_scheduler_state(bad), FormatError);
        std::filesystem::remove(bad);
    }
    {
        auto trunc = (dir / "amlm_sched_trunc.bin").string();
        LeWriter out(trunc);
        out.bytes("AMLMSCH1", 8);
        out.u32(1);
        out.f64(0.4);
        out.close();
        CHECK_THROWS_AS(load_scheduler_state(trunc), FormatError);
        std::filesystem::remove(trunc);
    }
    CHECK_THROWS_AS(load_scheduler_state("/nonexistent/state.bin"), IoError);
}
