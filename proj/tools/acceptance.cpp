// Release acceptance harness. Each check is self-contained, prints one
// [PASS]/[FAIL] line, and the exit code is the number of failures. Details
// about a failing check go to stderr.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "amlm/analytics.hpp"
#include "amlm/corpus.hpp"
#include "amlm/errors.hpp"
#include "amlm/model.hpp"
#include "amlm/nhot.hpp"
#include "amlm/rng.hpp"
#include "amlm/run_config.hpp"
#include "amlm/scheduler.hpp"
#include "amlm/trainer.hpp"
#include "amlm/vocab.hpp"

using namespace amlm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "amlm-acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Vocabulary make_vocab(std::vector<std::string> extra) {
    std::vector<std::string> e = {"<pad>", "<unk>", "<mask>", "<s>", "</s>"};
    for (int b = 0; b < 256; ++b) e.push_back(byte_fallback_spelling(static_cast<uint8_t>(b)));
    for (auto& s : extra) e.push_back(std::move(s));
    return Vocabulary::from_entries(std::move(e));
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string fmt_g(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. EMA convergence under injected constant scores.
//
// With the soft metric, two anchor tokens pin the loss range to [0, 1], so a
// probe token with per-timestep mean loss 1-s receives score exactly s. The
// weight then follows w <- lambda*w + (1-lambda)*p*(1-s), whose fixed point
// is p*(1-s); after 20 updates the residual must be within lambda^20 * p.

bool check_ema_fixed_point(std::string& why) {
    auto t0 = Clock::now();
    auto vocab = make_vocab({"wa", "wb", "wx"});
    const TokenId a = *vocab.id_of("wa");
    const TokenId b = *vocab.id_of("wb");
    const TokenId x = *vocab.id_of("wx");

    for (double s : {0.0, 0.25, 0.5, 1.0}) {
        MaskScheduleConfig cfg;
        cfg.p_start = 0.15;
        cfg.p_end = 0.15;  // constant rate
        cfg.total_steps = 1000;
        cfg.lambda = 0.2;
        cfg.timestep_batches = 1;
        cfg.metric = MaskMetric::Soft;
        cfg.validate();

        auto table = init_weights(cfg, vocab);
        TokenStatsAccumulator acc(vocab.size());
        for (int t = 1; t <= 20; ++t) {
            const PredictionOutcome outcomes[] = {
                {a, true, 0.0}, {b, false, 1.0}, {x, false, 1.0 - s}};
            record_batch(acc, outcomes);
            update_weights(table, acc, cfg, vocab, t);
        }

        double target = 0.15 * (1.0 - s);
        double bound = 0.15;
        for (int i = 0; i < 20; ++i) bound *= cfg.lambda;
        double err = std::fabs(table.w[static_cast<size_t>(x)] - target);
        if (!(err <= bound)) {
            why = "score " + fmt_g(s) + ": |w - p(1-s)| = " + fmt_g(err) + " > " + fmt_g(bound);
            return false;
        }
    }
    double secs = seconds_since(t0);
    if (secs >= 1.0) {
        why = "took " + fmt_g(secs) + " s, budget is 1 s";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 2. Smoothed accuracy score.

bool check_hard_score(std::string& why) {
    struct Case {
        int64_t c, t;
        double want;
    };
    const Case cases[] = {{0, 0, 0.5}, {1, 1, 0.75}, {199, 200, 199.5 / 201.0}};
    for (const auto& cs : cases) {
        double got = hard_score(cs.c, cs.t);
        if (std::fabs(got - cs.want) > 1e-12) {
            why = "hard_score(" + std::to_string(cs.c) + "," + std::to_string(cs.t) +
                  ") = " + fmt_g(got) + ", want " + fmt_g(cs.want);
            return false;
        }
    }

    auto strictly_inside = [&](int64_t c, int64_t t) {
        double s = hard_score(c, t);
        if (s > 0.0 && s < 1.0) return true;
        why = "hard_score(" + std::to_string(c) + "," + std::to_string(t) +
              ") = " + fmt_g(s) + " left (0,1)";
        return false;
    };

    for (int64_t t : {int64_t{0}, int64_t{1}, int64_t{2}, int64_t{3}, int64_t{7}, int64_t{10},
                      int64_t{100}, int64_t{12345}, int64_t{999999}, int64_t{1000000}}) {
        for (int64_t c : {int64_t{0}, int64_t{1}, t / 2, t - 1, t}) {
            if (c < 0 || c > t) continue;
            if (!strictly_inside(c, t)) return false;
        }
    }
    SplitMix64 rng(5);
    for (int i = 0; i < 20000; ++i) {
        int64_t t = rng.next_below(1000001);
        int64_t c = t == 0 ? 0 : static_cast<int64_t>(rng.next_below(static_cast<uint32_t>(t + 1)));
        if (!strictly_inside(c, t)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 3. Min-max normalized inverted loss scores.

bool check_soft_scores(std::string& why) {
    auto scores_of = [](std::vector<std::pair<TokenId, double>> losses) {
        TokenStatsAccumulator acc(64);
        std::vector<PredictionOutcome> outs;
        for (auto [id, loss] : losses) outs.push_back({id, false, loss});
        record_batch(acc, outs);
        return soft_scores(acc);
    };

    auto expect = [&](std::vector<std::pair<TokenId, double>> losses,
                      std::vector<std::pair<TokenId, double>> want) {
        auto got = scores_of(std::move(losses));
        if (got != want) {
            std::ostringstream ss;
            ss << "got {";
            for (auto [id, s] : got) ss << " " << id << ":" << fmt_g(s);
            ss << " }";
            why = ss.str();
            return false;
        }
        return true;
    };

    // two-point and three-point ranges, exact values
    if (!expect({{10, 0.0}, {20, 2.0}}, {{10, 1.0}, {20, 0.0}})) return false;
    if (!expect({{10, 0.0}, {20, 1.0}, {30, 2.0}}, {{10, 1.0}, {20, 0.5}, {30, 0.0}}))
        return false;
    // all-equal losses collapse to the neutral midpoint
    if (!expect({{3, 0.7}, {9, 0.7}, {17, 0.7}, {40, 0.7}},
                {{3, 0.5}, {9, 0.5}, {17, 0.5}, {40, 0.5}}))
        return false;
    return true;
}

// ---------------------------------------------------------------------------
// 4. Per-sequence renormalization and the regular-metric reduction.

bool check_renormalization(std::string& why) {
    auto t0 = Clock::now();

    std::vector<std::string> extra;
    for (int k = 0; k < 200; ++k) extra.push_back("w" + std::to_string(k));
    auto vocab = make_vocab(extra);
    const auto& ns = vocab.non_special_ids();
    const int L = 64;
    const double p = 0.15;

    // Weighted path: spread weights over [0.5p, 1.5p) so q_j = c*w never
    // clamps, then the renormalization makes every sequence's expected
    // selection count exactly p*L.
    MaskScheduleConfig cfg;
    cfg.p_start = 0.4;
    cfg.p_end = 0.15;
    cfg.total_steps = 1000;
    cfg.metric = MaskMetric::Hard;
    auto table = init_weights(cfg, vocab);
    SplitMix64 wrng(99);
    for (TokenId id : ns) table.w[static_cast<size_t>(id)] = p * (0.5 + wrng.next_double());
    set_current_p(table, cfg, vocab, p);

    SplitMix64 idrng(3);
    auto random_sequence = [&] {
        std::vector<TokenId> ids(L);
        for (auto& t : ids) t = ns[idrng.next_below(static_cast<uint32_t>(ns.size()))];
        return ids;
    };

    MaskRng mr = MaskRng::from_seed(7);
    int64_t selected = 0, positions = 0, clamped = 0;
    for (int i = 0; i < 10000; ++i) {
        auto ids = random_sequence();
        auto q = mask_probabilities(ids, table, cfg, vocab);
        for (double qj : q)
            if (qj >= 1.0) ++clamped;
        auto dec = sample_mask(ids, table, cfg, vocab, mr);
        selected += static_cast<int64_t>(dec.actions.size());
        positions += L;
    }
    if (clamped != 0) {
        why = "expected a non-clamping setup, got " + std::to_string(clamped) +
              " saturated positions";
        return false;
    }
    double rate = static_cast<double>(selected) / static_cast<double>(positions);
    if (std::fabs(rate - p) > 0.005) {
        why = "weighted mask rate " + fmt_g(rate) + " not within 0.005 of " + fmt_g(p);
        return false;
    }

    // Regular metric: per-position probability must equal p exactly, and the
    // realized draws must look like independent Bernoulli(p) both across
    // positions and across token identities.
    MaskScheduleConfig rcfg = cfg;
    rcfg.metric = MaskMetric::Regular;
    auto rtable = init_weights(rcfg, vocab);
    set_current_p(rtable, rcfg, vocab, p);
    {
        auto ids = random_sequence();
        auto q = mask_probabilities(ids, rtable, rcfg, vocab);
        for (double qj : q)
            if (qj != p) {
                why = "regular-metric probability " + fmt_g(qj) + " != " + fmt_g(p);
                return false;
            }
    }

    const int n2 = 20000;
    const int buckets = 20;
    std::vector<int64_t> pos_hits(L, 0);
    std::vector<int64_t> bucket_occ(buckets, 0), bucket_hits(buckets, 0);
    MaskRng mr2 = MaskRng::from_seed(11);
    for (int i = 0; i < n2; ++i) {
        auto ids = random_sequence();
        for (TokenId id : ids) ++bucket_occ[static_cast<size_t>(id % buckets)];
        auto dec = sample_mask(ids, rtable, rcfg, vocab, mr2);
        for (const auto& act : dec.actions) {
            ++pos_hits[static_cast<size_t>(act.position)];
            ++bucket_hits[static_cast<size_t>(ids[static_cast<size_t>(act.position)] % buckets)];
        }
    }
    double chi_pos = 0.0;
    for (int j = 0; j < L; ++j) {
        double e = n2 * p;
        double d = static_cast<double>(pos_hits[static_cast<size_t>(j)]) - e;
        chi_pos += d * d / (e * (1.0 - p));
    }
    if (chi_pos >= 93.217) {  // chi-square upper 1% point, 64 dof
        why = "per-position chi-square " + fmt_g(chi_pos) + " >= 93.217";
        return false;
    }
    double chi_tok = 0.0;
    for (int bkt = 0; bkt < buckets; ++bkt) {
        double e = static_cast<double>(bucket_occ[static_cast<size_t>(bkt)]) * p;
        double d = static_cast<double>(bucket_hits[static_cast<size_t>(bkt)]) - e;
        chi_tok += d * d / (e * (1.0 - p));
    }
    if (chi_tok >= 37.566) {  // chi-square upper 1% point, 20 dof
        why = "per-token-bucket chi-square " + fmt_g(chi_tok) + " >= 37.566";
        return false;
    }

    double secs = seconds_since(t0);
    if (secs >= 10.0) {
        why = "took " + fmt_g(secs) + " s, budget is 10 s";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 5. 80/10/10 corruption split over selected positions.

bool check_corruption_split(std::string& why) {
    std::vector<std::string> extra;
    for (int k = 0; k < 200; ++k) extra.push_back("w" + std::to_string(k));
    auto vocab = make_vocab(extra);
    const auto& ns = vocab.non_special_ids();
    const int L = 64;

    MaskScheduleConfig cfg;
    cfg.p_start = 0.5;
    cfg.p_end = 0.5;
    cfg.total_steps = 1000;
    cfg.metric = MaskMetric::Regular;  // selection rate is irrelevant to the split
    auto table = init_weights(cfg, vocab);
    set_current_p(table, cfg, vocab, 0.5);

    SplitMix64 idrng(21);
    MaskRng mr = MaskRng::from_seed(13);
    int64_t n_mask = 0, n_random = 0, n_keep = 0;
    bool checked_apply = false;
    while (n_mask + n_random + n_keep < 100000) {
        std::vector<TokenId> ids(L);
        for (auto& t : ids) t = ns[idrng.next_below(static_cast<uint32_t>(ns.size()))];
        auto dec = sample_mask(ids, table, cfg, vocab, mr);
        for (const auto& act : dec.actions) {
            switch (act.kind) {
                case MaskActionKind::Mask: ++n_mask; break;
                case MaskActionKind::Random: ++n_random; break;
                case MaskActionKind::Keep: ++n_keep; break;
            }
        }
        if (!checked_apply && !dec.actions.empty()) {
            checked_apply = true;
            auto corrupted = apply_mask(ids, dec, vocab);
            for (const auto& act : dec.actions) {
                size_t j = static_cast<size_t>(act.position);
                TokenId want = act.kind == MaskActionKind::Mask     ? vocab.mask_id()
                               : act.kind == MaskActionKind::Random ? act.random_id
                                                                    : ids[j];
                if (corrupted[j] != want) {
                    why = "corrupted sequence disagrees with its action list";
                    return false;
                }
            }
        }
    }
    double total = static_cast<double>(n_mask + n_random + n_keep);
    double fm = n_mask / total, fr = n_random / total, fk = n_keep / total;
    if (std::fabs(fm - 0.8) > 0.01 || std::fabs(fr - 0.1) > 0.01 || std::fabs(fk - 0.1) > 0.01) {
        why = "split " + fmt_g(fm) + "/" + fmt_g(fr) + "/" + fmt_g(fk) +
              " not within 0.01 of 0.8/0.1/0.1";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 6. Linear decay of the masking rate.

bool check_decay_schedule(std::string& why) {
    MaskScheduleConfig cfg;
    cfg.p_start = 0.40;
    cfg.p_end = 0.15;
    cfg.total_steps = 1000;

    if (scheduled_p(0, cfg) != 0.40) {
        why = "scheduled_p(0) = " + fmt_g(scheduled_p(0, cfg));
        return false;
    }
    if (scheduled_p(1000, cfg) != 0.15) {
        why = "scheduled_p(total) = " + fmt_g(scheduled_p(1000, cfg));
        return false;
    }
    if (scheduled_p(500, cfg) != 0.275) {
        why = "scheduled_p(total/2) = " + fmt_g(scheduled_p(500, cfg));
        return false;
    }
    if (scheduled_p(5000, cfg) != 0.15) {
        why = "rate does not clamp past total_steps";
        return false;
    }
    double prev = scheduled_p(0, cfg);
    for (int64_t s = 1; s <= 1000; ++s) {
        double cur = scheduled_p(s, cfg);
        if (cur > prev || cur < 0.15 || cur > 0.40) {
            why = "rate not monotone within [p_end, p_start] at step " + std::to_string(s);
            return false;
        }
        prev = cur;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 7. Substring feature table vs. brute-force enumeration.

std::vector<TokenId> brute_force_row(const Vocabulary& vocab, TokenId id) {
    std::vector<TokenId> out;
    if (vocab.is_special(id) || vocab.is_byte_fallback(id)) return out;
    const std::string& s = vocab.entry(id);
    std::set<TokenId> seen;
    for (size_t start = 0; start < s.size(); ++start) {
        for (size_t len = 1; start + len <= s.size(); ++len) {
            if (len == s.size()) continue;  // proper substrings only
            auto oid = vocab.id_of(std::string_view(s).substr(start, len));
            if (oid && !vocab.is_special(*oid) && !vocab.is_byte_fallback(*oid)) seen.insert(*oid);
        }
    }
    return {seen.begin(), seen.end()};
}

bool check_nhot_oracle(std::string& why) {
    SplitMix64 rng(20240814);
    const char alphabet[] = {'a', 'b', 'c'};
    for (int iter = 0; iter < 1000; ++iter) {
        uint32_t n_extra = 50 + rng.next_below(451);  // 50..500 sampled entries
        std::set<std::string> uniq;
        while (uniq.size() < n_extra) {
            std::string s;
            if (rng.next_below(3) == 0) s += "\xE2\x96\x81";
            uint32_t len = 1 + rng.next_below(12);  // 1..12 letters
            for (uint32_t j = 0; j < len; ++j) s += alphabet[rng.next_below(3)];
            uniq.insert(std::move(s));
        }
        auto vocab = make_vocab({uniq.begin(), uniq.end()});
        auto table = build_nhot(vocab);
        for (TokenId id = 0; id < vocab.size(); ++id) {
            auto row = table.row(id);
            std::vector<TokenId> got(row.begin(), row.end());
            auto want = brute_force_row(vocab, id);
            if (got != want) {
                why = "vocab " + std::to_string(iter) + ", token '" + vocab.entry(id) +
                      "': row disagrees with brute force";
                return false;
            }
        }
    }

    // the word-marker walkthrough: features of "▁doing"
    auto vocab = make_vocab({"\xE2\x96\x81" "doing", "\xE2\x96\x81" "doin", "g",
                             "\xE2\x96\x81" "do", "ing", "in", "do", "cat"});
    auto table = build_nhot(vocab);
    auto row = table.row(*vocab.id_of("\xE2\x96\x81" "doing"));
    for (const char* part : {"\xE2\x96\x81" "doin", "g", "\xE2\x96\x81" "do", "ing"}) {
        TokenId need = *vocab.id_of(part);
        if (!std::binary_search(row.begin(), row.end(), need)) {
            why = std::string("feature set of '▁doing' is missing '") + part + "'";
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 8. Gradients vs. central finite differences, 64-bit, every index of every
//    parameter block.

bool check_gradients(std::string& why) {
    auto t0 = Clock::now();

    ToyModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_len = 16;
    cfg.dropout = 0.0;
    MlmModel<double> m(cfg, 50, 11);

    SplitMix64 rng(77);
    std::vector<std::vector<TokenId>> inputs, originals;
    std::vector<MaskedBatchItem> items;
    auto add_item = [&](int len, std::vector<int32_t> masked) {
        std::vector<TokenId> orig(static_cast<size_t>(len));
        for (auto& t : orig) t = static_cast<TokenId>(rng.next_below(50));
        auto in = orig;
        for (int32_t p : masked) in[static_cast<size_t>(p)] = 0;
        inputs.push_back(std::move(in));
        originals.push_back(std::move(orig));
        items.push_back({inputs.back(), originals.back(), std::move(masked)});
        for (size_t i = 0; i < items.size(); ++i) {
            items[i].input_ids = inputs[i];
            items[i].original_ids = originals[i];
        }
    };
    add_item(6, {1, 4});
    add_item(4, {2});

    auto loss_of = [&] { return m.forward(items, nullptr, false, nullptr).mean_loss; };
    loss_of();
    m.backward();

    std::vector<std::vector<double>> analytic;
    for (auto& b : m.blocks()) analytic.push_back(*b.grad);

    const double h = 1e-4;
    auto blocks = m.blocks();
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
        auto& vals = *blocks[bi].value;
        double max_abs = 1e-10, max_err = 0.0;
        for (size_t e = 0; e < vals.size(); ++e) {
            double orig = vals[e];
            vals[e] = orig + h;
            double up = loss_of();
            vals[e] = orig - h;
            double down = loss_of();
            vals[e] = orig;
            double fd = (up - down) / (2 * h);
            double an = analytic[bi][e];
            max_abs = std::max({max_abs, std::fabs(fd), std::fabs(an)});
            max_err = std::max(max_err, std::fabs(fd - an));
        }
        if (!(max_err / max_abs < 1e-3)) {
            why = "block " + blocks[bi].name + ": relative error " + fmt_g(max_err / max_abs);
            return false;
        }
    }

    double secs = seconds_since(t0);
    if (secs >= 60.0) {
        why = "took " + fmt_g(secs) + " s, budget is 60 s";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 9 & 11 share one end-to-end training run: a Zipfian corpus of deterministic
// token pairs (100k tokens, 2000 word types) trained with the hard metric at
// a constant 0.15 rate for 12 adaptation timesteps of 400 batches. The pair
// structure makes masked tokens recoverable from a neighbor, so the loss can
// genuinely fall once the model picks up the associations, and the hard
// scores then pull the frequent (quickly learned) types' weights down.

struct DeskRun {
    std::string error;  // empty when the run succeeded
    double seconds = 0.0;
    int64_t timesteps = 0;
    int32_t non_special = 0;
    std::optional<Vocabulary> vocab;
    TrajectoryLog traj;
    WeightsLog wlog;
    std::vector<TimestepLoss> losses;
};

const DeskRun& desk_run() {
    static DeskRun r = [] {
        DeskRun out;
        auto t0 = Clock::now();
        try {
            fs::path dir = work_dir() / "desk";
            fs::create_directories(dir);
            const int n_words = 2000;

            std::ostringstream vf;
            vf << "<pad>\n<unk>\n<mask>\n<s>\n</s>\n";
            for (int b = 0; b < 256; ++b) vf << byte_fallback_spelling(static_cast<uint8_t>(b)) << "\n";
            for (int k = 0; k < n_words; ++k) vf << "w" << k << "\n";
            write_file(dir / "vocab.txt", vf.str());

            // Zipf(1.1) over pair heads; every head k is followed by its
            // partner k^1, so masked tokens are recoverable from a neighbor.
            std::vector<double> cum(n_words);
            double total_mass = 0.0;
            for (int k = 0; k < n_words; ++k) {
                total_mass += 1.0 / std::pow(k + 1, 1.1);
                cum[static_cast<size_t>(k)] = total_mass;
            }
            SplitMix64 zrng(404);
            std::ostringstream cf;
            for (int line = 0; line < 1000; ++line) {
                for (int pair = 0; pair < 50; ++pair) {
                    double u = zrng.next_double() * total_mass;
                    int k = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) -
                                             cum.begin());
                    if (pair) cf << ' ';
                    cf << (261 + k) << ' ' << (261 + (k ^ 1));
                }
                cf << '\n';
            }
            write_file(dir / "corpus.ids", cf.str());

            std::ostringstream pf;
            for (int k = 0; k < n_words; ++k)
                pf << (261 + k) << '\t' << kUposTags[static_cast<size_t>(k % 17)] << '\n';
            write_file(dir / "pos.tsv", pf.str());

            RunConfig rc;
            rc.vocab_path = (dir / "vocab.txt").string();
            rc.corpus_path = (dir / "corpus.ids").string();
            rc.corpus_format = "ids";
            rc.pos_map_path = (dir / "pos.tsv").string();
            rc.metric = "hard";
            rc.p_start = 0.15;
            rc.p_end = 0.15;  // constant rate makes "initial weight" unambiguous
            rc.timestep_batches = 400;
            rc.total_batches = 4800;
            rc.batch_size = 16;
            rc.seq_len = 64;
            rc.d_model = 32;
            rc.n_layers = 2;
            rc.n_heads = 2;
            rc.dropout = 0.0;
            rc.lr = 3e-3;
            rc.warmup_ratio = 0.02;
            rc.weight_decay = 0.01;
            rc.grad_clip = 1.0;
            rc.seed = 1234;
            rc.bin_size = 100;
            rc.checkpoint_interval = 12;

            Trainer trainer(rc);
            auto res = trainer.run((dir / "out").string(), /*quiet=*/true);
            out.timesteps = res.timesteps_done;
            out.non_special = trainer.vocab().non_special_count();
            out.vocab = trainer.vocab();
            out.traj = trainer.trajectory();
            out.wlog = trainer.weights_log();
            out.losses = trainer.losses();
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        out.seconds = seconds_since(t0);
        return out;
    }();
    return r;
}

bool check_desk_run(std::string& why) {
    const DeskRun& r = desk_run();
    if (!r.error.empty()) {
        why = "run failed: " + r.error;
        return false;
    }
    if (r.timesteps < 10) {
        why = "only " + std::to_string(r.timesteps) + " timesteps completed";
        return false;
    }

    int64_t t_last = r.wlog.snapshots.back().timestep;
    double first_bin = -1.0, last_bin = -1.0;
    for (const auto& row : r.traj.rows) {
        if (row.kind == TrackKind::FreqBin && row.key == "0") {
            if (row.timestep == 0) first_bin = row.mean_weight;
            if (row.timestep == t_last) last_bin = row.mean_weight;
        }
    }
    if (first_bin < 0.0 || last_bin < 0.0) {
        why = "top frequency bin missing from the trajectory";
        return false;
    }
    if (!(last_bin < first_bin)) {
        why = "top-bin mean weight " + fmt_g(last_bin) + " did not drop below initial " +
              fmt_g(first_bin);
        return false;
    }

    double l_first = r.losses.front().mean_loss;
    double l_last = r.losses.back().mean_loss;
    double drop = (l_first - l_last) / l_first;
    if (!(drop >= 0.20)) {
        why = "masked loss " + fmt_g(l_first) + " -> " + fmt_g(l_last) + " (" +
              fmt_g(100 * drop) + "% drop, need >= 20%)";
        return false;
    }

    if (r.seconds >= 600.0) {
        why = "took " + fmt_g(r.seconds) + " s, budget is 600 s";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 10. Seed determinism and bit-exact checkpoint resume.

bool check_determinism(std::string& why) {
    fs::path dir = work_dir() / "repro";
    fs::create_directories(dir);

    std::ostringstream vf;
    vf << "<pad>\n<unk>\n<mask>\n<s>\n</s>\n";
    for (int b = 0; b < 256; ++b) vf << byte_fallback_spelling(static_cast<uint8_t>(b)) << "\n";
    for (int k = 0; k < 300; ++k) vf << "v" << k << "\n";
    write_file(dir / "vocab.txt", vf.str());

    SplitMix64 crng(5);
    std::ostringstream cf;
    for (int line = 0; line < 400; ++line) {
        for (int j = 0; j < 25; ++j) {
            if (j) cf << ' ';
            cf << (261 + crng.next_below(300));
        }
        cf << '\n';
    }
    write_file(dir / "corpus.ids", cf.str());

    RunConfig rc;
    rc.vocab_path = (dir / "vocab.txt").string();
    rc.corpus_path = (dir / "corpus.ids").string();
    rc.corpus_format = "ids";
    rc.metric = "hard";
    rc.p_start = 0.4;
    rc.p_end = 0.15;
    rc.timestep_batches = 5;
    rc.total_batches = 20;
    rc.batch_size = 4;
    rc.seq_len = 16;
    rc.d_model = 16;
    rc.n_layers = 1;
    rc.n_heads = 2;
    rc.dropout = 0.1;
    rc.lr = 1e-3;
    rc.warmup_ratio = 0.1;
    rc.seed = 77;
    rc.bin_size = 50;
    rc.checkpoint_interval = 1;

    const char* artifacts[] = {"trajectory.csv", "trajectory.jsonl", "losses.csv",
                               "weights_log.bin", "model.ckpt"};

    Trainer a(rc);
    a.run((dir / "a").string(), /*quiet=*/true);
    Trainer b(rc);
    b.run((dir / "b").string(), /*quiet=*/true);
    for (const char* name : artifacts) {
        if (read_file(dir / "a" / name) != read_file(dir / "b" / name)) {
            why = std::string(name) + " differs between identically seeded runs";
            return false;
        }
    }

    auto resumed = Trainer::resume((dir / "a" / "checkpoints" / "state_t2.ckpt").string());
    resumed.run((dir / "c").string(), /*quiet=*/true);
    for (const char* name : artifacts) {
        if (read_file(dir / "a" / name) != read_file(dir / "c" / name)) {
            why = std::string(name) + " differs after mid-run checkpoint resume";
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 11. Logged groups partition the vocabulary and recombine to the global mean.

bool check_partition(std::string& why) {
    const DeskRun& r = desk_run();
    if (!r.error.empty()) {
        why = "run failed: " + r.error;
        return false;
    }
    for (const auto& snap : r.wlog.snapshots) {
        MaskWeightTable table;
        table.w = snap.weights;
        table.p_current = snap.p_current;
        double global = global_mean_weight(table, *r.vocab);

        for (TrackKind kind : {TrackKind::FreqBin, TrackKind::Pos}) {
            int64_t members = 0;
            double weighted_sum = 0.0;
            size_t rows = 0;
            for (const auto& row : r.traj.rows) {
                if (row.timestep != snap.timestep || row.kind != kind) continue;
                members += row.count;
                weighted_sum += row.mean_weight * static_cast<double>(row.count);
                ++rows;
            }
            if (rows == 0) {
                why = "timestep " + std::to_string(snap.timestep) + ": no " +
                      track_kind_name(kind) + " rows logged";
                return false;
            }
            if (members != r.non_special) {
                why = "timestep " + std::to_string(snap.timestep) + ": " + track_kind_name(kind) +
                      " counts sum to " + std::to_string(members) + ", vocabulary has " +
                      std::to_string(r.non_special) + " maskable types";
                return false;
            }
            double recombined = weighted_sum / static_cast<double>(members);
            if (std::fabs(recombined - global) > 1e-10) {
                why = "timestep " + std::to_string(snap.timestep) + ": " + track_kind_name(kind) +
                      " weighted mean " + fmt_g(recombined) + " vs global " + fmt_g(global);
                return false;
            }
        }
    }
    return true;
}

struct Criterion {
    const char* desc;
    bool (*fn)(std::string&);
};

}  // namespace

int main() {
    const Criterion checks[] = {
        {"EMA weight update converges to p*(1-score) under constant injected scores",
         check_ema_fixed_point},
        {"smoothed accuracy score: closed-form values exact, always strictly inside (0,1)",
         check_hard_score},
        {"min-max loss normalization reproduces worked examples; equal losses give 0.5",
         check_soft_scores},
        {"per-sequence renormalization hits the scheduled rate; regular metric is uniform "
         "Bernoulli",
         check_renormalization},
        {"selected positions split 80/10/10 between mask, random and keep",
         check_corruption_split},
        {"mask rate decays linearly from 0.40 to 0.15 with exact endpoints and midpoint",
         check_decay_schedule},
        {"substring feature rows equal brute-force enumeration on 1000 random vocabularies",
         check_nhot_oracle},
        {"analytic gradients match central finite differences in 64-bit mode", check_gradients},
        {"adaptive run on a Zipfian pair corpus: top-bin weight drops, loss improves >= 20%",
         check_desk_run},
        {"fixed seed reproduces logs byte-for-byte; checkpoint resume is bit-exact",
         check_determinism},
        {"trajectory groups partition the vocabulary and recombine to the global mean",
         check_partition},
    };

    int failures = 0;
    int index = 0;
    for (const auto& c : checks) {
        ++index;
        std::string why;
        bool ok = false;
        try {
            ok = c.fn(why);
        } catch (const std::exception& e) {
            why = e.what();
        }
        std::printf("[%s] %2d: %s\n", ok ? "PASS" : "FAIL", index, c.desc);
        std::fflush(stdout);
        if (!ok) {
            ++failures;
            if (!why.empty()) std::fprintf(stderr, "        -> %s\n", why.c_str());
        }
    }
    std::printf("%d/11 criteria passed\n", 11 - failures);

    std::error_code ec;
    fs::remove_all(work_dir(), ec);
    return failures;
}
