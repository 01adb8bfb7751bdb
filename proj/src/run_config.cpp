#include "amlm/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string_view>
#include <type_traits>

#include "amlm/errors.hpp"

namespace amlm {

namespace {

template <typename Cfg, typename F>
void visit_fields(Cfg& c, F&& f) {
    f("vocab", c.vocab_path);
    f("corpus", c.corpus_path);
    f("corpus_format", c.corpus_format);
    f("nhot_table", c.nhot_path);
    f("pos_map", c.pos_map_path);
    f("metric", c.metric);
    f("p_start", c.p_start);
    f("p_end", c.p_end);
    f("lambda", c.lambda);
    f("timestep_batches", c.timestep_batches);
    f("mask_frac", c.mask_frac);
    f("random_frac", c.random_frac);
    f("keep_frac", c.keep_frac);
    f("ema_tracks_schedule", c.ema_tracks_schedule);
    f("d_model", c.d_model);
    f("n_layers", c.n_layers);
    f("n_heads", c.n_heads);
    f("d_ff", c.d_ff);
    f("max_len", c.max_len);
    f("dropout", c.dropout);
    f("use_nhot", c.use_nhot);
    f("nhot_normalize", c.nhot_normalize);
    f("tie_embeddings", c.tie_embeddings);
    f("total_batches", c.total_batches);
    f("batch_size", c.batch_size);
    f("seq_len", c.seq_len);
    f("lr", c.lr);
    f("warmup_ratio", c.warmup_ratio);
    f("weight_decay", c.weight_decay);
    f("grad_clip", c.grad_clip);
    f("beta1", c.beta1);
    f("beta2", c.beta2);
    f("adam_eps", c.adam_eps);
    f("seed", c.seed);
    f("bin_size", c.bin_size);
    f("occurrence_weighted", c.occurrence_weighted);
    f("checkpoint_interval", c.checkpoint_interval);
}

std::string format_value(const std::string& v) { return v; }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
template <typename T>
std::string format_value(T v) {
    return std::to_string(v);
}

template <typename T>
bool parse_value(std::string_view s, T& out) {
    if constexpr (std::is_same_v<T, std::string>) {
        out = std::string(s);
        return true;
    } else if constexpr (std::is_same_v<T, bool>) {
        if (s == "true" || s == "1") {
            out = true;
            return true;
        }
        if (s == "false" || s == "0") {
            out = false;
            return true;
        }
        return false;
    } else {
        T v{};
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) return false;
        out = v;
        return true;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view sv = trim(line);
        if (sv.empty() || sv.front() == '#') continue;
        size_t eq = sv.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError("expected key=value at " + path + ":" +
                                  std::to_string(lineno));
        }
        std::string key(trim(sv.substr(0, eq)));
        std::string value(trim(sv.substr(eq + 1)));
        cfg.set(key, value);
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    bool found = false;
    visit_fields(*this, [&](const char* name, auto& field) {
        if (found || key != name) return;
        found = true;
        if (!parse_value(value, field)) {
            throw ValidationError("invalid value '" + value + "' for config key '" + key + "'");
        }
    });
    if (!found) throw ValidationError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::items() const {
    std::vector<std::pair<std::string, std::string>> out;
    visit_fields(*this, [&](const char* name, const auto& field) {
        out.emplace_back(name, format_value(field));
    });
    return out;
}

void RunConfig::validate() const {
    if (vocab_path.empty()) throw ValidationError("config key 'vocab' is required");
    if (corpus_path.empty()) throw ValidationError("config key 'corpus' is required");
    if (corpus_format != "text" && corpus_format != "ids") {
        throw ValidationError("corpus_format must be 'text' or 'ids', got '" + corpus_format +
                              "'");
    }
    if (total_batches < 1) throw ValidationError("total_batches must be positive");
    if (batch_size < 1) throw ValidationError("batch_size must be positive");
    if (seq_len < 1) throw ValidationError("seq_len must be positive");
    if (max_len > 0 && seq_len > max_len) {
        throw ValidationError("seq_len exceeds max_len");
    }
    if (bin_size < 1) throw ValidationError("bin_size must be positive");
    if (checkpoint_interval < 1) throw ValidationError("checkpoint_interval must be positive");
    if (!(lr > 0.0)) throw ValidationError("lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ValidationError("betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
    if (warmup_ratio < 0.0 || warmup_ratio > 1.0) {
        throw ValidationError("warmup_ratio must lie in [0, 1]");
    }
    if (weight_decay < 0.0) throw ValidationError("weight_decay must be non-negative");
    schedule_config().validate();
    model_config().validate();
}

MaskScheduleConfig RunConfig::schedule_config() const {
    MaskScheduleConfig s;
    s.p_start = p_start;
    s.p_end = p_end;
    s.total_steps = total_batches;
    s.lambda = lambda;
    s.timestep_batches = timestep_batches;
    s.metric = parse_metric(metric);
    s.mask_frac = mask_frac;
    s.random_frac = random_frac;
    s.keep_frac = keep_frac;
    s.seed = seed;
    s.ema_tracks_schedule = ema_tracks_schedule;
    return s;
}

ToyModelConfig RunConfig::model_config() const {
    ToyModelConfig m;
    m.d_model = d_model;
    m.n_layers = n_layers;
    m.n_heads = n_heads;
    m.d_ff = d_ff;
    m.max_len = max_len > 0 ? max_len : seq_len;
    m.dropout = dropout;
    m.use_nhot = use_nhot;
    m.nhot_normalize = nhot_normalize;
    m.tie_embeddings = tie_embeddings;
    return m;
}

AdamWConfig RunConfig::optimizer_config() const {
    AdamWConfig o;
    o.lr = lr;
    o.beta1 = beta1;
    o.beta2 = beta2;
    o.eps = adam_eps;
    o.weight_decay = weight_decay;
    o.warmup_ratio = warmup_ratio;
    o.total_steps = total_batches;
    o.grad_clip = grad_clip;
    return o;
}

}  // namespace amlm
