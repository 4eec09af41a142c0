#include "melbridge/pipeline/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "melbridge/core/io.hpp"

extern char** environ;

namespace melbridge::pipeline {

namespace {

constexpr const char* kMagicLine = "melbridge config v1";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
    throw std::invalid_argument("config key " + key + ": cannot parse \"" + value + "\" as " +
                                want);
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::vector<int> parse_ints(const std::string& key, const std::string& s) {
    std::vector<int> out;
    if (s.empty()) return out;
    std::istringstream in(s);
    std::string part;
    while (std::getline(in, part, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            bad_value(key, s, "a comma-separated int list");
        }
    }
    return out;
}

}  // namespace

void KvConfig::set(const std::string& key, const std::string& value) {
    if (key.empty() || key.find_first_of(" =\t\n") != std::string::npos)
        throw std::invalid_argument("bad config key \"" + key + "\"");
    for (auto& [k, v] : entries)
        if (k == key) {
            v = value;
            return;
        }
    entries.emplace_back(key, value);
}

std::optional<std::string> KvConfig::get(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return v;
    return std::nullopt;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

int KvConfig::get_int(const std::string& key, int fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const int out = std::stoi(*v, &used);
        if (used != v->size()) throw std::invalid_argument(*v);
        return out;
    } catch (const std::exception&) {
        bad_value(key, *v, "an integer");
    }
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const std::uint64_t out = std::stoull(*v, &used);
        if (used != v->size()) throw std::invalid_argument(*v);
        return out;
    } catch (const std::exception&) {
        bad_value(key, *v, "an unsigned integer");
    }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double out = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument(*v);
        return out;
    } catch (const std::exception&) {
        bad_value(key, *v, "a number");
    }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    bad_value(key, *v, "a bool (true/false/1/0)");
}

void KvConfig::set_pair(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("expected key=value, got \"" + arg + "\"");
    set(arg.substr(0, eq), arg.substr(eq + 1));
}

KvConfig KvConfig::from_file(const std::string& path) {
    std::istringstream in(read_text_file(path));
    KvConfig cfg;
    std::string line;
    int lineno = 0;
    if (!std::getline(in, line) || line != kMagicLine)
        throw FormatError("config " + path + ":1: expected header \"" + kMagicLine + "\"");
    ++lineno;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos)
            throw FormatError("config " + path + ":" + std::to_string(lineno) +
                              ": expected \"key = value\", got \"" + line + "\"");
        cfg.set(line.substr(first, eq - first), line.substr(eq + 3));
    }
    return cfg;
}

void KvConfig::save(const std::string& path) const {
    std::ostringstream out;
    out << kMagicLine << "\n";
    for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
    write_text_file(path, out.str());
}

void KvConfig::apply_env() {
    const std::string prefix = kEnvPrefix;
    for (char** e = environ; e && *e; ++e) {
        const std::string entry = *e;
        if (entry.rfind(prefix, 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string key = entry.substr(prefix.size(), eq - prefix.size());
        std::string mapped;
        for (std::size_t i = 0; i < key.size(); ++i) {
            if (key[i] == '_' && i + 1 < key.size() && key[i + 1] == '_') {
                mapped += '.';
                ++i;
            } else {
                mapped += static_cast<char>(std::tolower(static_cast<unsigned char>(key[i])));
            }
        }
        set(mapped, entry.substr(eq + 1));
    }
}

std::string KvConfig::canonical_text() const {
    std::vector<std::pair<std::string, std::string>> sorted = entries;
    std::sort(sorted.begin(), sorted.end());
    std::string out;
    for (const auto& [k, v] : sorted) out += k + "=" + v + "\n";
    return out;
}

void RunConfig::validate() const {
    if (guidance < 0) throw std::invalid_argument("sample.guidance must be >= 0");
    if (sample_count < 1) throw std::invalid_argument("sample.count must be positive");
    if (train_steps < 1 || infer_steps < 1 || infer_steps > train_steps)
        throw std::invalid_argument("schedule: need 1 <= infer_steps <= train_steps");
    if (batch_size < 1 || prior_batch_size < 1)
        throw std::invalid_argument("batch sizes must be positive");
    if (lr <= 0) throw std::invalid_argument("train.lr must be positive");
    if (cond_dropout < 0 || cond_dropout > 1)
        throw std::invalid_argument("train.cond_dropout must lie in [0, 1]");
    if (ema_decay <= 0 || ema_decay >= 1)
        throw std::invalid_argument("train.ema_decay must lie in (0, 1)");
    if (checkpoint_every < 1 || log_every < 1)
        throw std::invalid_argument("train cadence values must be positive");
    if (griffin_lim_iters < 1) throw std::invalid_argument("vocoder.griffin_lim_iters must be positive");
    if (mel.n_mels != denoiser.n_mels || mel.clip_frames != denoiser.clip_frames)
        throw std::invalid_argument("mel grid " + std::to_string(mel.n_mels) + "x" +
                                    std::to_string(mel.clip_frames) +
                                    " does not match the denoiser input " +
                                    std::to_string(denoiser.n_mels) + "x" +
                                    std::to_string(denoiser.clip_frames));
    if (prior.embed_dim != denoiser.cond_dim)
        throw std::invalid_argument("prior.embed_dim " + std::to_string(prior.embed_dim) +
                                    " does not match denoiser.cond_dim " +
                                    std::to_string(denoiser.cond_dim));
    mel.validate();
    denoiser.validate();
    prior.validate();
}

RunConfig RunConfig::from_kv(const KvConfig& kv) {
    RunConfig c;
    const RunConfig base;  // defaults
    static const std::set<std::string> known = {
        "preset",
        "data.manifest", "run.out", "run.seed",
        "mel.sample_rate", "mel.hop", "mel.fft_size", "mel.n_mels", "mel.clip_frames",
        "mel.log_floor_db",
        "denoiser.base_channels", "denoiser.channel_multipliers", "denoiser.res_blocks_per_level",
        "denoiser.attention_resolutions", "denoiser.cond_dim", "denoiser.time_embed_dim",
        "denoiser.groups", "denoiser.heads",
        "schedule.train_steps", "schedule.infer_steps",
        "sample.guidance", "sample.count",
        "train.batch", "train.lr", "train.weight_decay", "train.cond_dropout", "train.ema_decay",
        "train.checkpoint_every", "train.log_every",
        "prior.n_layers", "prior.model_dim", "prior.n_heads", "prior.token_seq_len",
        "prior.vocab_size", "prior.mlp_ratio", "prior.train_steps", "prior.inference_steps",
        "prior.cfg_dropout", "prior.ema_decay", "prior.lr", "prior.weight_decay", "prior.batch",
        "prior.renorm_output", "prior.train_loop_steps",
        "embed.store", "embed.image_command", "embed.text_command", "embed.dim",
        "vocoder.griffin_lim_iters", "vocoder.command",
    };
    for (const auto& [k, v] : kv.entries)
        if (!known.count(k)) throw std::invalid_argument("unknown config key \"" + k + "\"");

    if (const auto p = kv.get("preset")) c = preset(*p);

    c.manifest = kv.get_string("data.manifest", c.manifest);
    c.out_dir = kv.get_string("run.out", c.out_dir);
    c.seed = kv.get_u64("run.seed", c.seed);

    c.mel.sample_rate = kv.get_int("mel.sample_rate", c.mel.sample_rate);
    c.mel.hop = kv.get_int("mel.hop", c.mel.hop);
    c.mel.fft_size = kv.get_int("mel.fft_size", c.mel.fft_size);
    c.mel.n_mels = kv.get_int("mel.n_mels", c.mel.n_mels);
    c.mel.clip_frames = kv.get_int("mel.clip_frames", c.mel.clip_frames);
    c.mel.log_floor_db = kv.get_double("mel.log_floor_db", c.mel.log_floor_db);

    c.denoiser.n_mels = c.mel.n_mels;
    c.denoiser.clip_frames = c.mel.clip_frames;
    c.denoiser.base_channels = kv.get_int("denoiser.base_channels", c.denoiser.base_channels);
    if (const auto v = kv.get("denoiser.channel_multipliers"))
        c.denoiser.channel_multipliers = parse_ints("denoiser.channel_multipliers", *v);
    c.denoiser.res_blocks_per_level =
        kv.get_int("denoiser.res_blocks_per_level", c.denoiser.res_blocks_per_level);
    if (const auto v = kv.get("denoiser.attention_resolutions"))
        c.denoiser.attention_resolutions = parse_ints("denoiser.attention_resolutions", *v);
    c.denoiser.cond_dim = kv.get_int("denoiser.cond_dim", c.denoiser.cond_dim);
    c.denoiser.time_embed_dim = kv.get_int("denoiser.time_embed_dim", c.denoiser.time_embed_dim);
    c.denoiser.groups = kv.get_int("denoiser.groups", c.denoiser.groups);
    c.denoiser.heads = kv.get_int("denoiser.heads", c.denoiser.heads);

    c.train_steps = kv.get_int("schedule.train_steps", c.train_steps);
    c.infer_steps = kv.get_int("schedule.infer_steps", c.infer_steps);

    c.guidance = kv.get_double("sample.guidance", c.guidance);
    c.sample_count = kv.get_int("sample.count", c.sample_count);

    c.batch_size = kv.get_int("train.batch", c.batch_size);
    c.lr = kv.get_double("train.lr", c.lr);
    c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
    c.cond_dropout = kv.get_double("train.cond_dropout", c.cond_dropout);
    c.ema_decay = kv.get_double("train.ema_decay", c.ema_decay);
    c.checkpoint_every = kv.get_int("train.checkpoint_every", c.checkpoint_every);
    c.log_every = kv.get_int("train.log_every", c.log_every);

    c.prior.n_layers = kv.get_int("prior.n_layers", c.prior.n_layers);
    c.prior.model_dim = kv.get_int("prior.model_dim", c.prior.model_dim);
    c.prior.n_heads = kv.get_int("prior.n_heads", c.prior.n_heads);
    c.prior.token_seq_len = kv.get_int("prior.token_seq_len", c.prior.token_seq_len);
    c.prior.embed_dim = c.denoiser.cond_dim;
    c.prior.vocab_size = kv.get_int("prior.vocab_size", c.prior.vocab_size);
    c.prior.mlp_ratio = kv.get_int("prior.mlp_ratio", c.prior.mlp_ratio);
    c.prior.train_steps_T = kv.get_int("prior.train_steps", c.prior.train_steps_T);
    c.prior.inference_steps = kv.get_int("prior.inference_steps", c.prior.inference_steps);
    c.prior.cfg_dropout = kv.get_double("prior.cfg_dropout", c.prior.cfg_dropout);
    c.prior.ema_decay = kv.get_double("prior.ema_decay", c.prior.ema_decay);
    c.prior.lr = kv.get_double("prior.lr", c.prior.lr);
    c.prior.weight_decay = kv.get_double("prior.weight_decay", c.prior.weight_decay);
    c.prior.batch = kv.get_int("prior.batch", c.prior.batch);
    c.prior.renorm_output = kv.get_bool("prior.renorm_output", c.prior.renorm_output);
    c.prior_train_steps = kv.get_int("prior.train_loop_steps", c.prior_train_steps);
    c.prior_batch_size = c.prior.batch;

    c.embedding_store = kv.get_string("embed.store", c.embedding_store);
    c.image_encoder_command = kv.get_string("embed.image_command", c.image_encoder_command);
    c.text_encoder_command = kv.get_string("embed.text_command", c.text_encoder_command);
    c.encoder_dim = kv.get_int("embed.dim", c.encoder_dim);

    c.griffin_lim_iters = kv.get_int("vocoder.griffin_lim_iters", c.griffin_lim_iters);
    c.vocoder_command = kv.get_string("vocoder.command", c.vocoder_command);

    (void)base;
    return c;
}

KvConfig RunConfig::to_kv() const {
    KvConfig kv;
    kv.set("data.manifest", manifest);
    kv.set("run.out", out_dir);
    kv.set("run.seed", std::to_string(seed));
    kv.set("mel.sample_rate", std::to_string(mel.sample_rate));
    kv.set("mel.hop", std::to_string(mel.hop));
    kv.set("mel.fft_size", std::to_string(mel.fft_size));
    kv.set("mel.n_mels", std::to_string(mel.n_mels));
    kv.set("mel.clip_frames", std::to_string(mel.clip_frames));
    kv.set("mel.log_floor_db", fmt_double(mel.log_floor_db));
    kv.set("denoiser.base_channels", std::to_string(denoiser.base_channels));
    kv.set("denoiser.channel_multipliers", join_ints(denoiser.channel_multipliers));
    kv.set("denoiser.res_blocks_per_level", std::to_string(denoiser.res_blocks_per_level));
    kv.set("denoiser.attention_resolutions", join_ints(denoiser.attention_resolutions));
    kv.set("denoiser.cond_dim", std::to_string(denoiser.cond_dim));
    kv.set("denoiser.time_embed_dim", std::to_string(denoiser.time_embed_dim));
    kv.set("denoiser.groups", std::to_string(denoiser.groups));
    kv.set("denoiser.heads", std::to_string(denoiser.heads));
    kv.set("schedule.train_steps", std::to_string(train_steps));
    kv.set("schedule.infer_steps", std::to_string(infer_steps));
    kv.set("sample.guidance", fmt_double(guidance));
    kv.set("sample.count", std::to_string(sample_count));
    kv.set("train.batch", std::to_string(batch_size));
    kv.set("train.lr", fmt_double(lr));
    kv.set("train.weight_decay", fmt_double(weight_decay));
    kv.set("train.cond_dropout", fmt_double(cond_dropout));
    kv.set("train.ema_decay", fmt_double(ema_decay));
    kv.set("train.checkpoint_every", std::to_string(checkpoint_every));
    kv.set("train.log_every", std::to_string(log_every));
    kv.set("prior.n_layers", std::to_string(prior.n_layers));
    kv.set("prior.model_dim", std::to_string(prior.model_dim));
    kv.set("prior.n_heads", std::to_string(prior.n_heads));
    kv.set("prior.token_seq_len", std::to_string(prior.token_seq_len));
    kv.set("prior.vocab_size", std::to_string(prior.vocab_size));
    kv.set("prior.mlp_ratio", std::to_string(prior.mlp_ratio));
    kv.set("prior.train_steps", std::to_string(prior.train_steps_T));
    kv.set("prior.inference_steps", std::to_string(prior.inference_steps));
    kv.set("prior.cfg_dropout", fmt_double(prior.cfg_dropout));
    kv.set("prior.ema_decay", fmt_double(prior.ema_decay));
    kv.set("prior.lr", fmt_double(prior.lr));
    kv.set("prior.weight_decay", fmt_double(prior.weight_decay));
    kv.set("prior.batch", std::to_string(prior.batch));
    kv.set("prior.renorm_output", prior.renorm_output ? "true" : "false");
    kv.set("prior.train_loop_steps", std::to_string(prior_train_steps));
    kv.set("embed.store", embedding_store);
    kv.set("embed.image_command", image_encoder_command);
    kv.set("embed.text_command", text_encoder_command);
    kv.set("embed.dim", std::to_string(encoder_dim));
    kv.set("vocoder.griffin_lim_iters", std::to_string(griffin_lim_iters));
    kv.set("vocoder.command", vocoder_command);
    return kv;
}

std::uint64_t RunConfig::config_hash() const {
    const std::string text = to_kv().canonical_text();
    return fnv1a64(text.data(), text.size());
}

RunConfig preset(const std::string& name) {
    RunConfig c;  // defaults are the desk preset
    if (name == "desk") return c;
    if (name == "toy") {
        c.mel.n_mels = 32;
        c.mel.clip_frames = 32;
        c.denoiser.n_mels = 32;
        c.denoiser.clip_frames = 32;
        c.denoiser.base_channels = 16;
        c.denoiser.channel_multipliers = {1, 2};
        c.denoiser.attention_resolutions = {8};
        c.denoiser.time_embed_dim = 64;
        c.denoiser.heads = 2;
        c.train_steps = 1000;
        c.infer_steps = 25;
        c.sample_count = 48;
        c.batch_size = 8;
        c.lr = 2e-3;
        c.prior.n_layers = 2;
        c.prior.model_dim = 64;
        c.prior.n_heads = 4;
        c.prior.token_seq_len = 8;
        c.prior.vocab_size = 256;
        c.prior.mlp_ratio = 2;
        c.prior.train_steps_T = 100;
        c.prior.inference_steps = 25;
        c.prior.lr = 2e-3;
        c.prior.ema_decay = 0.999;
        c.prior_train_steps = 2000;
        c.griffin_lim_iters = 48;
        return c;
    }
    if (name == "full")
        throw std::invalid_argument(
            "the full-scale settings need GPUs and real corpora; start from \"desk\" and raise "
            "schedule.train_steps / model sizes in config instead");
    throw std::invalid_argument("unknown preset \"" + name + "\" (try toy or desk)");
}

}  // namespace melbridge::pipeline
