#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "melbridge/diffusion/denoiser.hpp"
#include "melbridge/dsp/mel.hpp"
#include "melbridge/prior/model.hpp"

namespace melbridge::pipeline {

/// Flat key/value configuration. Keys use dotted section prefixes
/// ("schedule.train_steps"); values are strings parsed on demand. Sources
/// stack: file, then environment (MELBRIDGE_SCHEDULE__TRAIN_STEPS maps to
/// schedule.train_steps), then explicit --set pairs; later wins.
struct KvConfig {
    std::vector<std::pair<std::string, std::string>> entries;

    void set(const std::string& key, const std::string& value);
    std::optional<std::string> get(const std::string& key) const;

    // Typed lookups; throw std::invalid_argument naming the key on bad parses.
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// "key=value" (as in --set); throws without exactly one '='... rest is value.
    void set_pair(const std::string& arg);

    /// First line "melbridge config v1", then "key = value" lines; '#'
    /// comments and blank lines ignored.
    static KvConfig from_file(const std::string& path);
    void save(const std::string& path) const;

    /// Environment overrides: MELBRIDGE_<KEY> where '.' is written "__",
    /// case-insensitive on the key part.
    void apply_env();

    std::string canonical_text() const;  ///< sorted key=value dump, for hashing
};

inline constexpr const char* kEnvPrefix = "MELBRIDGE_";

/// Everything one run needs. Defaults are the desk-scale settings; presets
/// fill the fields wholesale and --set/env tweak them.
struct RunConfig {
    std::string manifest;  ///< data.manifest
    std::string out_dir;   ///< run.out
    std::uint64_t seed = 0;

    dsp::MelConfig mel;
    diffusion::DenoiserConfig denoiser;
    prior::PriorConfig prior;

    int train_steps = 4000;
    int infer_steps = 1000;

    double guidance = 1.5;
    int sample_count = 512;

    int batch_size = 8;
    double lr = 2e-4;
    double weight_decay = 0.0;
    double cond_dropout = 0.1;
    double ema_decay = 0.999;
    int checkpoint_every = 1000;
    int log_every = 50;

    int prior_train_steps = 4000;
    int prior_batch_size = 32;

    std::string embedding_store;  ///< embed.store: precomputed EMB1 file
    std::string image_encoder_command;
    std::string text_encoder_command;
    int encoder_dim = 0;  ///< expected adapter output dim, 0 = accept any

    int griffin_lim_iters = 64;
    std::string vocoder_command;  ///< external vocoder; empty = builtin Griffin-Lim

    void validate() const;

    /// Applies every recognized key; unknown keys throw so typos surface.
    static RunConfig from_kv(const KvConfig& kv);
    KvConfig to_kv() const;
    std::uint64_t config_hash() const;
};

/// Named starting points ("toy" = 32x32 mel + small nets, "desk" = 64x64
/// defaults). Throws on unknown names.
RunConfig preset(const std::string& name);

}  // namespace melbridge::pipeline
