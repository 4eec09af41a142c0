#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "melbridge/nn/adamw.hpp"
#include "melbridge/nn/param.hpp"

namespace melbridge::nn {

/// Checkpoint sidecar data: which model family wrote it, its config as an
/// opaque JSON blob, the training step counter, and the training RNG state
/// so a resumed run replays the exact same stream.
struct CheckpointMeta {
    std::string kind;
    std::string config_json;
    std::uint64_t step = 0;
    bool has_rng = false;
    std::array<std::uint64_t, 4> rng_state{};
};

/// Versioned binary container: header + payload hash, named shape-tagged
/// f32 parameter tensors, optional optimizer moments and EMA shadow (both
/// f64). Little-endian throughout.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore<float>& ps, const AdamW<float>* opt = nullptr,
                     const Ema<float>* ema = nullptr);

/// Loads weights (and optimizer/EMA state when requested and present) into a
/// finalized store with the same parameter layout; name or shape mismatches
/// and payload corruption raise FormatError.
CheckpointMeta load_checkpoint(const std::string& path, ParamStore<float>& ps,
                               AdamW<float>* opt = nullptr, Ema<float>* ema = nullptr);

/// Header-only read: kind, config, step; no model required.
CheckpointMeta read_checkpoint_meta(const std::string& path);

}  // namespace melbridge::nn
