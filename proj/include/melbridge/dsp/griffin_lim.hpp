#pragma once

#include <string>

#include "melbridge/dsp/audio.hpp"
#include "melbridge/dsp/mel.hpp"

namespace melbridge::dsp {

/// Phase-reconstruction fallback vocoder. Denormalizes the mel, lifts it to
/// a linear spectrum by solving a non-negative least-squares inverse of the
/// filterbank per frame, then runs classic Griffin-Lim from a zero-phase
/// start. Deterministic; output clamped to [-1, 1], length n_frames * hop.
AudioClip invert_mel_griffin_lim(const MelSpectrogram& mel, int iterations);

/// ||A - B||_F / ||B||_F over linear mel magnitudes; the round-trip error
/// measure used by the inversion tests.
double mel_spectral_convergence(const MelSpectrogram& test, const MelSpectrogram& ref);

/// Mel-to-audio backend. kind "builtin" runs Griffin-Lim in-process; kind
/// "external" hands the mel to another program through the MEL1 file format:
/// the command template's {mel} and {wav} placeholders are substituted with
/// temp-file paths and the command must write a 16-bit mono WAV to {wav}.
struct VocoderBackend {
    std::string kind = "builtin";
    int griffin_lim_iterations = 64;
    std::string command;  // external only

    static VocoderBackend builtin(int iterations = 64) {
        return {"builtin", iterations, ""};
    }
    static VocoderBackend external(std::string cmd) {
        return {"external", 0, std::move(cmd)};
    }
};

/// Delegates to the selected backend. Never silently substitutes one
/// backend for another: an unavailable external backend raises an error
/// naming it and pointing at the builtin fallback.
AudioClip vocode(const MelSpectrogram& mel, const VocoderBackend& backend);

}  // namespace melbridge::dsp
