#pragma once

#include <string>
#include <vector>

#include "melbridge/dsp/audio.hpp"

namespace melbridge::dsp {

/// Mel analysis settings. Defaults follow the 16 kHz / hop 512 / FFT 2048 /
/// 64-band setup, giving 64 frames for a 2.048 s clip.
struct MelConfig {
    int sample_rate = 16000;
    int hop = 512;
    int fft_size = 2048;
    int n_mels = 64;
    int clip_frames = 64;
    /// Log-mel clamp range: values live in [log_floor_db, 0] dB, with 0 dB
    /// anchored to a full-scale sine via window-sum magnitude scaling.
    double log_floor_db = -80.0;
    double norm_lo = -1.0;
    double norm_hi = 1.0;

    double clip_duration_s() const {
        return static_cast<double>(clip_frames) * hop / sample_rate;
    }
    std::size_t clip_samples() const {
        return static_cast<std::size_t>(clip_frames) * static_cast<std::size_t>(hop);
    }
    /// Throws std::invalid_argument when inconsistent.
    void validate() const;
};

/// Log-mel matrix normalized to [norm_lo, norm_hi]; the diffusion state
/// variable. values are row-major, band m at values[m * n_frames + f].
struct MelSpectrogram {
    std::vector<float> values;
    int n_mels = 0;
    int n_frames = 0;
    MelConfig config;

    float& at(int m, int f) { return values[static_cast<std::size_t>(m) * n_frames + f]; }
    float at(int m, int f) const { return values[static_cast<std::size_t>(m) * n_frames + f]; }
    void validate() const;
};

// Slaney mel scale (linear below 1 kHz, log above).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Slaney-normalized triangular filterbank spanning 0 Hz to Nyquist,
/// n_mels x n_bins row-major.
std::vector<float> mel_filterbank(const MelConfig& cfg);

/// Band center frequencies in Hz (the triangle peaks), size n_mels.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

/// STFT -> mel filterbank -> log compression clamped at log_floor_db ->
/// affine map onto [norm_lo, norm_hi]. Deterministic.
MelSpectrogram compute_mel(const AudioClip& clip, const MelConfig& cfg);

// Normalized <-> dB conversions; exact inverses away from the floor clamp.
float normalize_db(double db, const MelConfig& cfg);
double denormalize_db(float v, const MelConfig& cfg);
std::vector<float> denormalized_db(const MelSpectrogram& mel);

/// Mel exchange file used by the external-vocoder seam:
/// header {magic "MEL1", u32 n_mels, u32 n_frames, u32 sample_rate, u32 hop}
/// then row-major f32 little-endian denormalized log-mel (dB) values.
void write_mel_file(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram read_mel_file(const std::string& path, const MelConfig& cfg);

}  // namespace melbridge::dsp
