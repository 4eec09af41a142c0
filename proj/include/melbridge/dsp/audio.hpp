#pragma once

#include <string>
#include <vector>

namespace melbridge::dsp {

/// Mono waveform, amplitudes nominally in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = 16000;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

/// Throws std::invalid_argument on NaN/Inf samples, non-positive rate or
/// an empty clip.
void validate(const AudioClip& clip);

double rms(const AudioClip& clip);

/// 16-bit PCM little-endian mono WAV. Samples are clamped to [-1, 1] on
/// write. Readers accept any mono 16-bit PCM file and take the sample rate
/// from the header; unknown chunks are skipped.
void write_wav(const std::string& path, const AudioClip& clip);
AudioClip read_wav(const std::string& path);

}  // namespace melbridge::dsp
