#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "melbridge/data/dataset.hpp"

namespace melbridge::data {

/// Harmonic tone family for one synthetic class. Classes are separated by
/// fundamental (geometric spacing), spectral shape, and envelope so that even
/// coarse spectral statistics tell them apart.
struct ToneSpec {
    double f0 = 220;            ///< fundamental, Hz
    double harmonic_decay = 0.5; ///< harmonic h gets amplitude decay^(h-1)
    int harmonic_step = 1;      ///< 1 = all harmonics, 2 = odd only
    int n_harmonics = 6;
    double attack_s = 0.02;
    double release_s = 0.1;
    double amp = 0.25;          ///< peak amplitude before per-example gain
    /// Each partial is a 3-component cluster detuned by +-partial_width so the
    /// mel response stays smooth under per-example frequency jitter.
    double partial_width = 0.04;
};

std::string synthetic_label(int class_index);
ToneSpec synthetic_tone(int class_index);

/// Deterministic render; freq_mult and gain carry the per-example jitter.
/// Attack/release are shortened if the clip is too small to hold them.
std::vector<double> render_tone(const ToneSpec& tone, double freq_mult, double gain,
                                double seconds, int sample_rate);

struct SyntheticDatasetSpec {
    int n_classes = 8;
    int examples_per_class = 64;
    std::uint64_t seed = 0;
    int sample_rate = 16000;
    double clip_seconds = 2.048;
    double train_ratio = 0.9;
    std::string out_dir;

    void validate() const;
};

inline constexpr const char* kManifestName = "manifest.tsv";

/// Writes one WAV per example under out_dir/audio, applies the train/test
/// split, and saves the manifest as out_dir/manifest.tsv. Per-example jitter
/// (frequency within ±2%, gain within ±3 dB) comes from seed.fork(class)
/// .fork(example), so the same spec regenerates byte-identical files.
DatasetManifest make_synthetic_dataset(const SyntheticDatasetSpec& spec);

/// Frame descriptors for synthetic data look like "synthetic:class=3;example=17".
std::string synthetic_frame_ref(int class_index, int example_index);
std::pair<int, int> parse_synthetic_frame_ref(const std::string& ref);

}  // namespace melbridge::data
