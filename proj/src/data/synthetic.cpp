#include "melbridge/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include "melbridge/core/rng.hpp"
#include "melbridge/dsp/audio.hpp"

namespace fs = std::filesystem;

namespace melbridge::data {

namespace {

constexpr const char* kLabels[] = {"bell", "flute",   "organ", "buzz",  "chime", "horn",
                                   "pluck", "hum",     "reed",  "glass", "drone", "whistle",
                                   "ping",  "growl",   "purr",  "click"};
constexpr int kNamedLabels = static_cast<int>(std::size(kLabels));

constexpr double kDecays[] = {0.3, 0.5, 0.65, 0.8};
constexpr double kAttacks[] = {0.005, 0.04, 0.12, 0.25};
constexpr double kReleases[] = {0.25, 0.02, 0.1, 0.05};

}  // namespace

std::string synthetic_label(int class_index) {
    if (class_index < 0) throw std::invalid_argument("negative class index");
    if (class_index < kNamedLabels) return kLabels[class_index];
    return "tone" + std::to_string(class_index);
}

ToneSpec synthetic_tone(int class_index) {
    if (class_index < 0) throw std::invalid_argument("negative class index");
    ToneSpec t;
    // Half-octave spacing keeps neighbors several mel bands apart even after
    // the per-example +-2% frequency jitter.
    t.f0 = 180.0 * std::pow(2.0, class_index / 2.0);
    t.harmonic_decay = kDecays[class_index % 4];
    t.harmonic_step = 1 + (class_index / 4) % 2;
    t.n_harmonics = 4 + class_index % 3 * 2;
    t.attack_s = kAttacks[class_index % 4];
    t.release_s = kReleases[(class_index + 1) % 4];
    return t;
}

std::vector<double> render_tone(const ToneSpec& tone, double freq_mult, double gain,
                                double seconds, int sample_rate) {
    if (seconds <= 0 || sample_rate <= 0)
        throw std::invalid_argument("render_tone: nonpositive duration or rate");
    const std::size_t n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
    const double f0 = tone.f0 * freq_mult;
    const double nyquist = 0.45 * sample_rate;

    std::vector<double> out(n, 0.0);
    double peak = 0;
    constexpr double kDetuneW[] = {0.25, 0.5, 0.25};
    for (int h = 0; h < tone.n_harmonics; ++h) {
        const double f = f0 * (1 + h * tone.harmonic_step);
        // inclusion keyed to the unjittered frequency so a +-2% freq_mult
        // cannot toggle the top harmonic in and out between examples
        if (tone.f0 * (1 + h * tone.harmonic_step) >= nyquist) break;
        const double w = std::pow(tone.harmonic_decay, h);
        for (int c = -1; c <= 1; ++c) {
            const double omega =
                2.0 * std::numbers::pi * f * (1.0 + c * tone.partial_width) / sample_rate;
            const double cw = w * kDetuneW[c + 1];
            for (std::size_t i = 0; i < n; ++i)
                out[i] += cw * std::sin(omega * static_cast<double>(i));
        }
        peak += w;
    }
    if (peak <= 0) throw std::invalid_argument("render_tone: fundamental above Nyquist");

    const double attack = std::min(tone.attack_s, 0.25 * seconds);
    const double release = std::min(tone.release_s, 0.25 * seconds);
    const std::size_t na = static_cast<std::size_t>(attack * sample_rate);
    const std::size_t nr = static_cast<std::size_t>(release * sample_rate);
    const double scale = tone.amp * gain / peak;
    for (std::size_t i = 0; i < n; ++i) {
        double env = 1.0;
        if (na > 0 && i < na) env = static_cast<double>(i) / static_cast<double>(na);
        if (nr > 0 && i >= n - nr)
            env = std::min(env, static_cast<double>(n - 1 - i) / static_cast<double>(nr));
        out[i] *= scale * env;
    }
    return out;
}

void SyntheticDatasetSpec::validate() const {
    if (n_classes < 2)
        throw std::invalid_argument("a class-conditional dataset needs at least 2 classes, got " +
                                    std::to_string(n_classes));
    if (examples_per_class < 1) throw std::invalid_argument("examples_per_class must be positive");
    if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
    if (clip_seconds <= 0) throw std::invalid_argument("clip_seconds must be positive");
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw std::invalid_argument("train_ratio must lie in (0, 1)");
    if (out_dir.empty()) throw std::invalid_argument("synthetic dataset needs an out_dir");
}

std::string synthetic_frame_ref(int class_index, int example_index) {
    return "synthetic:class=" + std::to_string(class_index) +
           ";example=" + std::to_string(example_index);
}

std::pair<int, int> parse_synthetic_frame_ref(const std::string& ref) {
    int k = -1, i = -1;
    if (std::sscanf(ref.c_str(), "synthetic:class=%d;example=%d", &k, &i) != 2 || k < 0 || i < 0)
        throw std::invalid_argument("not a synthetic frame descriptor: " + ref);
    return {k, i};
}

DatasetManifest make_synthetic_dataset(const SyntheticDatasetSpec& spec) {
    spec.validate();
    fs::create_directories(fs::path(spec.out_dir) / "audio");

    DatasetManifest m;
    m.source = "synthetic";
    m.seed = spec.seed;
    const Rng root(spec.seed);

    for (int k = 0; k < spec.n_classes; ++k) {
        const std::string label = synthetic_label(k);
        m.labels.push_back(label);
        const ToneSpec tone = synthetic_tone(k);
        for (int i = 0; i < spec.examples_per_class; ++i) {
            Rng rng = root.fork(static_cast<std::uint64_t>(k)).fork(static_cast<std::uint64_t>(i));
            const double freq_mult = 1.0 + 0.04 * (rng.uniform() - 0.5);  // +-2%
            const double gain = std::pow(10.0, 6.0 * (rng.uniform() - 0.5) / 20.0);  // +-3 dB

            const auto samples =
                render_tone(tone, freq_mult, gain, spec.clip_seconds, spec.sample_rate);
            dsp::AudioClip clip;
            clip.sample_rate = spec.sample_rate;
            clip.samples.assign(samples.begin(), samples.end());

            char name[64];
            std::snprintf(name, sizeof name, "%s_%03d.wav", label.c_str(), i);
            const std::string rel = std::string("audio/") + name;
            dsp::write_wav((fs::path(spec.out_dir) / rel).string(), clip);

            Example e;
            e.id = label + "_" + std::to_string(i);
            e.frame_ref = synthetic_frame_ref(k, i);
            e.audio_ref = rel;
            e.label = label;
            e.split = "unsplit";
            m.examples.push_back(std::move(e));
        }
    }

    split(m, spec.train_ratio, spec.seed);
    save_manifest((fs::path(spec.out_dir) / kManifestName).string(), m);
    return m;
}

}  // namespace melbridge::data
