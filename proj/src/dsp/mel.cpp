#include "melbridge/dsp/mel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "melbridge/core/io.hpp"
#include "melbridge/dsp/stft.hpp"

namespace melbridge::dsp {

void MelConfig::validate() const {
    if (sample_rate <= 0) throw std::invalid_argument("mel: sample_rate must be positive");
    if (hop <= 0) throw std::invalid_argument("mel: hop must be positive");
    if (fft_size < hop) throw std::invalid_argument("mel: fft_size must be >= hop");
    if (fft_size & (fft_size - 1))
        throw std::invalid_argument("mel: fft_size must be a power of two");
    if (n_mels < 1 || n_mels > fft_size / 2 + 1)
        throw std::invalid_argument("mel: n_mels must be in [1, fft_size/2+1]");
    if (clip_frames < 1) throw std::invalid_argument("mel: clip_frames must be >= 1");
    if (!(log_floor_db < 0.0)) throw std::invalid_argument("mel: log_floor_db must be < 0");
    if (!(norm_hi > norm_lo)) throw std::invalid_argument("mel: empty norm_range");
}

void MelSpectrogram::validate() const {
    if (n_mels != config.n_mels)
        throw std::invalid_argument("mel: band count does not match config");
    if (values.size() != static_cast<std::size_t>(n_mels) * n_frames)
        throw std::invalid_argument("mel: value buffer size mismatch");
    const float lo = static_cast<float>(config.norm_lo);
    const float hi = static_cast<float>(config.norm_hi);
    for (float v : values)
        if (!(v >= lo && v <= hi))
            throw std::invalid_argument("mel: value outside norm_range");
}

double hz_to_mel(double hz) {
    if (hz < 1000.0) return hz * 3.0 / 200.0;
    return 15.0 + std::log(hz / 1000.0) * 27.0 / std::log(6.4);
}

double mel_to_hz(double mel) {
    if (mel < 15.0) return mel * 200.0 / 3.0;
    return 1000.0 * std::exp((mel - 15.0) * std::log(6.4) / 27.0);
}

static std::vector<double> mel_edges(const MelConfig& cfg) {
    // n_mels + 2 edge frequencies from 0 Hz to Nyquist, uniform in mel.
    const double mel_max = hz_to_mel(cfg.sample_rate / 2.0);
    std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / (cfg.n_mels + 1));
    return edges;
}

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
    const auto edges = mel_edges(cfg);
    return {edges.begin() + 1, edges.end() - 1};
}

std::vector<float> mel_filterbank(const MelConfig& cfg) {
    cfg.validate();
    const int bins = cfg.fft_size / 2 + 1;
    const auto f = mel_edges(cfg);
    std::vector<float> fb(static_cast<std::size_t>(cfg.n_mels) * bins, 0.0f);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double lo = f[static_cast<std::size_t>(m)];
        const double ctr = f[static_cast<std::size_t>(m) + 1];
        const double hi = f[static_cast<std::size_t>(m) + 2];
        const double norm = 2.0 / (hi - lo);  // Slaney area normalization
        for (int b = 0; b < bins; ++b) {
            const double freq = static_cast<double>(b) * cfg.sample_rate / cfg.fft_size;
            const double up = (freq - lo) / (ctr - lo);
            const double down = (hi - freq) / (hi - ctr);
            const double w = std::max(0.0, std::min(up, down));
            fb[static_cast<std::size_t>(m) * bins + b] = static_cast<float>(w * norm);
        }
    }
    return fb;
}

float normalize_db(double db, const MelConfig& cfg) {
    const double clamped = std::clamp(db, cfg.log_floor_db, 0.0);
    const double t = (clamped - cfg.log_floor_db) / (0.0 - cfg.log_floor_db);
    return static_cast<float>(cfg.norm_lo + t * (cfg.norm_hi - cfg.norm_lo));
}

double denormalize_db(float v, const MelConfig& cfg) {
    const double t = (static_cast<double>(v) - cfg.norm_lo) / (cfg.norm_hi - cfg.norm_lo);
    return cfg.log_floor_db + t * (0.0 - cfg.log_floor_db);
}

std::vector<float> denormalized_db(const MelSpectrogram& mel) {
    std::vector<float> db(mel.values.size());
    for (std::size_t i = 0; i < db.size(); ++i)
        db[i] = static_cast<float>(denormalize_db(mel.values[i], mel.config));
    return db;
}

MelSpectrogram compute_mel(const AudioClip& clip, const MelConfig& cfg) {
    cfg.validate();
    validate(clip);
    if (clip.sample_rate != cfg.sample_rate)
        throw std::invalid_argument("mel: clip sample rate " + std::to_string(clip.sample_rate) +
                                    " does not match config " + std::to_string(cfg.sample_rate));
    if (clip.samples.size() < static_cast<std::size_t>(cfg.fft_size))
        throw std::invalid_argument("mel: clip shorter than one analysis frame");

    const Stft stft(cfg.fft_size, cfg.hop);
    const auto spec = stft.analyze(clip.samples);
    const int frames = Stft::n_frames(clip.samples.size(), cfg.hop);
    const int bins = stft.n_bins();

    // Magnitudes scaled by 2/window_sum so a full-scale sine peaks near 0 dB.
    const double scale = 2.0 / stft.window_sum();
    const auto fb = mel_filterbank(cfg);

    MelSpectrogram mel;
    mel.config = cfg;
    mel.n_mels = cfg.n_mels;
    mel.n_frames = frames;
    mel.values.resize(static_cast<std::size_t>(cfg.n_mels) * frames);
    std::vector<double> power(static_cast<std::size_t>(bins));
    for (int f = 0; f < frames; ++f) {
        for (int b = 0; b < bins; ++b) {
            const auto c = spec[static_cast<std::size_t>(f) * bins + b];
            const double mag = std::abs(std::complex<double>(c)) * scale;
            power[static_cast<std::size_t>(b)] = mag * mag;
        }
        for (int m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            const float* row = fb.data() + static_cast<std::size_t>(m) * bins;
            for (int b = 0; b < bins; ++b) acc += row[b] * power[static_cast<std::size_t>(b)];
            const double db = 10.0 * std::log10(std::max(acc, 1e-12));
            mel.at(m, f) = normalize_db(db, cfg);
        }
    }
    return mel;
}

void write_mel_file(const std::string& path, const MelSpectrogram& mel) {
    mel.validate();
    const auto db = denormalized_db(mel);
    ByteWriter w(path);
    w.magic("MEL1");
    w.u32(static_cast<std::uint32_t>(mel.n_mels));
    w.u32(static_cast<std::uint32_t>(mel.n_frames));
    w.u32(static_cast<std::uint32_t>(mel.config.sample_rate));
    w.u32(static_cast<std::uint32_t>(mel.config.hop));
    w.f32_array(db.data(), db.size());
    w.close();
}

MelSpectrogram read_mel_file(const std::string& path, const MelConfig& cfg) {
    ByteReader r(path);
    r.expect_magic("MEL1");
    const std::uint32_t n_mels = r.u32();
    const std::uint32_t n_frames = r.u32();
    const std::uint32_t sr = r.u32();
    const std::uint32_t hop = r.u32();
    if (n_mels != static_cast<std::uint32_t>(cfg.n_mels))
        r.fail("band count " + std::to_string(n_mels) + " does not match config", 4);
    if (sr != static_cast<std::uint32_t>(cfg.sample_rate) ||
        hop != static_cast<std::uint32_t>(cfg.hop))
        r.fail("sample_rate/hop do not match config", 12);

    MelSpectrogram mel;
    mel.config = cfg;
    mel.n_mels = static_cast<int>(n_mels);
    mel.n_frames = static_cast<int>(n_frames);
    mel.values.resize(static_cast<std::size_t>(n_mels) * n_frames);
    for (auto& v : mel.values) v = normalize_db(r.f32(), cfg);
    return mel;
}

}  // namespace melbridge::dsp
