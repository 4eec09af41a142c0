#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "helpers.hpp"
#include "melbridge/core/io.hpp"
#include "melbridge/core/rng.hpp"
#include "melbridge/dsp/audio.hpp"
#include "melbridge/dsp/griffin_lim.hpp"
#include "melbridge/dsp/mel.hpp"
#include "melbridge/dsp/stft.hpp"

using namespace melbridge;
using namespace melbridge::dsp;

namespace {

AudioClip sine_clip(double freq_hz, double amplitude, std::size_t n_samples,
                    int sample_rate = 16000) {
    AudioClip c;
    c.sample_rate = sample_rate;
    c.samples.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
        c.samples[i] = static_cast<float>(
            amplitude * std::sin(2.0 * std::numbers::pi * freq_hz *
                                 static_cast<double>(i) / sample_rate));
    return c;
}

AudioClip noise_clip(double amplitude, std::size_t n_samples, std::uint64_t seed) {
    Rng rng(seed);
    AudioClip c;
    c.samples.resize(n_samples);
    for (auto& s : c.samples)
        s = static_cast<float>(amplitude * (2.0 * rng.uniform() - 1.0));
    return c;
}

}  // namespace

TEST_SUITE("dsp") {

TEST_CASE("wav: write/read round trip preserves rate and samples to 16-bit precision") {
    testutil::TempDir td;
    auto clip = noise_clip(0.8, 4000, 123);
    clip.sample_rate = 16000;
    const auto p = td.file("clip.wav");
    write_wav(p, clip);
    const auto back = read_wav(p);
    REQUIRE(back.sample_rate == clip.sample_rate);
    REQUIRE(back.samples.size() == clip.samples.size());
    float max_err = 0.0f;
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
        max_err = std::max(max_err, std::abs(back.samples[i] - clip.samples[i]));
    CHECK(max_err <= 1.0f / 32767.0f + 1e-6f);

    // once quantized, a second trip is bitwise
    const auto p2 = td.file("clip2.wav");
    write_wav(p2, back);
    const auto back2 = read_wav(p2);
    CHECK(back2.samples == back.samples);
}

TEST_CASE("wav: out-of-range samples are clamped on write") {
    testutil::TempDir td;
    AudioClip clip;
    clip.samples = {2.0f, -3.0f, 0.0f};
    const auto p = td.file("clamp.wav");
    write_wav(p, clip);
    const auto back = read_wav(p);
    CHECK(back.samples[0] == doctest::Approx(1.0f).epsilon(1e-4));
    CHECK(back.samples[1] == doctest::Approx(-1.0f).epsilon(1e-4));
    CHECK(back.samples[2] == 0.0f);
}

TEST_CASE("wav: non-wav input is rejected") {
    testutil::TempDir td;
    const auto p = td.file("junk.bin");
    write_text_file(p, "this is not a wav file at all");
    CHECK_THROWS_AS(read_wav(p), FormatError);
    CHECK_THROWS(read_wav(td.file("missing.wav")));
}

TEST_CASE("audio: validation and rms") {
    AudioClip c = sine_clip(100.0, 1.0, 16000);
    CHECK_NOTHROW(validate(c));
    CHECK(rms(c) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-3));
    CHECK(c.duration_s() == doctest::Approx(1.0));

    AudioClip empty;
    CHECK_THROWS_AS(validate(empty), std::invalid_argument);
    c.samples[5] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c.samples[5] = 0.0f;
    c.sample_rate = 0;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
}

TEST_CASE("fft: matches a naive dft and inverts exactly") {
    Rng rng(7);
    const std::size_t n = 64;
    std::vector<std::complex<float>> a(n);
    for (auto& x : a) x = {static_cast<float>(rng.normal()), static_cast<float>(rng.normal())};
    const auto orig = a;

    // naive O(n^2) reference in double
    std::vector<std::complex<double>> ref(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) / n;
            acc += std::complex<double>(orig[t]) * std::polar(1.0, ang);
        }
        ref[k] = acc;
    }

    fft(a, false);
    for (std::size_t k = 0; k < n; ++k)
        CHECK(std::abs(std::complex<double>(a[k]) - ref[k]) < 1e-3);

    fft(a, true);
    for (std::size_t k = 0; k < n; ++k)
        CHECK(std::abs(std::complex<double>(a[k]) - std::complex<double>(orig[k])) < 1e-5);

    std::vector<std::complex<float>> bad(12);
    CHECK_THROWS_AS(fft(bad, false), std::invalid_argument);
}

TEST_CASE("stft: frame count is ceil(len/hop)") {
    CHECK(Stft::n_frames(32768, 512) == 64);
    CHECK(Stft::n_frames(32769, 512) == 65);
    CHECK(Stft::n_frames(16000, 512) == 32);
    CHECK(Stft::n_frames(512, 512) == 1);
    CHECK(Stft::n_frames(513, 512) == 2);
}

TEST_CASE("stft: analysis/synthesis round trip") {
    const Stft stft(1024, 256);
    auto clip = noise_clip(0.5, 8192, 99);
    const auto spec = stft.analyze(clip.samples);
    const int frames = Stft::n_frames(clip.samples.size(), 256);
    REQUIRE(static_cast<int>(spec.size()) == frames * stft.n_bins());
    const auto back = stft.synthesize(spec, frames, clip.samples.size());
    REQUIRE(back.size() == clip.samples.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < back.size(); ++i) {
        const double d = back[i] - clip.samples[i];
        num += d * d;
        den += static_cast<double>(clip.samples[i]) * clip.samples[i];
    }
    CHECK(std::sqrt(num / den) < 1e-3);
}

TEST_CASE("stft: full-scale bin-aligned sine peaks at scaled magnitude 1") {
    const Stft stft(2048, 512);
    // bin 100 -> 100 * 16000 / 2048 = 781.25 Hz
    auto clip = sine_clip(781.25, 1.0, 32768);
    const auto spec = stft.analyze(clip.samples);
    const int bins = stft.n_bins();
    const double scale = 2.0 / stft.window_sum();
    // pick an interior frame fully inside the signal
    const int f = 32;
    double peak = 0.0;
    int peak_bin = -1;
    for (int b = 0; b < bins; ++b) {
        const double m = std::abs(std::complex<double>(spec[static_cast<std::size_t>(f) * bins + b])) * scale;
        if (m > peak) {
            peak = m;
            peak_bin = b;
        }
    }
    CHECK(peak_bin == 100);
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("mel scale: slaney breakpoint and inverse") {
    CHECK(hz_to_mel(1000.0) == doctest::Approx(15.0));
    CHECK(hz_to_mel(500.0) == doctest::Approx(7.5));
    CHECK(mel_to_hz(15.0) == doctest::Approx(1000.0));
    for (double hz = 10.0; hz < 8000.0; hz *= 1.7)
        CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-9));
    CHECK(hz_to_mel(4000.0) > hz_to_mel(2000.0));
}

TEST_CASE("mel filterbank: triangles cover 0..nyquist with bounded support") {
    MelConfig cfg;
    const int bins = cfg.fft_size / 2 + 1;
    const auto fb = mel_filterbank(cfg);
    REQUIRE(fb.size() == static_cast<std::size_t>(cfg.n_mels) * bins);
    const auto centers = mel_center_frequencies(cfg);
    REQUIRE(static_cast<int>(centers.size()) == cfg.n_mels);
    for (int m = 0; m < cfg.n_mels; ++m) {
        double area = 0.0;
        for (int b = 0; b < bins; ++b) {
            const float w = fb[static_cast<std::size_t>(m) * bins + b];
            REQUIRE(w >= 0.0f);
            area += w;
        }
        CHECK(area > 0.0);  // every band sees at least one bin
        if (m > 0) CHECK(centers[static_cast<std::size_t>(m)] > centers[static_cast<std::size_t>(m) - 1]);
    }
    CHECK(centers.back() < cfg.sample_rate / 2.0);
}

TEST_CASE("mel: silence maps to the lower edge of the norm range") {
    MelConfig cfg;
    AudioClip clip;
    clip.samples.assign(32768, 0.0f);
    const auto mel = compute_mel(clip, cfg);
    CHECK(mel.n_mels == 64);
    CHECK(mel.n_frames == 64);
    for (float v : mel.values) REQUIRE(v == static_cast<float>(cfg.norm_lo));
}

TEST_CASE("mel: 440 Hz sine lights up the band nearest 440 Hz in every frame") {
    MelConfig cfg;
    const auto mel = compute_mel(sine_clip(440.0, 0.9, 32768), cfg);
    REQUIRE(mel.n_frames == 64);

    // oracle: recompute band centers from the mel-scale definition and pick
    // the one nearest 440 Hz (uniform grid in mel over 0..nyquist)
    auto mel_of = [](double hz) {
        return hz < 1000.0 ? hz * 3.0 / 200.0
                           : 15.0 + std::log(hz / 1000.0) * 27.0 / std::log(6.4);
    };
    auto hz_of = [](double mel_v) {
        return mel_v < 15.0 ? mel_v * 200.0 / 3.0
                            : 1000.0 * std::exp((mel_v - 15.0) * std::log(6.4) / 27.0);
    };
    const double mel_max = mel_of(8000.0);
    int expect = -1;
    double best = 1e18;
    for (int k = 0; k < cfg.n_mels; ++k) {
        const double center = hz_of(mel_max * (k + 1) / (cfg.n_mels + 1));
        if (std::abs(center - 440.0) < best) {
            best = std::abs(center - 440.0);
            expect = k;
        }
    }
    REQUIRE(expect >= 0);

    for (int f = 0; f < mel.n_frames; ++f) {
        int argmax = 0;
        for (int m = 1; m < mel.n_mels; ++m)
            if (mel.at(m, f) > mel.at(argmax, f)) argmax = m;
        REQUIRE(argmax == expect);
    }
}

TEST_CASE("mel: one second of audio gives 64x32") {
    MelConfig cfg;
    const auto mel = compute_mel(noise_clip(0.3, 16000, 5), cfg);
    CHECK(mel.n_mels == 64);
    CHECK(mel.n_frames == 32);
}

TEST_CASE("mel: values always inside the norm range") {
    MelConfig cfg;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto clip = noise_clip(seed == 2 ? 1.0 : 0.01, 8192, seed);
        const auto mel = compute_mel(clip, cfg);
        CHECK_NOTHROW(mel.validate());
        for (float v : mel.values) {
            REQUIRE(v >= static_cast<float>(cfg.norm_lo));
            REQUIRE(v <= static_cast<float>(cfg.norm_hi));
        }
    }
}

TEST_CASE("mel: input validation errors") {
    MelConfig cfg;
    auto clip = noise_clip(0.5, 8192, 1);
    clip.sample_rate = 22050;
    CHECK_THROWS_AS(compute_mel(clip, cfg), std::invalid_argument);
    AudioClip tiny;
    tiny.samples.assign(100, 0.1f);
    CHECK_THROWS_AS(compute_mel(tiny, cfg), std::invalid_argument);
    MelConfig bad = cfg;
    bad.fft_size = 1000;  // not a power of two
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.n_mels = 5000;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("mel: normalize/denormalize invert away from the clamp") {
    MelConfig cfg;
    for (double db : {-79.9, -40.0, -12.3, -0.5, 0.0})
        CHECK(denormalize_db(normalize_db(db, cfg), cfg) == doctest::Approx(db).epsilon(1e-5));
    // below the floor: clamps, then stays fixed
    const float once = normalize_db(-200.0, cfg);
    CHECK(once == static_cast<float>(cfg.norm_lo));
    CHECK(normalize_db(denormalize_db(once, cfg), cfg) == once);
    CHECK(normalize_db(10.0, cfg) == static_cast<float>(cfg.norm_hi));
}

TEST_CASE("mel file: round trip and config mismatch diagnostics") {
    testutil::TempDir td;
    MelConfig cfg;
    const auto mel = compute_mel(sine_clip(440.0, 0.5, 16384), cfg);
    const auto p = td.file("m.mel");
    write_mel_file(p, mel);
    const auto back = read_mel_file(p, cfg);
    REQUIRE(back.n_mels == mel.n_mels);
    REQUIRE(back.n_frames == mel.n_frames);
    for (std::size_t i = 0; i < mel.values.size(); ++i)
        CHECK(back.values[i] == doctest::Approx(mel.values[i]).epsilon(1e-5));

    MelConfig other = cfg;
    other.n_mels = 32;
    try {
        (void)read_mel_file(p, other);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }

    // truncated payload
    const auto trunc = td.file("t.mel");
    {
        ByteWriter w(trunc);
        w.magic("MEL1");
        w.u32(64);
        w.u32(64);
        w.u32(16000);
        w.u32(512);
        w.f32(0.0f);
        w.close();
    }
    CHECK_THROWS_AS(read_mel_file(trunc, cfg), FormatError);
}

TEST_CASE("griffin-lim: all-floor mel inverts to near-silence") {
    MelConfig cfg;
    MelSpectrogram mel;
    mel.config = cfg;
    mel.n_mels = 64;
    mel.n_frames = 64;
    mel.values.assign(64 * 64, static_cast<float>(cfg.norm_lo));
    const auto clip = invert_mel_griffin_lim(mel, 4);
    CHECK(clip.samples.size() == 64 * 512);
    CHECK(rms(clip) < 1e-3);
}

TEST_CASE("griffin-lim: sine round trip converges and improves with iterations") {
    MelConfig cfg;
    const auto ref = compute_mel(sine_clip(440.0, 0.6, 32768), cfg);

    double prev = std::numeric_limits<double>::infinity();
    double last = prev;
    for (int iters : {1, 4, 16, 64}) {
        const auto audio = invert_mel_griffin_lim(ref, iters);
        REQUIRE(audio.samples.size() == 32768);
        const auto round = compute_mel(audio, cfg);
        const double sc = mel_spectral_convergence(round, ref);
        CHECK(sc <= prev + 1e-12);
        prev = sc;
        last = sc;
    }
    CHECK(last <= 0.15);
}

TEST_CASE("griffin-lim: round-trip error non-increasing on a noise mel") {
    MelConfig cfg;
    const auto ref = compute_mel(noise_clip(0.1, 16384, 77), cfg);
    double prev = std::numeric_limits<double>::infinity();
    for (int iters : {1, 2, 8, 32}) {
        const auto audio = invert_mel_griffin_lim(ref, iters);
        const auto round = compute_mel(audio, cfg);
        const double sc = mel_spectral_convergence(round, ref);
        CHECK(sc <= prev + 1e-9);
        prev = sc;
    }
}

TEST_CASE("spectral convergence: zero for identical, positive for different") {
    MelConfig cfg;
    const auto a = compute_mel(sine_clip(440.0, 0.5, 16384), cfg);
    const auto b = compute_mel(sine_clip(880.0, 0.5, 16384), cfg);
    CHECK(mel_spectral_convergence(a, a) == 0.0);
    CHECK(mel_spectral_convergence(a, b) > 0.1);
}

TEST_CASE("vocode: builtin backend is exactly griffin-lim") {
    MelConfig cfg;
    const auto mel = compute_mel(sine_clip(440.0, 0.5, 16384), cfg);
    const auto direct = invert_mel_griffin_lim(mel, 8);
    const auto via = vocode(mel, VocoderBackend::builtin(8));
    REQUIRE(via.samples.size() == direct.samples.size());
    CHECK(via.samples == direct.samples);
}

TEST_CASE("vocode: external mock honors the length contract") {
    MelConfig cfg;
    const auto mel = compute_mel(sine_clip(220.0, 0.5, 16384), cfg);
    const std::string cmd = std::string(MOCK_VOCODER_PATH) + " {mel} {wav}";
    const auto out = vocode(mel, VocoderBackend::external(cmd));
    const long expected = static_cast<long>(mel.n_frames) * cfg.hop;
    CHECK(std::abs(static_cast<long>(out.samples.size()) - expected) <= cfg.hop);
    CHECK(out.sample_rate == cfg.sample_rate);
}

TEST_CASE("vocode: missing external binary raises an error naming it") {
    MelConfig cfg;
    const auto mel = compute_mel(sine_clip(220.0, 0.5, 16384), cfg);
    const std::string cmd = "/definitely/not/a/vocoder {mel} {wav} 2>/dev/null";
    try {
        (void)vocode(mel, VocoderBackend::external(cmd));
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("/definitely/not/a/vocoder") != std::string::npos);
        CHECK(msg.find("builtin") != std::string::npos);
    }
    CHECK_THROWS_AS((void)vocode(mel, VocoderBackend::external("no-placeholders")),
                    std::invalid_argument);
}

}  // TEST_SUITE
