#include "melbridge/dsp/griffin_lim.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <unistd.h>

#include "melbridge/dsp/stft.hpp"

namespace melbridge::dsp {

namespace {

// Linear mel magnitudes (sqrt of power), n_mels x n_frames.
Eigen::MatrixXd mel_linear_magnitude(const MelSpectrogram& mel) {
    Eigen::MatrixXd m(mel.n_mels, mel.n_frames);
    for (int r = 0; r < mel.n_mels; ++r)
        for (int c = 0; c < mel.n_frames; ++c) {
            const double db = denormalize_db(mel.at(r, c), mel.config);
            m(r, c) = std::pow(10.0, db / 20.0);
        }
    return m;
}

// Lawson-Hanson non-negative least squares: argmin_{p >= 0} ||A p - y||.
// The active set stays at or below the number of equations, so solutions are
// sparse: band energy concentrates in a few frequency bins instead of being
// smeared across the whole triangle the way the minimum-norm inverse does.
Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
    const Eigen::Index n = A.cols();
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Index> active;
    std::vector<char> in_active(static_cast<std::size_t>(n), 0);
    Eigen::VectorXd r = y;
    const double tol = 1e-10 * (A.transpose() * y).cwiseAbs().maxCoeff() + 1e-300;

    auto solve_active = [&](const std::vector<Eigen::Index>& set) {
        Eigen::MatrixXd As(A.rows(), static_cast<Eigen::Index>(set.size()));
        for (std::size_t i = 0; i < set.size(); ++i) As.col(static_cast<Eigen::Index>(i)) = A.col(set[i]);
        return Eigen::VectorXd(As.colPivHouseholderQr().solve(y));
    };

    for (int outer = 0; outer < 3 * static_cast<int>(A.rows()); ++outer) {
        const Eigen::VectorXd w = A.transpose() * r;
        Eigen::Index best = -1;
        double best_w = tol;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!in_active[static_cast<std::size_t>(j)] && w[j] > best_w) {
                best_w = w[j];
                best = j;
            }
        if (best < 0) break;
        active.push_back(best);
        in_active[static_cast<std::size_t>(best)] = 1;

        Eigen::VectorXd z = solve_active(active);
        while (z.minCoeff() <= 0.0) {
            double alpha = 1.0;
            for (std::size_t i = 0; i < active.size(); ++i) {
                const double zi = z[static_cast<Eigen::Index>(i)];
                if (zi <= 0.0) {
                    const double pi = p[active[i]];
                    alpha = std::min(alpha, pi / (pi - zi));
                }
            }
            for (std::size_t i = 0; i < active.size(); ++i) {
                const Eigen::Index j = active[i];
                p[j] += alpha * (z[static_cast<Eigen::Index>(i)] - p[j]);
            }
            std::vector<Eigen::Index> kept;
            for (Eigen::Index j : active) {
                if (p[j] > 1e-14) {
                    kept.push_back(j);
                } else {
                    p[j] = 0.0;
                    in_active[static_cast<std::size_t>(j)] = 0;
                }
            }
            active.swap(kept);
            if (active.empty()) return p;
            z = solve_active(active);
        }
        for (std::size_t i = 0; i < active.size(); ++i)
            p[active[i]] = z[static_cast<Eigen::Index>(i)];
        r = y - A * p;
    }
    return p;
}

}  // namespace

double mel_spectral_convergence(const MelSpectrogram& test, const MelSpectrogram& ref) {
    if (test.n_mels != ref.n_mels || test.n_frames != ref.n_frames)
        throw std::invalid_argument("spectral convergence: shape mismatch");
    const Eigen::MatrixXd a = mel_linear_magnitude(test);
    const Eigen::MatrixXd b = mel_linear_magnitude(ref);
    const double denom = b.norm();
    if (denom == 0.0) return a.norm() == 0.0 ? 0.0 : 1.0;
    return (a - b).norm() / denom;
}

AudioClip invert_mel_griffin_lim(const MelSpectrogram& mel, int iterations) {
    mel.validate();
    if (iterations < 1)
        throw std::invalid_argument("griffin-lim: iterations must be >= 1");
    const MelConfig& cfg = mel.config;
    const Stft stft(cfg.fft_size, cfg.hop);
    const int bins = stft.n_bins();
    const int frames = mel.n_frames;

    // Approximate inverse of the filterbank in the power domain, one frame
    // at a time.
    const auto fb = mel_filterbank(cfg);
    Eigen::MatrixXd f(cfg.n_mels, bins);
    for (int m = 0; m < cfg.n_mels; ++m)
        for (int b = 0; b < bins; ++b)
            f(m, b) = fb[static_cast<std::size_t>(m) * bins + b];

    // Narrowband components carry the Hann main lobe, not a lone bin; model
    // that power spread so the lifted spectrum is one a real signal can have
    // (isolated-spike targets make the phase iteration shed energy).
    Eigen::MatrixXd smear = Eigen::MatrixXd::Zero(bins, bins);
    for (int b = 0; b < bins; ++b) {
        smear(b, b) = 1.0;
        if (b > 0) smear(b - 1, b) = 0.25;
        if (b + 1 < bins) smear(b + 1, b) = 0.25;
    }

    // The log floor marks "no measurable energy": subtract its power so an
    // all-floor band inverts to silence instead of a broadband bed.
    const double floor_power = std::pow(10.0, cfg.log_floor_db / 10.0);
    Eigen::MatrixXd mel_power =
        (mel_linear_magnitude(mel).array().square() - floor_power).cwiseMax(0.0).matrix();
    const Eigen::MatrixXd f_smeared = f * smear;
    Eigen::MatrixXd lin_power(bins, frames);
    for (int fr = 0; fr < frames; ++fr)
        lin_power.col(fr) = smear * nnls(f_smeared, mel_power.col(fr));

    // Back to un-normalized STFT magnitude units.
    const double scale = 2.0 / stft.window_sum();
    Eigen::MatrixXf mag = (lin_power.array().sqrt() / scale).cast<float>();

    const std::size_t out_len = static_cast<std::size_t>(frames) * cfg.hop;
    std::vector<std::complex<float>> spec(static_cast<std::size_t>(bins) * frames);
    // zero-phase start
    for (int fr = 0; fr < frames; ++fr)
        for (int b = 0; b < bins; ++b)
            spec[static_cast<std::size_t>(fr) * bins + b] = {mag(b, fr), 0.0f};

    std::vector<float> audio;
    for (int it = 0; it < iterations; ++it) {
        audio = stft.synthesize(spec, frames, out_len);
        const auto est = stft.analyze(audio);
        for (int fr = 0; fr < frames; ++fr)
            for (int b = 0; b < bins; ++b) {
                const std::size_t i = static_cast<std::size_t>(fr) * bins + b;
                const float a = std::abs(est[i]);
                const std::complex<float> phase =
                    a > 1e-12f ? est[i] / a : std::complex<float>(1.0f, 0.0f);
                spec[i] = mag(b, fr) * phase;
            }
    }
    audio = stft.synthesize(spec, frames, out_len);

    AudioClip clip;
    clip.sample_rate = cfg.sample_rate;
    clip.samples.resize(out_len);
    for (std::size_t i = 0; i < out_len; ++i)
        clip.samples[i] = std::clamp(audio[i], -1.0f, 1.0f);
    return clip;
}

namespace {

std::string substitute(const std::string& tmpl, const std::string& key,
                       const std::string& value) {
    std::string out = tmpl;
    const std::string tag = "{" + key + "}";
    std::size_t pos;
    while ((pos = out.find(tag)) != std::string::npos)
        out.replace(pos, tag.size(), value);
    return out;
}

}  // namespace

AudioClip vocode(const MelSpectrogram& mel, const VocoderBackend& backend) {
    if (backend.kind == "builtin")
        return invert_mel_griffin_lim(mel, backend.griffin_lim_iterations);
    if (backend.kind != "external")
        throw std::invalid_argument("vocoder: unknown backend kind \"" + backend.kind + "\"");
    if (backend.command.empty() ||
        backend.command.find("{mel}") == std::string::npos ||
        backend.command.find("{wav}") == std::string::npos)
        throw std::invalid_argument(
            "vocoder: external command must contain {mel} and {wav} placeholders");

    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path();
    static int counter = 0;
    const std::string stem =
        "melbridge_voc_" + std::to_string(::getpid()) + "_" + std::to_string(counter++);
    const std::string mel_path = (dir / (stem + ".mel")).string();
    const std::string wav_path = (dir / (stem + ".wav")).string();

    write_mel_file(mel_path, mel);
    const std::string cmd =
        substitute(substitute(backend.command, "mel", mel_path), "wav", wav_path);
    const int rc = std::system(cmd.c_str());
    if (rc != 0 || !fs::exists(wav_path)) {
        fs::remove(mel_path);
        throw std::runtime_error(
            "vocoder: external backend failed (command: " + backend.command +
            ", exit " + std::to_string(rc) +
            "); use the builtin griffin-lim backend as fallback");
    }
    AudioClip clip = read_wav(wav_path);
    fs::remove(mel_path);
    fs::remove(wav_path);
    return clip;
}

}  // namespace melbridge::dsp
