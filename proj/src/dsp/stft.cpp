#include "melbridge/dsp/stft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace melbridge::dsp {

void fft(std::vector<std::complex<float>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft size must be a power of two");

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = std::complex<double>(a[i + k + len / 2]) * w;
                a[i + k] = std::complex<float>(u + v);
                a[i + k + len / 2] = std::complex<float>(u - v);
                w *= wl;
            }
        }
    }
    if (inverse) {
        const float inv = 1.0f / static_cast<float>(n);
        for (auto& x : a) x *= inv;
    }
}

Stft::Stft(int fft_size, int hop) : fft_size_(fft_size), hop_(hop) {
    if (fft_size <= 0 || (fft_size & (fft_size - 1)) != 0)
        throw std::invalid_argument("stft: fft_size must be a power of two");
    if (hop <= 0 || hop > fft_size)
        throw std::invalid_argument("stft: hop must be in (0, fft_size]");
    window_.resize(static_cast<std::size_t>(fft_size));
    window_sum_ = 0.0;
    for (int i = 0; i < fft_size; ++i) {
        const double w =
            0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / fft_size);
        window_[static_cast<std::size_t>(i)] = static_cast<float>(w);
        window_sum_ += w;
    }
}

std::vector<std::complex<float>> Stft::analyze(const std::vector<float>& samples) const {
    const int frames = n_frames(samples.size(), hop_);
    const int bins = n_bins();
    const int pad = fft_size_ / 2;
    const auto len = static_cast<long long>(samples.size());

    std::vector<std::complex<float>> out(static_cast<std::size_t>(bins) * frames);
    std::vector<std::complex<float>> buf(static_cast<std::size_t>(fft_size_));
    for (int f = 0; f < frames; ++f) {
        const long long start = static_cast<long long>(f) * hop_ - pad;
        for (int i = 0; i < fft_size_; ++i) {
            const long long idx = start + i;
            const float s = (idx >= 0 && idx < len)
                                ? samples[static_cast<std::size_t>(idx)]
                                : 0.0f;
            buf[static_cast<std::size_t>(i)] = s * window_[static_cast<std::size_t>(i)];
        }
        fft(buf, false);
        for (int b = 0; b < bins; ++b)
            out[static_cast<std::size_t>(f) * bins + b] = buf[static_cast<std::size_t>(b)];
    }
    return out;
}

std::vector<float> Stft::synthesize(const std::vector<std::complex<float>>& spec,
                                    int frames, std::size_t out_len) const {
    const int bins = n_bins();
    if (spec.size() != static_cast<std::size_t>(bins) * frames)
        throw std::invalid_argument("stft: spectrogram size mismatch");
    const int pad = fft_size_ / 2;
    const std::size_t padded_len = out_len + 2 * static_cast<std::size_t>(pad);

    std::vector<double> acc(padded_len, 0.0);
    std::vector<double> wsq(padded_len, 0.0);
    std::vector<std::complex<float>> buf(static_cast<std::size_t>(fft_size_));
    for (int f = 0; f < frames; ++f) {
        // rebuild the full conjugate-symmetric spectrum
        for (int b = 0; b < bins; ++b)
            buf[static_cast<std::size_t>(b)] = spec[static_cast<std::size_t>(f) * bins + b];
        for (int b = bins; b < fft_size_; ++b)
            buf[static_cast<std::size_t>(b)] =
                std::conj(buf[static_cast<std::size_t>(fft_size_ - b)]);
        fft(buf, true);
        const std::size_t start = static_cast<std::size_t>(f) * hop_;
        for (int i = 0; i < fft_size_; ++i) {
            const std::size_t idx = start + static_cast<std::size_t>(i);
            if (idx >= padded_len) break;
            const double w = window_[static_cast<std::size_t>(i)];
            acc[idx] += w * buf[static_cast<std::size_t>(i)].real();
            wsq[idx] += w * w;
        }
    }

    std::vector<float> out(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        const std::size_t idx = i + static_cast<std::size_t>(pad);
        const double denom = wsq[idx] > 1e-9 ? wsq[idx] : 1e-9;
        out[i] = static_cast<float>(acc[idx] / denom);
    }
    return out;
}

}  // namespace melbridge::dsp
