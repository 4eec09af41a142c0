#pragma once

#include <complex>
#include <vector>

namespace melbridge::dsp {

/// In-place iterative radix-2 FFT. Size must be a power of two.
void fft(std::vector<std::complex<float>>& a, bool inverse);

/// Short-time Fourier transform with a Hann window of length fft_size and
/// center (zero) padding, so n_frames = ceil(len / hop). Spectra are stored
/// frame-major: frame f occupies rows [0, n_bins) of column f.
class Stft {
public:
    Stft(int fft_size, int hop);

    int fft_size() const { return fft_size_; }
    int hop() const { return hop_; }
    int n_bins() const { return fft_size_ / 2 + 1; }
    static int n_frames(std::size_t len, int hop) {
        return static_cast<int>((len + static_cast<std::size_t>(hop) - 1) /
                                static_cast<std::size_t>(hop));
    }

    /// Sum of the analysis window, used to normalize magnitudes so a
    /// full-scale sine peaks near 1.
    double window_sum() const { return window_sum_; }

    /// Complex spectrogram, n_bins x n_frames, column-major by frame.
    std::vector<std::complex<float>> analyze(const std::vector<float>& samples) const;

    /// Overlap-add inverse with squared-window normalization; output
    /// truncated/padded to out_len samples.
    std::vector<float> synthesize(const std::vector<std::complex<float>>& spec,
                                  int frames, std::size_t out_len) const;

private:
    int fft_size_;
    int hop_;
    std::vector<float> window_;
    double window_sum_;
};

}  // namespace melbridge::dsp
