// Stand-in external vocoder for tests: reads a MEL1 file, emits a quiet
// 440 Hz tone of n_frames * hop samples so length/rate contracts can be
// checked without a real neural vocoder.
#include <cmath>
#include <cstdio>
#include <numbers>

#include "melbridge/core/io.hpp"
#include "melbridge/dsp/audio.hpp"

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: mock_vocoder <mel-in> <wav-out>\n");
        return 2;
    }
    try {
        melbridge::ByteReader r(argv[1]);
        r.expect_magic("MEL1");
        const auto n_mels = r.u32();
        const auto n_frames = r.u32();
        const auto sample_rate = r.u32();
        const auto hop = r.u32();
        (void)n_mels;

        melbridge::dsp::AudioClip clip;
        clip.sample_rate = static_cast<int>(sample_rate);
        clip.samples.resize(static_cast<std::size_t>(n_frames) * hop);
        for (std::size_t i = 0; i < clip.samples.size(); ++i)
            clip.samples[i] = static_cast<float>(
                0.1 * std::sin(2.0 * std::numbers::pi * 440.0 *
                               static_cast<double>(i) / sample_rate));
        melbridge::dsp::write_wav(argv[2], clip);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "mock_vocoder: %s\n", e.what());
        return 1;
    }
}
