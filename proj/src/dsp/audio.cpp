#include "melbridge/dsp/audio.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "melbridge/core/io.hpp"

namespace melbridge::dsp {

void validate(const AudioClip& clip) {
    if (clip.sample_rate <= 0)
        throw std::invalid_argument("audio: sample_rate must be positive");
    if (clip.samples.empty())
        throw std::invalid_argument("audio: empty clip");
    for (float s : clip.samples)
        if (!std::isfinite(s))
            throw std::invalid_argument("audio: non-finite sample");
}

double rms(const AudioClip& clip) {
    if (clip.samples.empty()) return 0.0;
    double acc = 0.0;
    for (float s : clip.samples) acc += static_cast<double>(s) * s;
    return std::sqrt(acc / static_cast<double>(clip.samples.size()));
}

void write_wav(const std::string& path, const AudioClip& clip) {
    validate(clip);
    const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_bytes = n * 2;
    const std::uint32_t sr = static_cast<std::uint32_t>(clip.sample_rate);

    ByteWriter w(path);
    w.magic("RIFF");
    w.u32(36 + data_bytes);
    w.magic("WAVE");
    w.magic("fmt ");
    w.u32(16);
    w.i16(1);   // PCM
    w.i16(1);   // mono
    w.u32(sr);
    w.u32(sr * 2);  // byte rate
    w.i16(2);   // block align
    w.i16(16);  // bits per sample
    w.magic("data");
    w.u32(data_bytes);
    for (float s : clip.samples) {
        const float c = std::clamp(s, -1.0f, 1.0f);
        w.i16(static_cast<std::int16_t>(std::lrint(c * 32767.0f)));
    }
    w.close();
}

AudioClip read_wav(const std::string& path) {
    ByteReader r(path);
    r.expect_magic("RIFF");
    r.u32();  // riff size, unreliable in the wild
    r.expect_magic("WAVE");

    AudioClip clip;
    bool have_fmt = false;
    while (!r.at_eof()) {
        char id[5] = {0};
        r.bytes(id, 4);
        const std::uint32_t len = r.u32();
        if (std::string(id) == "fmt ") {
            const std::size_t at = r.offset();
            const std::int16_t format = r.i16();
            const std::int16_t channels = r.i16();
            clip.sample_rate = static_cast<int>(r.u32());
            r.u32();  // byte rate
            r.i16();  // block align
            const std::int16_t bits = r.i16();
            if (format != 1) r.fail("only PCM wav supported", at);
            if (channels != 1) r.fail("only mono wav supported", at);
            if (bits != 16) r.fail("only 16-bit wav supported", at);
            for (std::uint32_t i = 16; i < len; ++i) r.u8();
            have_fmt = true;
        } else if (std::string(id) == "data") {
            if (!have_fmt) r.fail("data chunk before fmt chunk");
            const std::uint32_t n = len / 2;
            clip.samples.resize(n);
            for (std::uint32_t i = 0; i < n; ++i)
                clip.samples[i] =
                    std::max(static_cast<float>(r.i16()) / 32767.0f, -1.0f);
            return clip;
        } else {
            for (std::uint32_t i = 0; i < len; ++i) r.u8();
        }
    }
    r.fail("no data chunk found");
}

}  // namespace melbridge::dsp
