#include "melbridge/data/ingest.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "melbridge/core/io.hpp"
#include "melbridge/core/rng.hpp"
#include "melbridge/core/subprocess.hpp"
#include "melbridge/dsp/audio.hpp"

namespace fs = std::filesystem;

namespace melbridge::data {

namespace {

void require_placeholders(const std::string& name, const char* which, const std::string& cmd,
                          std::initializer_list<const char*> keys) {
    if (cmd.empty())
        throw std::invalid_argument("media tool \"" + name + "\" has no " + which + " command");
    for (const char* key : keys)
        if (cmd.find(std::string("{") + key + "}") == std::string::npos)
            throw std::invalid_argument("media tool \"" + name + "\" " + which +
                                        " command lacks {" + key + "}: " + cmd);
}

void run_or_throw(const std::string& name, const std::string& cmd, const fs::path& expect) {
    const int rc = std::system(cmd.c_str());
    if (rc != 0 || !fs::exists(expect))
        throw std::runtime_error("media tool \"" + name + "\" failed (exit " + std::to_string(rc) +
                                 "): " + cmd);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

void MediaExtractorConfig::validate() const {
    if (name.empty()) throw std::invalid_argument("media tool needs a name");
    require_placeholders(name, "probe", probe_command, {"input", "output"});
    require_placeholders(name, "frame", frame_command, {"input", "time", "output"});
    require_placeholders(name, "audio", audio_command, {"input", "time", "duration", "rate", "output"});
}

MediaProbe probe_media(const MediaExtractorConfig& media, const std::string& video) {
    media.validate();
    if (!fs::exists(video)) throw std::runtime_error("no such video file: " + video);

    const fs::path out = fs::temp_directory_path() /
                         ("melbridge-probe-" + std::to_string(::getpid()) + "-" +
                          std::to_string(fnv1a64(video.data(), video.size())) + ".txt");
    std::string cmd = media.probe_command;
    substitute_arg(cmd, "input", video);
    substitute_arg(cmd, "output", out.string());
    run_or_throw(media.name, cmd, out);

    std::istringstream in(read_text_file(out.string()));
    std::error_code ec;
    fs::remove(out, ec);

    MediaProbe probe;
    bool saw_duration = false, saw_audio = false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("duration=", 0) == 0) {
            probe.duration = std::stod(line.substr(9));
            saw_duration = true;
        } else if (line.rfind("audio=", 0) == 0) {
            probe.has_audio = line.substr(6) != "0";
            saw_audio = true;
        }
    }
    if (!saw_duration || !saw_audio)
        throw std::runtime_error("media tool \"" + media.name +
                                 "\" probe output is missing duration= or audio= for " + video);
    return probe;
}

std::vector<Example> ingest_video(const IngestConfig& cfg, const std::string& video,
                                  const std::string& label, int frames_per_video,
                                  std::uint64_t seed) {
    cfg.media.validate();
    if (frames_per_video < 1) throw std::invalid_argument("frames_per_video must be positive");
    if (label.empty()) throw std::invalid_argument("ingest needs a label for " + video);
    if (cfg.out_dir.empty()) throw std::invalid_argument("ingest needs an out_dir");
    if (cfg.clip_seconds <= 0 || cfg.sample_rate <= 0)
        throw std::invalid_argument("ingest clip/rate must be positive");

    const MediaProbe probe = probe_media(cfg.media, video);
    if (!probe.has_audio) throw std::runtime_error("video has no audio track: " + video);
    if (probe.duration < cfg.clip_seconds)
        throw std::runtime_error("video " + video + " is shorter than one clip (" +
                                 fmt(probe.duration) + " s < " + fmt(cfg.clip_seconds) + " s)");

    fs::create_directories(fs::path(cfg.out_dir) / "frames");
    fs::create_directories(fs::path(cfg.out_dir) / "audio");
    const std::string stem = fs::path(video).stem().string();

    Rng rng(seed);
    std::vector<Example> out;
    out.reserve(static_cast<std::size_t>(frames_per_video));
    for (int i = 0; i < frames_per_video; ++i) {
        const double t = rng.uniform() * probe.duration;
        const double start =
            std::clamp(t - 0.5 * cfg.clip_seconds, 0.0, probe.duration - cfg.clip_seconds);

        char suffix[32];
        std::snprintf(suffix, sizeof suffix, "_f%03d", i);
        const std::string frame_rel = "frames/" + stem + suffix + ".png";
        const std::string audio_rel = "audio/" + stem + suffix + ".wav";
        const fs::path frame_path = fs::path(cfg.out_dir) / frame_rel;
        const fs::path audio_path = fs::path(cfg.out_dir) / audio_rel;

        std::string fcmd = cfg.media.frame_command;
        substitute_arg(fcmd, "input", video);
        substitute_arg(fcmd, "time", fmt(t));
        substitute_arg(fcmd, "output", frame_path.string());
        run_or_throw(cfg.media.name, fcmd, frame_path);

        std::string acmd = cfg.media.audio_command;
        substitute_arg(acmd, "input", video);
        substitute_arg(acmd, "time", fmt(start));
        substitute_arg(acmd, "duration", fmt(cfg.clip_seconds));
        substitute_arg(acmd, "rate", std::to_string(cfg.sample_rate));
        substitute_arg(acmd, "output", audio_path.string());
        run_or_throw(cfg.media.name, acmd, audio_path);

        // Trust but verify: the tool owns resampling, we own the contract.
        const dsp::AudioClip clip = dsp::read_wav(audio_path.string());
        if (clip.sample_rate != cfg.sample_rate)
            throw std::runtime_error("media tool \"" + cfg.media.name + "\" wrote " +
                                     std::to_string(clip.sample_rate) + " Hz audio, wanted " +
                                     std::to_string(cfg.sample_rate));
        const double got = static_cast<double>(clip.samples.size()) / cfg.sample_rate;
        if (std::abs(got - cfg.clip_seconds) > 0.01 * cfg.clip_seconds)
            throw std::runtime_error("media tool \"" + cfg.media.name + "\" wrote a " + fmt(got) +
                                     " s clip, wanted " + fmt(cfg.clip_seconds) + " s");

        Example e;
        e.id = stem + suffix;
        e.frame_ref = frame_rel;
        e.audio_ref = audio_rel;
        e.label = label;
        e.split = "unsplit";
        e.timestamp = t;
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace melbridge::data
