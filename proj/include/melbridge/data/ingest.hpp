#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melbridge/data/dataset.hpp"

namespace melbridge::data {

/// Command templates for an external media tool (ffmpeg or compatible).
/// Placeholders are substituted shell-quoted:
///   probe_command: {input} {output}   -- writes "duration=<seconds>" and
///                                        "audio=<0|1>" lines to {output}
///   frame_command: {input} {time} {output}
///   audio_command: {input} {time} {duration} {rate} {output}
///                                     -- must resample to {rate}, mono WAV
struct MediaExtractorConfig {
    std::string name = "ffmpeg";
    std::string probe_command;
    std::string frame_command;
    std::string audio_command;

    void validate() const;
};

struct MediaProbe {
    double duration = 0;  ///< seconds
    bool has_audio = false;
};

MediaProbe probe_media(const MediaExtractorConfig& media, const std::string& video);

struct IngestConfig {
    MediaExtractorConfig media;
    double clip_seconds = 2.048;
    int sample_rate = 16000;
    std::string out_dir;
};

/// Cuts frames_per_video (frame, audio) pairs from one video. Timestamps are
/// drawn uniformly over the duration; each audio window is centered on its
/// timestamp and clamped to stay inside the video. Fails up front if the video
/// has no audio track or is shorter than one clip.
std::vector<Example> ingest_video(const IngestConfig& cfg, const std::string& video,
                                  const std::string& label, int frames_per_video,
                                  std::uint64_t seed);

}  // namespace melbridge::data
