#pragma once

#include <filesystem>
#include <mutex>
#include <string>

#include "melbridge/cond/embedding.hpp"

namespace melbridge::cond {

/// Out-of-process encoder. The command template is run once per query with
/// {input} and {output} substituted; it must write an embedding store file
/// (one record) to {output}. The core never links encoder weights — anything
/// that can produce that file can serve as the encoder.
struct AdapterConfig {
    std::string name;      // used in error messages
    std::string command;   // e.g. "clip_embed --image {input} --out {output}"
    int expected_dim = 0;  // 0 accepts whatever the tool returns
    bool unit_norm = true;
};

class ExternalEncoder {
public:
    explicit ExternalEncoder(AdapterConfig cfg);

    const AdapterConfig& config() const { return cfg_; }

    QueryEmbedding encode_image(const std::string& image_path) const;
    /// Refuses empty (or all-whitespace) text.
    QueryEmbedding encode_text(const std::string& text) const;

private:
    std::filesystem::path next_temp_path(const char* ext) const;
    QueryEmbedding run(const std::string& input_path, Modality modality,
                       const std::string& source_id) const;

    AdapterConfig cfg_;
    mutable std::mutex mu_;  // one external process at a time per adapter
    mutable std::uint64_t call_count_ = 0;
};

}  // namespace melbridge::cond
