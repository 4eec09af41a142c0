#include "melbridge/cond/adapter.hpp"

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "melbridge/core/subprocess.hpp"

namespace fs = std::filesystem;

namespace melbridge::cond {

namespace {

struct TempFile {
    fs::path path;
    ~TempFile() {
        std::error_code ec;
        fs::remove(path, ec);
    }
};

}  // namespace

ExternalEncoder::ExternalEncoder(AdapterConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.name.empty()) throw std::invalid_argument("adapter needs a name");
    if (cfg_.command.find("{input}") == std::string::npos ||
        cfg_.command.find("{output}") == std::string::npos)
        throw std::invalid_argument("adapter \"" + cfg_.name +
                                    "\" command must contain {input} and {output}: " + cfg_.command);
}

fs::path ExternalEncoder::next_temp_path(const char* ext) const {
    std::lock_guard<std::mutex> lock(mu_);
    return fs::temp_directory_path() / ("melbridge-" + cfg_.name + "-" +
                                        std::to_string(::getpid()) + "-" +
                                        std::to_string(call_count_++) + ext);
}

QueryEmbedding ExternalEncoder::run(const std::string& input_path, Modality modality,
                                    const std::string& source_id) const {
    TempFile out{next_temp_path(".emb")};

    std::string cmd = cfg_.command;
    substitute_arg(cmd, "input", input_path);
    substitute_arg(cmd, "output", out.path.string());

    int rc;
    {
        std::lock_guard<std::mutex> lock(mu_);  // one external process at a time
        rc = std::system(cmd.c_str());
    }
    if (rc != 0 || !fs::exists(out.path))
        throw std::runtime_error(
            "external encoder \"" + cfg_.name + "\" failed (exit " + std::to_string(rc) +
            "): " + cmd +
            "\nif the encoder is unavailable, precompute embeddings into a store file and load "
            "that instead of configuring an adapter");

    EmbeddingStore store = EmbeddingStore::load(out.path.string());
    if (store.size() == 0)
        throw std::runtime_error("external encoder \"" + cfg_.name + "\" wrote an empty store");
    if (cfg_.expected_dim > 0 && store.dim() != cfg_.expected_dim)
        throw std::runtime_error("external encoder \"" + cfg_.name + "\" returned dim " +
                                 std::to_string(store.dim()) + " but the run config wants " +
                                 std::to_string(cfg_.expected_dim));

    QueryEmbedding e = store.records().front().second;
    e.modality = modality;
    e.source_id = source_id;
    if (cfg_.unit_norm) l2_normalize(e.vector);
    return e;
}

QueryEmbedding ExternalEncoder::encode_image(const std::string& image_path) const {
    if (!fs::exists(image_path))
        throw std::runtime_error("adapter \"" + cfg_.name + "\": no such image file: " + image_path);
    return run(image_path, Modality::kImage, cfg_.name + ":" + image_path);
}

QueryEmbedding ExternalEncoder::encode_text(const std::string& text) const {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw std::invalid_argument("refusing to encode empty text");

    TempFile in{next_temp_path(".txt")};
    {
        std::ofstream f(in.path);
        f << text;
        if (!f) throw std::runtime_error("cannot write temp text file " + in.path.string());
    }
    return run(in.path.string(), Modality::kText, cfg_.name + ":text");
}

}  // namespace melbridge::cond
