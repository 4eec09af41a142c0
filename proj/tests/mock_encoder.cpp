// Stand-in external encoder for adapter tests: hashes the input file's bytes
// into a deterministic vector and writes a one-record embedding store, so the
// subprocess contract can be checked without any real encoder installed.
#include <cstdio>
#include <cstdlib>
#include <string>

#include "melbridge/cond/embedding.hpp"
#include "melbridge/core/io.hpp"
#include "melbridge/core/rng.hpp"

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: mock_encoder <input> <output> [dim]\n");
        return 2;
    }
    try {
        const int dim = argc > 3 ? std::atoi(argv[3]) : 16;
        const std::string content = melbridge::read_text_file(argv[1]);
        melbridge::Rng rng(melbridge::fnv1a64(content.data(), content.size()));

        melbridge::cond::QueryEmbedding e;
        e.vector.resize(static_cast<std::size_t>(dim));
        for (auto& x : e.vector) x = static_cast<float>(rng.normal());
        e.modality = melbridge::cond::Modality::kImage;
        e.source_id = "mock";

        melbridge::cond::EmbeddingStore store(dim, "mock_encoder");
        store.put("query", e);
        store.save(argv[2]);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "mock_encoder: %s\n", e.what());
        return 1;
    }
}
