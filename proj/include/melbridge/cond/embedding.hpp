#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "melbridge/diffusion/model.hpp"

namespace melbridge::cond {

enum class Modality : std::uint8_t { kImage = 0, kText = 1, kPriorGenerated = 2, kNull = 3 };

const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// One conditioning vector with its provenance: which encoder family made it
/// and from what source.
struct QueryEmbedding {
    std::vector<float> vector;
    Modality modality = Modality::kImage;
    std::string source_id;

    int dim() const { return static_cast<int>(vector.size()); }
    void validate() const;
};

double l2_norm(const std::vector<float>& v);
void l2_normalize(std::vector<float>& v);
double cosine(const std::vector<float>& a, const std::vector<float>& b);

/// The trained null-conditioning vector, as an embedding with the null tag.
template <typename S>
QueryEmbedding null_embedding(const diffusion::DiffusionModel<S>& m) {
    QueryEmbedding e;
    e.modality = Modality::kNull;
    e.source_id = "model:null_cond";
    e.vector.resize(static_cast<std::size_t>(m.cfg.cond_dim));
    const S* p = m.ps.w(m.null_off);
    for (int i = 0; i < m.cfg.cond_dim; ++i) e.vector[static_cast<std::size_t>(i)] = static_cast<float>(p[i]);
    return e;
}

/// Precomputed embeddings keyed by (example id, modality). One store holds
/// vectors of a single dimension from a single encoder.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(int dim, std::string encoder_name);

    int dim() const { return dim_; }
    const std::string& encoder_name() const { return encoder_name_; }
    std::size_t size() const { return records_.size(); }

    /// Rejects dimension mismatches and duplicate (id, modality) keys.
    void put(const std::string& id, const QueryEmbedding& e);
    bool contains(const std::string& id, Modality m) const;
    /// Throws std::out_of_range with the missing key in the message.
    const QueryEmbedding& get(const std::string& id, Modality m) const;
    const std::vector<std::pair<std::string, QueryEmbedding>>& records() const { return records_; }

    void save(const std::string& path) const;
    static EmbeddingStore load(const std::string& path);

private:
    static std::string key(const std::string& id, Modality m);

    int dim_ = 0;
    std::string encoder_name_;
    std::vector<std::pair<std::string, QueryEmbedding>> records_;  // insertion order
    std::unordered_map<std::string, std::size_t> index_;           // key -> records_ index
};

}  // namespace melbridge::cond
