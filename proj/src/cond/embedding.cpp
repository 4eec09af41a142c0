#include "melbridge/cond/embedding.hpp"

#include "melbridge/core/io.hpp"

namespace melbridge::cond {

const char* to_string(Modality m) {
    switch (m) {
        case Modality::kImage: return "image";
        case Modality::kText: return "text";
        case Modality::kPriorGenerated: return "prior_generated";
        case Modality::kNull: return "null";
    }
    throw std::invalid_argument("unknown modality tag " + std::to_string(int(m)));
}

Modality modality_from_string(const std::string& s) {
    if (s == "image") return Modality::kImage;
    if (s == "text") return Modality::kText;
    if (s == "prior_generated") return Modality::kPriorGenerated;
    if (s == "null") return Modality::kNull;
    throw std::invalid_argument("unknown modality \"" + s + "\"");
}

void QueryEmbedding::validate() const {
    if (vector.empty()) throw std::invalid_argument("embedding \"" + source_id + "\" is empty");
    const double n = l2_norm(vector);
    if (std::abs(n - 1.0) > 1e-5)
        throw std::invalid_argument("embedding \"" + source_id + "\" is not unit-norm: |v| = " +
                                    std::to_string(n));
}

double l2_norm(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += double(x) * double(x);
    return std::sqrt(s);
}

void l2_normalize(std::vector<float>& v) {
    const double n = l2_norm(v);
    if (n < 1e-12) throw std::invalid_argument("cannot normalize a zero vector");
    for (float& x : v) x = static_cast<float>(double(x) / n);
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += double(a[i]) * double(b[i]);
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na < 1e-12 || nb < 1e-12) throw std::invalid_argument("cosine of a zero vector");
    return dot / (na * nb);
}

EmbeddingStore::EmbeddingStore(int dim, std::string encoder_name)
    : dim_(dim), encoder_name_(std::move(encoder_name)) {
    if (dim_ <= 0) throw std::invalid_argument("embedding dim must be positive, got " + std::to_string(dim_));
}

std::string EmbeddingStore::key(const std::string& id, Modality m) {
    return id + '\x1f' + to_string(m);
}

void EmbeddingStore::put(const std::string& id, const QueryEmbedding& e) {
    if (dim_ == 0) dim_ = e.dim();
    if (e.dim() != dim_)
        throw std::invalid_argument("store holds " + std::to_string(dim_) + "-dim embeddings, \"" +
                                    id + "\" has dim " + std::to_string(e.dim()));
    const std::string k = key(id, e.modality);
    if (index_.count(k))
        throw std::invalid_argument("duplicate embedding for id \"" + id + "\" modality " +
                                    to_string(e.modality));
    index_[k] = records_.size();
    records_.emplace_back(id, e);
}

bool EmbeddingStore::contains(const std::string& id, Modality m) const {
    return index_.count(key(id, m)) != 0;
}

const QueryEmbedding& EmbeddingStore::get(const std::string& id, Modality m) const {
    auto it = index_.find(key(id, m));
    if (it == index_.end())
        throw std::out_of_range("no embedding for id \"" + id + "\" modality " +
                                std::string(to_string(m)));
    return records_[it->second].second;
}

namespace {
constexpr char kMagic[5] = "EMB1";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void EmbeddingStore::save(const std::string& path) const {
    if (dim_ <= 0) throw std::invalid_argument("refusing to save a store with no dimension set");
    ByteWriter w(path);
    w.magic(kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u32(static_cast<std::uint32_t>(records_.size()));
    w.str(encoder_name_);
    for (const auto& [id, e] : records_) {
        w.str(id);
        w.u8(static_cast<std::uint8_t>(e.modality));
        w.f32_array(e.vector.data(), e.vector.size());
    }
    w.close();
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
    ByteReader r(path);
    r.expect_magic(kMagic);
    {
        const std::size_t at = r.offset();
        const std::uint32_t ver = r.u32();
        if (ver != kVersion)
            r.fail("unsupported embedding store version " + std::to_string(ver), at);
    }
    const std::size_t dim_at = r.offset();
    const std::uint32_t dim = r.u32();
    if (dim == 0 || dim > (1u << 20)) r.fail("embedding dim " + std::to_string(dim) + " out of range", dim_at);
    const std::uint32_t count = r.u32();
    EmbeddingStore s(static_cast<int>(dim), r.str());
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string id = r.str();
        const std::size_t tag_at = r.offset();
        const std::uint8_t tag = r.u8();
        if (tag > static_cast<std::uint8_t>(Modality::kNull))
            r.fail("unknown modality tag " + std::to_string(int(tag)), tag_at);
        QueryEmbedding e;
        e.modality = static_cast<Modality>(tag);
        e.source_id = id;
        e.vector.resize(dim);
        r.f32_array(e.vector.data(), dim);
        s.put(id, e);
    }
    if (!r.at_eof()) r.fail("trailing bytes after last record");
    return s;
}

}  // namespace melbridge::cond
