#include "melbridge/cond/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "melbridge/core/rng.hpp"

namespace melbridge::cond {

namespace {

constexpr std::uint64_t kAnchorStream = 0x616e63686f72ull;  // "anchor"
constexpr std::uint64_t kOffsetStream = 0x6f6666736574ull;  // "offset"
constexpr std::uint64_t kJitterStream = 0x6a6974746572ull;  // "jitter"

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

void axpy(double c, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
}

std::vector<float> to_unit_f32(const std::vector<double>& v) {
    const double n = norm(v);
    if (n < 1e-12) throw std::runtime_error("synthetic encoder produced a zero vector");
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
    return out;
}

/// Rotate each coordinate 2-plane (0,1), (2,3), ... by angle; with odd
/// dimension the last coordinate is left fixed. For even dimension this has
/// the exact property vᵀRv = cos(angle)·‖v‖² for every v.
std::vector<double> rotate_planes(const std::vector<double>& v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    std::vector<double> out(v.size());
    std::size_t i = 0;
    for (; i + 1 < v.size(); i += 2) {
        out[i] = c * v[i] - s * v[i + 1];
        out[i + 1] = s * v[i] + c * v[i + 1];
    }
    if (i < v.size()) out[i] = v[i];
    return out;
}

}  // namespace

void ModalityGapSpec::validate() const {
    if (dim < 2) throw std::invalid_argument("embedding dim must be >= 2, got " + std::to_string(dim));
    if (n_classes < 1) throw std::invalid_argument("need at least one class");
    if (n_classes > dim)
        throw std::invalid_argument("orthogonal anchors need n_classes <= dim (" +
                                    std::to_string(n_classes) + " > " + std::to_string(dim) + ")");
    if (jitter < 0.0 || offset_magnitude < 0.0)
        throw std::invalid_argument("jitter and offset magnitude must be non-negative");
}

double ModalityGapSpec::expected_pair_cos() const {
    return std::cos(rotation_angle) / std::sqrt(1.0 + offset_magnitude * offset_magnitude);
}

SyntheticEncoders::SyntheticEncoders(const ModalityGapSpec& spec) : spec_(spec) {
    spec_.validate();
    const std::size_t d = static_cast<std::size_t>(spec_.dim);
    const Rng base(spec_.seed);

    // Orthonormal anchors by Gram-Schmidt over seeded Gaussian draws.
    Rng ra = base.fork(kAnchorStream);
    std::vector<std::vector<double>> anchors;
    anchors.reserve(static_cast<std::size_t>(spec_.n_classes));
    while (anchors.size() < static_cast<std::size_t>(spec_.n_classes)) {
        std::vector<double> v(d);
        for (auto& x : v) x = ra.normal();
        for (const auto& a : anchors) axpy(-dot(v, a), a, v);
        const double n = norm(v);
        if (n < 1e-9) continue;  // rare degenerate draw; take the next one
        for (auto& x : v) x /= n;
        anchors.push_back(std::move(v));
    }

    Rng ro = base.fork(kOffsetStream);
    anchors_.reserve(anchors.size());
    texts_.reserve(anchors.size());
    for (const auto& a : anchors) {
        std::vector<double> rot = rotate_planes(a, spec_.rotation_angle);

        std::vector<double> text = rot;
        if (spec_.offset_magnitude > 0.0) {
            // Offset orthogonal to both the anchor and its rotation, so the
            // pair cosine follows the closed form in ModalityGapSpec. Project
            // against an orthonormal basis of their span (the two are not
            // orthogonal to each other).
            std::vector<double> b2 = rot;
            axpy(-dot(b2, a), a, b2);
            const double b2n = norm(b2);
            if (b2n > 1e-12)
                for (auto& x : b2) x /= b2n;
            std::vector<double> o;
            double n = 0.0;
            for (int attempt = 0; attempt < 16; ++attempt) {
                o.assign(d, 0.0);
                for (auto& x : o) x = ro.normal();
                axpy(-dot(o, a), a, o);
                if (b2n > 1e-12) axpy(-dot(o, b2), b2, o);
                n = norm(o);
                if (n > 1e-9) break;
            }
            if (n <= 1e-9)
                throw std::invalid_argument(
                    "no direction orthogonal to an anchor and its rotation exists at dim " +
                    std::to_string(spec_.dim) + "; raise dim or set offset_magnitude = 0");
            axpy(spec_.offset_magnitude / n, o, text);
        }

        anchors_.push_back(to_unit_f32(a));
        texts_.push_back(to_unit_f32(text));
    }
}

void SyntheticEncoders::check_class(int class_idx) const {
    if (class_idx < 0 || class_idx >= spec_.n_classes)
        throw std::out_of_range("class index " + std::to_string(class_idx) + " outside [0, " +
                                std::to_string(spec_.n_classes) + ")");
}

QueryEmbedding SyntheticEncoders::encode_image(int class_idx, std::uint64_t example_tag) const {
    check_class(class_idx);
    const auto& a = anchors_[static_cast<std::size_t>(class_idx)];
    std::vector<double> v(a.begin(), a.end());
    if (spec_.jitter > 0.0) {
        Rng rj = Rng(spec_.seed)
                     .fork(kJitterStream)
                     .fork(static_cast<std::uint64_t>(class_idx))
                     .fork(example_tag);
        for (auto& x : v) x += spec_.jitter * rj.normal();
    }
    QueryEmbedding e;
    e.vector = to_unit_f32(v);
    e.modality = Modality::kImage;
    e.source_id = "synthetic:image:c" + std::to_string(class_idx) + ":e" + std::to_string(example_tag);
    return e;
}

QueryEmbedding SyntheticEncoders::encode_text(int class_idx) const {
    check_class(class_idx);
    QueryEmbedding e;
    e.vector = texts_[static_cast<std::size_t>(class_idx)];
    e.modality = Modality::kText;
    e.source_id = "synthetic:text:c" + std::to_string(class_idx);
    return e;
}

const std::vector<float>& SyntheticEncoders::anchor(int class_idx) const {
    check_class(class_idx);
    return anchors_[static_cast<std::size_t>(class_idx)];
}

const std::vector<float>& SyntheticEncoders::text_vector(int class_idx) const {
    check_class(class_idx);
    return texts_[static_cast<std::size_t>(class_idx)];
}

}  // namespace melbridge::cond
