#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melbridge/cond/embedding.hpp"

namespace melbridge::cond {

/// Construction recipe for the synthetic image/text encoder pair. The pair
/// produces a controllable angular gap between paired image and text
/// embeddings of the same class, standing in for frozen real encoders at
/// desk scale.
///
/// Geometry: each class gets an anchor from an orthonormal set drawn from the
/// seed. The image encoder emits anchor + jitter·N(0, I), normalized. The
/// text encoder emits R·anchor + offset_magnitude·o, normalized, where R
/// rotates every coordinate 2-plane by rotation_angle and o is a unit vector
/// orthogonal to both the anchor and its rotation. With even dim and zero
/// jitter this gives exactly cos(q_text, q_img) = cos(angle)/sqrt(1 + m²).
struct ModalityGapSpec {
    int dim = 32;
    int n_classes = 8;
    std::uint64_t seed = 0;
    double rotation_angle = 1.3356;  // radians; with the default offset this puts the pair cosine at 0.22
    double offset_magnitude = 0.35;
    double jitter = 0.05;

    void validate() const;
    /// Closed-form cos(q_text, q_img) at zero jitter (exact for even dim).
    double expected_pair_cos() const;
};

class SyntheticEncoders {
public:
    explicit SyntheticEncoders(const ModalityGapSpec& spec);

    const ModalityGapSpec& spec() const { return spec_; }
    int dim() const { return spec_.dim; }
    int n_classes() const { return spec_.n_classes; }

    /// Image embedding for one example of a class; example_tag picks the
    /// jitter stream, so the same (class, tag) reproduces the same vector.
    QueryEmbedding encode_image(int class_idx, std::uint64_t example_tag) const;
    /// Text embedding for a class label; deterministic per class.
    QueryEmbedding encode_text(int class_idx) const;

    const std::vector<float>& anchor(int class_idx) const;
    const std::vector<float>& text_vector(int class_idx) const;

private:
    void check_class(int class_idx) const;

    ModalityGapSpec spec_;
    std::vector<std::vector<float>> anchors_;  // unit, mutually orthogonal
    std::vector<std::vector<float>> texts_;    // unit
};

}  // namespace melbridge::cond
