#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "melbridge/core/aligned.hpp"
#include "melbridge/core/rng.hpp"
#include "melbridge/core/tensor.hpp"

namespace melbridge::nn {

/// How a parameter tensor is filled by ParamStore::init.
struct Init {
    enum Kind { kZeros, kOnes, kNormal } kind = kZeros;
    double scale = 0.0;

    static Init zeros() { return {kZeros, 0.0}; }
    static Init ones() { return {kOnes, 0.0}; }
    static Init normal(double s) { return {kNormal, s}; }
};

struct ParamInfo {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t count = 0;
    Init init;
    bool decay = true;  // participates in decoupled weight decay
};

/// All learnable parameters of a model live in one flat vector, with a
/// parallel gradient vector. Layers register slices at construction and
/// keep only offsets, which makes the optimizer, EMA, checkpointing and
/// finite-difference perturbation one-loop affairs.
template <typename S>
class ParamStore {
public:
    /// Register a named tensor; returns its offset. Call before finalize().
    std::size_t add(std::string name, std::vector<int> shape, Init init, bool decay = true) {
        if (finalized_) throw std::logic_error("ParamStore: add after finalize");
        for (const auto& p : infos_)
            if (p.name == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
        ParamInfo info;
        info.name = std::move(name);
        info.count = TensorT<S>::count(shape);
        info.shape = std::move(shape);
        info.offset = total_;
        info.init = init;
        info.decay = decay;
        total_ += info.count;
        infos_.push_back(std::move(info));
        return infos_.back().offset;
    }

    void finalize() {
        w_.assign(total_, S{0});
        g_.assign(total_, S{0});
        finalized_ = true;
    }

    void init_params(Rng& rng) {
        check();
        for (const auto& p : infos_) {
            S* w = w_.data() + p.offset;
            switch (p.init.kind) {
                case Init::kZeros:
                    for (std::size_t i = 0; i < p.count; ++i) w[i] = S{0};
                    break;
                case Init::kOnes:
                    for (std::size_t i = 0; i < p.count; ++i) w[i] = S{1};
                    break;
                case Init::kNormal:
                    for (std::size_t i = 0; i < p.count; ++i)
                        w[i] = static_cast<S>(rng.normal() * p.init.scale);
                    break;
            }
        }
    }

    S* w(std::size_t off) { return w_.data() + off; }
    const S* w(std::size_t off) const { return w_.data() + off; }
    S* g(std::size_t off) { return g_.data() + off; }

    AlignedVec<S>& values() { return w_; }
    const AlignedVec<S>& values() const { return w_; }
    AlignedVec<S>& grads() { return g_; }

    void zero_grad() { std::fill(g_.begin(), g_.end(), S{0}); }

    std::size_t size() const { return total_; }
    const std::vector<ParamInfo>& infos() const { return infos_; }

    const ParamInfo& find(const std::string& name) const {
        for (const auto& p : infos_)
            if (p.name == name) return p;
        throw std::invalid_argument("ParamStore: no parameter named " + name);
    }

    bool all_finite() const {
        for (S v : w_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    void check() const {
        if (!finalized_) throw std::logic_error("ParamStore: not finalized");
    }

    std::vector<ParamInfo> infos_;
    AlignedVec<S> w_, g_;
    std::size_t total_ = 0;
    bool finalized_ = false;
};

}  // namespace melbridge::nn
