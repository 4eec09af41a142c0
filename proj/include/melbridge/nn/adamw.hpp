#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "melbridge/nn/param.hpp"

namespace melbridge::nn {

/// Adam with decoupled weight decay. Moments are kept in double regardless
/// of the parameter scalar type so long runs stay numerically stable and
/// bit-reproducible across float/double model instantiations of a config.
template <typename S>
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    std::vector<double> m, v;
    std::int64_t step = 0;

    void reset(const ParamStore<S>& ps) {
        m.assign(ps.size(), 0.0);
        v.assign(ps.size(), 0.0);
        step = 0;
    }

    void update(ParamStore<S>& ps) {
        if (m.size() != ps.size()) reset(ps);
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        auto& w = ps.values();
        auto& g = ps.grads();
        for (const auto& info : ps.infos()) {
            const double wd = info.decay ? weight_decay : 0.0;
            for (std::size_t i = info.offset; i < info.offset + info.count; ++i) {
                const double gi = static_cast<double>(g[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                const double wi = static_cast<double>(w[i]);
                w[i] = static_cast<S>(wi - lr * (mhat / (std::sqrt(vhat) + eps) + wd * wi));
            }
        }
    }
};

/// Exponential moving average of the parameter vector; sampling can run
/// from the smoothed weights while training continues on the raw ones.
template <typename S>
struct Ema {
    double decay = 0.9999;
    std::vector<double> shadow;

    void reset(const ParamStore<S>& ps) {
        shadow.resize(ps.size());
        for (std::size_t i = 0; i < shadow.size(); ++i)
            shadow[i] = static_cast<double>(ps.values()[i]);
    }

    void update(const ParamStore<S>& ps) {
        if (shadow.size() != ps.size()) {
            reset(ps);
            return;
        }
        const auto& w = ps.values();
        for (std::size_t i = 0; i < shadow.size(); ++i)
            shadow[i] = decay * shadow[i] + (1.0 - decay) * static_cast<double>(w[i]);
    }

    AlignedVec<S> snapshot() const {
        AlignedVec<S> out(shadow.size());
        for (std::size_t i = 0; i < shadow.size(); ++i) out[i] = static_cast<S>(shadow[i]);
        return out;
    }
};

}  // namespace melbridge::nn
