#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "melbridge/nn/layers.hpp"
#include "melbridge/nn/param.hpp"

namespace melbridge::nn {

/// Multi-head scaled dot-product attention over (N, T, D) sequences.
/// Self-attention when no context is given; cross-attention reads keys and
/// values from a (N, Tc, D) context. The causal flag applies a strict
/// lower-triangular mask (self-attention only).
template <typename S>
struct MultiHeadAttention {
    int dim, heads, head_dim;
    Linear<S> q_, k_, v_, out_;
    TensorT<S> q_act_, k_act_, v_act_;
    std::vector<MatRM<S>> attn_;  // one (T, Tc) softmax per (n, head)
    int n_ = 0, t_ = 0, tc_ = 0;
    bool cross_ = false;

    MultiHeadAttention(ParamStore<S>& ps, const std::string& name, int dim_, int heads_)
        : dim(dim_), heads(heads_), head_dim(dim_ / heads_),
          q_(ps, name + ".q", dim_, dim_),
          k_(ps, name + ".k", dim_, dim_),
          v_(ps, name + ".v", dim_, dim_),
          out_(ps, name + ".out", dim_, dim_, /*zero_init=*/true) {
        if (dim_ % heads_ != 0)
            throw std::invalid_argument("attention: dim must divide into heads");
    }

    TensorT<S> forward(ParamStore<S>& ps, const TensorT<S>& x,
                       const TensorT<S>* context = nullptr, bool causal = false) {
        n_ = x.dim(0);
        t_ = x.dim(1);
        cross_ = context != nullptr;
        const TensorT<S>& kv = cross_ ? *context : x;
        tc_ = kv.dim(1);
        if (cross_ && causal)
            throw std::invalid_argument("attention: causal mask is for self-attention");

        TensorT<S> xf = x;
        xf.reshape({n_ * t_, dim});
        TensorT<S> kvf = kv;
        kvf.reshape({n_ * tc_, dim});
        q_act_ = q_.forward(ps, xf);
        k_act_ = k_.forward(ps, kvf);
        v_act_ = v_.forward(ps, kvf);

        const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
        attn_.assign(static_cast<std::size_t>(n_) * heads, MatRM<S>());
        TensorT<S> ctx({n_ * t_, dim});
        CMapM<S> qm(q_act_.ptr(), n_ * t_, dim);
        CMapM<S> km(k_act_.ptr(), n_ * tc_, dim);
        CMapM<S> vm(v_act_.ptr(), n_ * tc_, dim);
        MapM<S> cm(ctx.ptr(), n_ * t_, dim);
        for (int ni = 0; ni < n_; ++ni)
            for (int h = 0; h < heads; ++h) {
                const auto qh = qm.block(ni * t_, h * head_dim, t_, head_dim);
                const auto kh = km.block(ni * tc_, h * head_dim, tc_, head_dim);
                const auto vh = vm.block(ni * tc_, h * head_dim, tc_, head_dim);
                MatRM<S> scores = qh * kh.transpose() * static_cast<S>(scale);
                if (causal)
                    for (int i = 0; i < t_; ++i)
                        for (int j = i + 1; j < tc_; ++j)
                            scores(i, j) = static_cast<S>(-1e30);
                // row-wise softmax in double for stability
                MatRM<S>& a = attn_[static_cast<std::size_t>(ni) * heads + h];
                a.resize(t_, tc_);
                for (int i = 0; i < t_; ++i) {
                    double mx = -1e300;
                    for (int j = 0; j < tc_; ++j)
                        mx = std::max(mx, static_cast<double>(scores(i, j)));
                    double sum = 0.0;
                    for (int j = 0; j < tc_; ++j) {
                        const double e = std::exp(static_cast<double>(scores(i, j)) - mx);
                        a(i, j) = static_cast<S>(e);
                        sum += e;
                    }
                    for (int j = 0; j < tc_; ++j)
                        a(i, j) = static_cast<S>(static_cast<double>(a(i, j)) / sum);
                }
                cm.block(ni * t_, h * head_dim, t_, head_dim).noalias() = a * vh;
            }
        TensorT<S> y = out_.forward(ps, ctx);
        y.reshape({n_, t_, dim});
        return y;
    }

    /// Returns dx; for cross-attention also accumulates into *dcontext
    /// (which must be zero-initialized to the context shape by the caller).
    TensorT<S> backward(ParamStore<S>& ps, const TensorT<S>& dy,
                        TensorT<S>* dcontext = nullptr) {
        TensorT<S> dyf = dy;
        dyf.reshape({n_ * t_, dim});
        TensorT<S> dctx = out_.backward(ps, dyf);

        TensorT<S> dq({n_ * t_, dim}), dk({n_ * tc_, dim}), dv({n_ * tc_, dim});
        const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
        CMapM<S> qm(q_act_.ptr(), n_ * t_, dim);
        CMapM<S> km(k_act_.ptr(), n_ * tc_, dim);
        CMapM<S> vm(v_act_.ptr(), n_ * tc_, dim);
        CMapM<S> dcm(dctx.ptr(), n_ * t_, dim);
        MapM<S> dqm(dq.ptr(), n_ * t_, dim);
        MapM<S> dkm(dk.ptr(), n_ * tc_, dim);
        MapM<S> dvm(dv.ptr(), n_ * tc_, dim);
        for (int ni = 0; ni < n_; ++ni)
            for (int h = 0; h < heads; ++h) {
                const auto qh = qm.block(ni * t_, h * head_dim, t_, head_dim);
                const auto kh = km.block(ni * tc_, h * head_dim, tc_, head_dim);
                const auto vh = vm.block(ni * tc_, h * head_dim, tc_, head_dim);
                const auto dch = dcm.block(ni * t_, h * head_dim, t_, head_dim);
                const MatRM<S>& a = attn_[static_cast<std::size_t>(ni) * heads + h];

                MatRM<S> da = dch * vh.transpose();          // (T, Tc)
                dvm.block(ni * tc_, h * head_dim, tc_, head_dim).noalias() =
                    a.transpose() * dch;
                // softmax backward: ds = (da - rowsum(da .* a)) .* a
                MatRM<S> ds(t_, tc_);
                for (int i = 0; i < t_; ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < tc_; ++j)
                        dot += static_cast<double>(da(i, j)) * static_cast<double>(a(i, j));
                    for (int j = 0; j < tc_; ++j)
                        ds(i, j) = static_cast<S>(
                            (static_cast<double>(da(i, j)) - dot) *
                            static_cast<double>(a(i, j)) * scale);
                }
                dqm.block(ni * t_, h * head_dim, t_, head_dim).noalias() = ds * kh;
                dkm.block(ni * tc_, h * head_dim, tc_, head_dim).noalias() =
                    ds.transpose() * qh;
            }

        TensorT<S> dx = q_.backward(ps, dq);
        TensorT<S> dkv_k = k_.backward(ps, dk);
        TensorT<S> dkv_v = v_.backward(ps, dv);
        if (cross_) {
            if (!dcontext) throw std::invalid_argument("attention: missing dcontext");
            for (std::size_t i = 0; i < dcontext->size(); ++i)
                (*dcontext)[i] += dkv_k[i] + dkv_v[i];
        } else {
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dkv_k[i] + dkv_v[i];
        }
        dx.reshape({n_, t_, dim});
        return dx;
    }
};

}  // namespace melbridge::nn
