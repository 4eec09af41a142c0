#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "melbridge/core/tensor.hpp"
#include "melbridge/nn/param.hpp"

namespace melbridge::nn {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapM = Eigen::Map<const MatRM<S>>;

// Layers are single-threaded building blocks: forward() stashes whatever
// backward() needs, so each forward must be paired with at most one
// backward before the next forward. Gradients accumulate into the store.

template <typename S>
struct Linear {
    std::size_t w_off, b_off;
    int in, out;
    TensorT<S> x_;

    Linear(ParamStore<S>& ps, const std::string& name, int in_dim, int out_dim,
           bool zero_init = false)
        : in(in_dim), out(out_dim) {
        const Init wi = zero_init ? Init::zeros() : Init::normal(1.0 / std::sqrt(in_dim));
        w_off = ps.add(name + ".w", {out_dim, in_dim}, wi, true);
        b_off = ps.add(name + ".b", {out_dim}, Init::zeros(), false);
    }

    /// x: (N, in) -> (N, out)
    TensorT<S> forward(ParamStore<S>& ps, const TensorT<S>& x) {
        x_ = x;
        const int n = x.dim(0);
        TensorT<S> y({n, out});
        CMapM<S> xm(x.ptr(), n, in);
        CMapM<S> wm(ps.w(w_off), out, in);
        MapM<S> ym(y.ptr(), n, out);
        ym.noalias() = xm * wm.transpose();
        CMapM<S> bm(ps.w(b_off), 1, out);
        ym.rowwise() += bm.row(0);
        return y;
    }

    TensorT<S> backward(ParamStore<S>& ps, const TensorT<S>& dy) {
        const int n = dy.dim(0);
        TensorT<S> dx({n, in});
        CMapM<S> dym(dy.ptr(), n, out);
        CMapM<S> xm(x_.ptr(), n, in);
        CMapM<S> wm(ps.w(w_off), out, in);
        MapM<S> dwm(ps.g(w_off), out, in);
        MapM<S> dbm(ps.g(b_off), 1, out);
        MapM<S> dxm(dx.ptr(), n, in);
        dwm.noalias() += dym.transpose() * xm;
        dbm.row(0) += dym.colwise().sum();
        dxm.noalias() = dym * wm;
        return dx;
    }
};

template <typename S>
struct Conv2d {
    std::size_t w_off, b_off;
    int in_c, out_c, k, stride, pad;
    TensorT<S> x_;

    Conv2d(ParamStore<S>& ps, const std::string& name, int in_channels, int out_channels,
           int kernel, int stride_ = 1, int pad_ = -1, bool zero_init = false)
        : in_c(in_channels), out_c(out_channels), k(kernel), stride(stride_),
          pad(pad_ < 0 ? kernel / 2 : pad_) {
        const double fan_in = static_cast<double>(in_c) * k * k;
        const Init wi = zero_init ? Init::zeros() : Init::normal(1.0 / std::sqrt(fan_in));
        w_off = ps.add(name + ".w", {out_c, in_c, k, k}, wi, true);
        b_off = ps.add(name + ".b", {out_c}, Init::zeros(), false);
    }

    int out_dim(int d) const { return (d + 2 * pad - k) / stride + 1; }

    /// x: (N, in_c, H, W) -> (N, out_c, OH, OW); im2col + GEMM.
    TensorT<S> forward(ParamStore<S>& ps, const TensorT<S>& x) {
        x_ = x;
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int oh = out_dim(h), ow = out_dim(w);
        TensorT<S> y({n, out_c, oh, ow});
        const int patch = in_c * k * k;
        MatRM<S> col(patch, oh * ow);
        CMapM<S> wm(ps.w(w_off), out_c, patch);
        CMapM<S> bm(ps.w(b_off), out_c, 1);
        for (int ni = 0; ni < n; ++ni) {
            im2col(x.ptr() + static_cast<std::size_t>(ni) * in_c * h * w, h, w, col);
            MapM<S> ym(y.ptr() + static_cast<std::size_t>(ni) * out_c * oh * ow, out_c, oh * ow);
            ym.noalias() = wm * col;
            ym.colwise() += bm.col(0);
        }
        return y;
    }

    TensorT<S> backward(ParamStore<S>& ps, const TensorT<S>& dy) {
        const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
        const int oh = out_dim(h), ow = out_dim(w);
        const int patch = in_c * k * k;
        TensorT<S> dx({n, in_c, h, w});
        MatRM<S> col(patch, oh * ow);
        MatRM<S> dcol(patch, oh * ow);
        CMapM<S> wm(ps.w(w_off), out_c, patch);
        MapM<S> dwm(ps.g(w_off), out_c, patch);
        MapM<S> dbm(ps.g(b_off), out_c, 1);
        for (int ni = 0; ni < n; ++ni) {
            CMapM<S> dym(dy.ptr() + static_cast<std::size_t>(ni) * out_c * oh * ow, out_c, oh * ow);
            im2col(x_.ptr() + static_cast<std::size_t>(ni) * in_c * h * w, h, w, col);
            dwm.noalias() += dym * col.transpose();
            dbm.col(0) += dym.rowwise().sum();
            dcol.noalias() = wm.transpose() * dym;
            col2im(dcol, h, w, dx.ptr() + static_cast<std::size_t>(ni) * in_c * h * w);
        }
        return dx;
    }

private:
    void im2col(const S* x, int h, int w, MatRM<S>& col) const {
        const int oh = out_dim(h), ow = out_dim(w);
        for (int c = 0; c < in_c; ++c)
            for (int ki = 0; ki < k; ++ki)
                for (int kj = 0; kj < k; ++kj) {
                    S* row = col.data() + (static_cast<std::size_t>(c) * k * k + ki * k + kj) *
                                              static_cast<std::size_t>(oh) * ow;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride - pad + ki;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride - pad + kj;
                            row[oy * ow + ox] =
                                (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? x[(static_cast<std::size_t>(c) * h + iy) * w + ix]
                                    : S{0};
                        }
                    }
                }
    }

    void col2im(const MatRM<S>& dcol, int h, int w, S* dx) const {
        const int oh = out_dim(h), ow = out_dim(w);
        for (int c = 0; c < in_c; ++c)
            for (int ki = 0; ki < k; ++ki)
                for (int kj = 0; kj < k; ++kj) {
                    const S* row = dcol.data() +
                                   (static_cast<std::size_t>(c) * k * k + ki * k + kj) *
                                       static_cast<std::size_t>(oh) * ow;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride - pad + ki;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride - pad + kj;
                            if (ix >= 0 && ix < w)
                                dx[(static_cast<std::size_t>(c) * h + iy) * w + ix] +=
                                    row[oy * ow + ox];
                        }
                    }
                }
    }
};

template <typename S>
struct GroupNorm {
    std::size_t gamma_off, beta_off;
    int channels, groups;
    double eps = 1e-5;
    TensorT<S> xhat_;
    std::vector<double> rstd_;

    GroupNorm(ParamStore<S>& ps, const std::string& name, int channels_, int groups_ = 8)
        : channels(channels_), groups(groups_) {
        if (channels % groups != 0)
            throw std::invalid_argument("GroupNorm: channels must divide into groups");
        gamma_off = ps.add(name + ".gamma", {channels}, Init::ones(), false);
        beta_off = ps.add(name + ".beta", {channels}, Init::zeros(), false);
    }

    /// x: (N, C, H, W), normalized over each group's (C/G, H, W) block.
    TensorT<S> forward(ParamStore<S>& ps, const TensorT<S>& x) {
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int cg = channels / groups;
        const std::size_t block = static_cast<std::size_t>(cg) * h * w;
        xhat_ = TensorT<S>(x.shape);
        rstd_.assign(static_cast<std::size_t>(n) * groups, 0.0);
        TensorT<S> y(x.shape);
        const S* gamma = ps.w(gamma_off);
        const S* beta = ps.w(beta_off);
        for (int ni = 0; ni < n; ++ni)
            for (int g = 0; g < groups; ++g) {
                const std::size_t base =
                    (static_cast<std::size_t>(ni) * channels + static_cast<std::size_t>(g) * cg) *
                    static_cast<std::size_t>(h) * w;
                double mean = 0.0;
                for (std::size_t i = 0; i < block; ++i) mean += static_cast<double>(x[base + i]);
                mean /= static_cast<double>(block);
                double var = 0.0;
                for (std::size_t i = 0; i < block; ++i) {
                    const double d = static_cast<double>(x[base + i]) - mean;
                    var += d * d;
                }
                var /= static_cast<double>(block);
                const double rstd = 1.0 / std::sqrt(var + eps);
                rstd_[static_cast<std::size_t>(ni) * groups + g] = rstd;
                for (int c = 0; c < cg; ++c) {
                    const S ga = gamma[g * cg + c];
                    const S be = beta[g * cg + c];
                    const std::size_t cbase = base + static_cast<std::size_t>(c) * h * w;
                    for (int i = 0; i < h * w; ++i) {
                        const S xh = static_cast<S>((static_cast<double>(x[cbase + i]) - mean) * rstd);
                        xhat_[cbase + i] = xh;
                        y[cbase + i] = ga * xh + be;
                    }
                }
            }
        return y;
    }

    TensorT<S> backward(ParamStore<S>& ps, const TensorT<S>& dy) {
        const int n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
        const int cg = channels / groups;
        const std::size_t block = static_cast<std::size_t>(cg) * h * w;
        TensorT<S> dx(dy.shape);
        const S* gamma = ps.w(gamma_off);
        S* dgamma = ps.g(gamma_off);
        S* dbeta = ps.g(beta_off);
        for (int ni = 0; ni < n; ++ni)
            for (int g = 0; g < groups; ++g) {
                const std::size_t base =
                    (static_cast<std::size_t>(ni) * channels + static_cast<std::size_t>(g) * cg) *
                    static_cast<std::size_t>(h) * w;
                const double rstd = rstd_[static_cast<std::size_t>(ni) * groups + g];
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int c = 0; c < cg; ++c) {
                    const std::size_t cbase = base + static_cast<std::size_t>(c) * h * w;
                    const double ga = static_cast<double>(gamma[g * cg + c]);
                    for (int i = 0; i < h * w; ++i) {
                        const double dxh = static_cast<double>(dy[cbase + i]) * ga;
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * static_cast<double>(xhat_[cbase + i]);
                    }
                }
                const double inv = 1.0 / static_cast<double>(block);
                for (int c = 0; c < cg; ++c) {
                    const std::size_t cbase = base + static_cast<std::size_t>(c) * h * w;
                    const double ga = static_cast<double>(gamma[g * cg + c]);
                    double dg = 0.0, db = 0.0;
                    for (int i = 0; i < h * w; ++i) {
                        const double dyv = static_cast<double>(dy[cbase + i]);
                        const double xh = static_cast<double>(xhat_[cbase + i]);
                        dg += dyv * xh;
                        db += dyv;
                        dx[cbase + i] = static_cast<S>(
                            rstd * (dyv * ga - inv * sum_dxh - xh * inv * sum_dxh_xh));
                    }
                    dgamma[g * cg + c] += static_cast<S>(dg);
                    dbeta[g * cg + c] += static_cast<S>(db);
                }
            }
        return dx;
    }
};

template <typename S>
struct LayerNorm {
    std::size_t gamma_off, beta_off;
    int dim;
    double eps = 1e-5;
    TensorT<S> xhat_;
    std::vector<double> rstd_;

    LayerNorm(ParamStore<S>& ps, const std::string& name, int dim_) : dim(dim_) {
        gamma_off = ps.add(name + ".gamma", {dim}, Init::ones(), false);
        beta_off = ps.add(name + ".beta", {dim}, Init::zeros(), false);
    }

    /// Normalizes over the trailing dim; any leading shape.
    TensorT<S> forward(ParamStore<S>& ps, const TensorT<S>& x) {
        const std::size_t rows = x.size() / static_cast<std::size_t>(dim);
        xhat_ = TensorT<S>(x.shape);
        rstd_.assign(rows, 0.0);
        TensorT<S> y(x.shape);
        const S* gamma = ps.w(gamma_off);
        const S* beta = ps.w(beta_off);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * static_cast<std::size_t>(dim);
            double mean = 0.0;
            for (int i = 0; i < dim; ++i) mean += static_cast<double>(x[base + i]);
            mean /= dim;
            double var = 0.0;
            for (int i = 0; i < dim; ++i) {
                const double d = static_cast<double>(x[base + i]) - mean;
                var += d * d;
            }
            var /= dim;
            const double rstd = 1.0 / std::sqrt(var + eps);
            rstd_[r] = rstd;
            for (int i = 0; i < dim; ++i) {
                const S xh = static_cast<S>((static_cast<double>(x[base + i]) - mean) * rstd);
                xhat_[base + i] = xh;
                y[base + i] = gamma[i] * xh + beta[i];
            }
        }
        return y;
    }

    TensorT<S> backward(ParamStore<S>& ps, const TensorT<S>& dy) {
        const std::size_t rows = dy.size() / static_cast<std::size_t>(dim);
        TensorT<S> dx(dy.shape);
        const S* gamma = ps.w(gamma_off);
        S* dgamma = ps.g(gamma_off);
        S* dbeta = ps.g(beta_off);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * static_cast<std::size_t>(dim);
            const double rstd = rstd_[r];
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int i = 0; i < dim; ++i) {
                const double dxh = static_cast<double>(dy[base + i]) * static_cast<double>(gamma[i]);
                sum_dxh += dxh;
                sum_dxh_xh += dxh * static_cast<double>(xhat_[base + i]);
            }
            const double inv = 1.0 / dim;
            for (int i = 0; i < dim; ++i) {
                const double dyv = static_cast<double>(dy[base + i]);
                const double xh = static_cast<double>(xhat_[base + i]);
                dgamma[i] += static_cast<S>(dyv * xh);
                dbeta[i] += static_cast<S>(dyv);
                const double dxh = dyv * static_cast<double>(gamma[i]);
                dx[base + i] =
                    static_cast<S>(rstd * (dxh - inv * sum_dxh - xh * inv * sum_dxh_xh));
            }
        }
        return dx;
    }
};

template <typename S>
struct SiLU {
    TensorT<S> x_;

    TensorT<S> forward(const TensorT<S>& x) {
        x_ = x;
        TensorT<S> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = static_cast<double>(x[i]);
            y[i] = static_cast<S>(v / (1.0 + std::exp(-v)));
        }
        return y;
    }

    TensorT<S> backward(const TensorT<S>& dy) {
        TensorT<S> dx(dy.shape);
        for (std::size_t i = 0; i < dy.size(); ++i) {
            const double v = static_cast<double>(x_[i]);
            const double sig = 1.0 / (1.0 + std::exp(-v));
            dx[i] = static_cast<S>(static_cast<double>(dy[i]) * sig * (1.0 + v * (1.0 - sig)));
        }
        return dx;
    }
};

template <typename S>
struct Gelu {
    TensorT<S> x_;

    TensorT<S> forward(const TensorT<S>& x) {
        x_ = x;
        TensorT<S> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = static_cast<double>(x[i]);
            y[i] = static_cast<S>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
        }
        return y;
    }

    TensorT<S> backward(const TensorT<S>& dy) {
        TensorT<S> dx(dy.shape);
        for (std::size_t i = 0; i < dy.size(); ++i) {
            const double v = static_cast<double>(x_[i]);
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            dx[i] = static_cast<S>(static_cast<double>(dy[i]) * (cdf + v * pdf));
        }
        return dx;
    }
};

/// Nearest-neighbor 2x upsampling over the two trailing spatial dims.
template <typename S>
struct Upsample2x {
    std::vector<int> in_shape_;

    TensorT<S> forward(const TensorT<S>& x) {
        in_shape_ = x.shape;
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        TensorT<S> y({n, c, 2 * h, 2 * w});
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const S* src = x.ptr() + (static_cast<std::size_t>(ni) * c + ci) *
                                             static_cast<std::size_t>(h) * w;
                S* dst = y.ptr() + (static_cast<std::size_t>(ni) * c + ci) *
                                       static_cast<std::size_t>(4) * h * w;
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        const S v = src[i * w + j];
                        dst[(2 * i) * 2 * w + 2 * j] = v;
                        dst[(2 * i) * 2 * w + 2 * j + 1] = v;
                        dst[(2 * i + 1) * 2 * w + 2 * j] = v;
                        dst[(2 * i + 1) * 2 * w + 2 * j + 1] = v;
                    }
            }
        return y;
    }

    TensorT<S> backward(const TensorT<S>& dy) {
        const int n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
        TensorT<S> dx(in_shape_);
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                S* dst = dx.ptr() + (static_cast<std::size_t>(ni) * c + ci) *
                                        static_cast<std::size_t>(h) * w;
                const S* src = dy.ptr() + (static_cast<std::size_t>(ni) * c + ci) *
                                              static_cast<std::size_t>(4) * h * w;
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j)
                        dst[i * w + j] = src[(2 * i) * 2 * w + 2 * j] +
                                         src[(2 * i) * 2 * w + 2 * j + 1] +
                                         src[(2 * i + 1) * 2 * w + 2 * j] +
                                         src[(2 * i + 1) * 2 * w + 2 * j + 1];
            }
        return dx;
    }
};

/// Token lookup table; gradients scatter back into the table rows.
template <typename S>
struct Embedding {
    std::size_t table_off;
    int vocab, dim;
    std::vector<int> tokens_;

    Embedding(ParamStore<S>& ps, const std::string& name, int vocab_, int dim_,
              double init_scale = 0.02)
        : vocab(vocab_), dim(dim_) {
        table_off = ps.add(name + ".table", {vocab_, dim_}, Init::normal(init_scale), false);
    }

    /// tokens: n flat ids -> (n, dim)
    TensorT<S> forward(ParamStore<S>& ps, const std::vector<int>& tokens) {
        tokens_ = tokens;
        TensorT<S> y({static_cast<int>(tokens.size()), dim});
        const S* table = ps.w(table_off);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const int t = tokens[i];
            if (t < 0 || t >= vocab) throw std::out_of_range("Embedding: token id out of range");
            for (int d = 0; d < dim; ++d)
                y[i * static_cast<std::size_t>(dim) + d] =
                    table[static_cast<std::size_t>(t) * dim + d];
        }
        return y;
    }

    void backward(ParamStore<S>& ps, const TensorT<S>& dy) {
        S* g = ps.g(table_off);
        for (std::size_t i = 0; i < tokens_.size(); ++i)
            for (int d = 0; d < dim; ++d)
                g[static_cast<std::size_t>(tokens_[i]) * dim + d] +=
                    dy[i * static_cast<std::size_t>(dim) + d];
    }
};

/// Sinusoidal position/timestep features, (n, dim); no parameters.
template <typename S>
TensorT<S> sinusoidal_embedding(const std::vector<double>& t, int dim,
                                double max_period = 10000.0) {
    const int half = dim / 2;
    TensorT<S> y({static_cast<int>(t.size()), dim});
    for (std::size_t n = 0; n < t.size(); ++n) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(max_period) * i / half);
            y[n * static_cast<std::size_t>(dim) + i] = static_cast<S>(std::cos(t[n] * freq));
            y[n * static_cast<std::size_t>(dim) + half + i] =
                static_cast<S>(std::sin(t[n] * freq));
        }
        if (dim % 2) y[n * static_cast<std::size_t>(dim) + dim - 1] = S{0};
    }
    return y;
}

}  // namespace melbridge::nn
