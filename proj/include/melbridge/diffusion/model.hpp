#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "melbridge/core/rng.hpp"
#include "melbridge/core/tensor.hpp"
#include "melbridge/diffusion/denoiser.hpp"
#include "melbridge/diffusion/schedule.hpp"
#include "melbridge/nn/param.hpp"

namespace melbridge::diffusion {

/// Denoiser network plus its learnable null-conditioning embedding and the
/// training step counter. The null embedding is what classifier-free
/// guidance substitutes for dropped conditioning rows.
template <typename S>
struct DiffusionModel {
    DenoiserConfig cfg;
    ParamStore<S> ps;
    UNet<S> net;
    std::size_t null_off;
    std::uint64_t step = 0;

    explicit DiffusionModel(const DenoiserConfig& c) : cfg(c), net(ps, c) {
        null_off = ps.add("null_cond", {c.cond_dim}, nn::Init::normal(0.02), false);
        ps.finalize();
    }

    void init(Rng& rng) { ps.init_params(rng); }

    /// (N, cond_dim) tensor of the null embedding repeated per row.
    TensorT<S> null_cond_rows(int n) const {
        TensorT<S> c({n, cfg.cond_dim});
        const S* p = ps.w(null_off);
        for (int i = 0; i < n; ++i)
            std::copy(p, p + cfg.cond_dim, c.ptr() + static_cast<std::size_t>(i) * cfg.cond_dim);
        return c;
    }

    /// Swap the live weights with another buffer (e.g. an EMA snapshot)
    /// around sampling; call again to restore.
    void swap_values(AlignedVec<S>& other) {
        if (other.size() != ps.values().size())
            throw std::invalid_argument("swap_values: buffer size mismatch");
        ps.values().swap(other);
    }
};

/// Forward noising: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, per item.
template <typename S>
TensorT<S> q_sample(const TensorT<S>& x0, const std::vector<int>& t, const TensorT<S>& noise,
                    const NoiseSchedule& sched) {
    if (!x0.same_shape(noise))
        throw std::invalid_argument("q_sample: noise shape " + shape_str(noise.shape) +
                                    " does not match x0 shape " + shape_str(x0.shape));
    const int n = x0.dim(0);
    if (static_cast<int>(t.size()) != n)
        throw std::invalid_argument("q_sample: need one timestep per batch item");
    TensorT<S> xt(x0.shape);
    const std::size_t per = x0.size() / static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
        if (t[i] < 0 || t[i] >= sched.n_steps)
            throw std::out_of_range("q_sample: timestep " + std::to_string(t[i]) +
                                    " outside [0, " + std::to_string(sched.n_steps) + ")");
        const double ab = sched.alpha_bar_for_step(t[i]);
        const S c0 = static_cast<S>(std::sqrt(ab));
        const S c1 = static_cast<S>(std::sqrt(1.0 - ab));
        const std::size_t base = static_cast<std::size_t>(i) * per;
        for (std::size_t j = 0; j < per; ++j)
            xt[base + j] = c0 * x0[base + j] + c1 * noise[base + j];
    }
    return xt;
}

template <typename S>
TensorT<S> q_sample(const TensorT<S>& x0, int t, const TensorT<S>& noise,
                    const NoiseSchedule& sched) {
    return q_sample(x0, std::vector<int>(static_cast<std::size_t>(x0.dim(0)), t), noise, sched);
}

/// One training step's loss: per-item uniform timestep, forward noising,
/// conditioning dropout to the learnable null embedding, MSE on the noise
/// prediction. Accumulates parameter gradients unless with_grads is false.
/// RNG draw order: timesteps, then the noise field, then dropout decisions.
template <typename S>
double training_loss(DiffusionModel<S>& m, const TensorT<S>& x0, const TensorT<S>& cond,
                     const NoiseSchedule& sched, double cond_dropout, Rng& rng,
                     bool with_grads = true) {
    if (x0.ndim() != 4 || x0.dim(0) < 1)
        throw std::invalid_argument("training_loss: batch must be (N, 1, H, W) with N >= 1");
    const int n = x0.dim(0);
    if (cond.ndim() != 2 || cond.dim(0) != n || cond.dim(1) != m.cfg.cond_dim)
        throw std::invalid_argument("training_loss: conditioning must be (N, " +
                                    std::to_string(m.cfg.cond_dim) + "), got " +
                                    shape_str(cond.shape));
    if (cond_dropout < 0.0 || cond_dropout > 1.0)
        throw std::invalid_argument("training_loss: cond_dropout must lie in [0, 1]");

    std::vector<int> t(n);
    for (int i = 0; i < n; ++i) t[i] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sched.n_steps)));
    TensorT<S> noise(x0.shape);
    noise.fill_normal(rng);
    const TensorT<S> xt = q_sample(x0, t, noise, sched);

    TensorT<S> cond_used = cond;
    std::vector<char> dropped(static_cast<std::size_t>(n), 0);
    const S* null_p = m.ps.w(m.null_off);
    for (int i = 0; i < n; ++i)
        if (rng.uniform() < cond_dropout) {
            dropped[static_cast<std::size_t>(i)] = 1;
            std::copy(null_p, null_p + m.cfg.cond_dim,
                      cond_used.ptr() + static_cast<std::size_t>(i) * m.cfg.cond_dim);
        }

    std::vector<double> tm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) tm[static_cast<std::size_t>(i)] = sched.model_timestep(t[i]);
    const TensorT<S> pred = m.net.forward(m.ps, xt, tm, cond_used);

    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(noise[i]);
        loss += d * d;
    }
    loss /= static_cast<double>(pred.size());

    if (with_grads) {
        TensorT<S> dy(pred.shape);
        const double scale = 2.0 / static_cast<double>(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i)
            dy[i] = static_cast<S>(scale * (static_cast<double>(pred[i]) - static_cast<double>(noise[i])));
        TensorT<S> dcond({n, m.cfg.cond_dim});
        dcond.zero();
        m.net.backward(m.ps, dy, &dcond);
        S* null_g = m.ps.g(m.null_off);
        for (int i = 0; i < n; ++i)
            if (dropped[static_cast<std::size_t>(i)])
                for (int d = 0; d < m.cfg.cond_dim; ++d)
                    null_g[d] += dcond[static_cast<std::size_t>(i) * m.cfg.cond_dim + d];
    }
    return loss;
}

/// Classifier-free-guided noise estimate:
///   eps = eps(null) + w * (eps(q) - eps(null)).
/// w = 0 and w = 1 take single forward passes, so those identities hold
/// bitwise. q may be (cond_dim) broadcast over the batch or (N, cond_dim).
template <typename S>
TensorT<S> guided_eps(DiffusionModel<S>& m, const TensorT<S>& xt, const std::vector<double>& t,
                      const TensorT<S>* q, double w) {
    if (w < 0.0) throw std::invalid_argument("guided_eps: guidance scale must be >= 0");
    const int n = xt.dim(0);
    if (q == nullptr) return m.net.forward(m.ps, xt, t, m.null_cond_rows(n));

    TensorT<S> cond;
    if (q->ndim() == 1 && q->dim(0) == m.cfg.cond_dim) {
        cond = TensorT<S>({n, m.cfg.cond_dim});
        for (int i = 0; i < n; ++i)
            std::copy(q->ptr(), q->ptr() + m.cfg.cond_dim,
                      cond.ptr() + static_cast<std::size_t>(i) * m.cfg.cond_dim);
    } else if (q->ndim() == 2 && q->dim(0) == n && q->dim(1) == m.cfg.cond_dim) {
        cond = *q;
    } else {
        throw std::invalid_argument("guided_eps: conditioning must be (cond_dim) or (N, cond_dim)");
    }

    if (w == 0.0) return m.net.forward(m.ps, xt, t, m.null_cond_rows(n));
    if (w == 1.0) return m.net.forward(m.ps, xt, t, cond);
    const TensorT<S> eu = m.net.forward(m.ps, xt, t, m.null_cond_rows(n));
    const TensorT<S> ec = m.net.forward(m.ps, xt, t, cond);
    TensorT<S> out(eu.shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<S>(static_cast<double>(eu[i]) +
                                w * (static_cast<double>(ec[i]) - static_cast<double>(eu[i])));
    return out;
}

/// Ancestral sampling from pure noise with the fixed-small posterior
/// variance. conds: one embedding row per sample, or null for unconditional.
/// Sample i draws from the caller RNG's fork(i), so each row is independent
/// of batch composition: row 0 of any batch matches a lone sample() call.
template <typename S>
TensorT<S> sample_batch(DiffusionModel<S>& m, const NoiseSchedule& sched, const TensorT<S>* conds,
                        double w, Rng& rng, int n_samples, bool clip_denoised = true,
                        float lo = -1.0f, float hi = 1.0f) {
    if (n_samples < 1) throw std::invalid_argument("sample_batch: need n_samples >= 1");
    if (conds && !(conds->ndim() == 2 && conds->dim(0) == n_samples &&
                   conds->dim(1) == m.cfg.cond_dim))
        throw std::invalid_argument("sample_batch: conds must be (n_samples, cond_dim)");
    const int h = m.cfg.n_mels, wd = m.cfg.clip_frames;
    const std::size_t per = static_cast<std::size_t>(h) * wd;

    std::vector<Rng> streams;
    streams.reserve(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) streams.push_back(rng.fork(static_cast<std::uint64_t>(i)));

    TensorT<S> x({n_samples, 1, h, wd});
    for (int i = 0; i < n_samples; ++i) {
        TensorT<S> z({1, 1, h, wd});
        z.fill_normal(streams[static_cast<std::size_t>(i)]);
        std::copy(z.ptr(), z.ptr() + per, x.ptr() + static_cast<std::size_t>(i) * per);
    }

    for (int k = sched.n_steps - 1; k >= 0; --k) {
        const std::vector<double> tm(static_cast<std::size_t>(n_samples),
                                     static_cast<double>(sched.model_timestep(k)));
        const TensorT<S> eps = guided_eps(m, x, tm, conds, w);
        const double ab = sched.alpha_bar_for_step(k);
        const double ab_prev = sched.alpha_bar_prev(k);
        const double beta = sched.beta[static_cast<std::size_t>(k)];
        const double alpha = 1.0 - beta;
        const double c_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
        const double c_xt = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab);
        const double sigma = std::sqrt(sched.posterior_variance(k));
        const double rs = 1.0 / std::sqrt(ab);
        const double rn = std::sqrt(1.0 - ab);
        for (int i = 0; i < n_samples; ++i) {
            const std::size_t base = static_cast<std::size_t>(i) * per;
            Rng& sr = streams[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < per; ++j) {
                double x0 = rs * (static_cast<double>(x[base + j]) -
                                  rn * static_cast<double>(eps[base + j]));
                if (clip_denoised) x0 = std::min<double>(hi, std::max<double>(lo, x0));
                double mu = c_x0 * x0 + c_xt * static_cast<double>(x[base + j]);
                if (k > 0) mu += sigma * sr.normal();
                x[base + j] = static_cast<S>(mu);
            }
        }
        if (!x.all_finite())
            throw std::runtime_error("sampling diverged at inference step " + std::to_string(k) +
                                     ": max |x| = " + std::to_string(x.max_abs()));
    }
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = std::min<S>(static_cast<S>(hi), std::max<S>(static_cast<S>(lo), x[i]));
    return x;
}

/// Single-sample convenience: q is one embedding (cond_dim) or null for the
/// unconditional model (w is then irrelevant). Deterministic given the RNG.
template <typename S>
TensorT<S> sample(DiffusionModel<S>& m, const NoiseSchedule& sched, const TensorT<S>* q, double w,
                  Rng& rng, bool clip_denoised = true, float lo = -1.0f, float hi = 1.0f) {
    const TensorT<S>* conds = nullptr;
    TensorT<S> row;
    if (q) {
        if (!(q->ndim() == 1 && q->dim(0) == m.cfg.cond_dim))
            throw std::invalid_argument("sample: conditioning must be a (cond_dim) vector");
        row = *q;
        row.reshape({1, m.cfg.cond_dim});
        conds = &row;
    }
    return sample_batch(m, sched, conds, w, rng, 1, clip_denoised, lo, hi);
}

}  // namespace melbridge::diffusion
