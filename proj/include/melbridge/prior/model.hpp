#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "melbridge/core/rng.hpp"
#include "melbridge/core/tensor.hpp"
#include "melbridge/diffusion/model.hpp"
#include "melbridge/nn/adamw.hpp"
#include "melbridge/nn/attention.hpp"
#include "melbridge/nn/layers.hpp"
#include "melbridge/nn/param.hpp"

namespace melbridge::prior {

using diffusion::NoiseSchedule;
using nn::ParamStore;

/// Causal-transformer prior that denoises an image embedding conditioned on
/// text tokens and the text embedding. It predicts the clean embedding
/// directly (the readout "serves as the prediction" of the target), so
/// sampling uses the x0-form posterior mean.
struct PriorConfig {
    int n_layers = 12;
    int model_dim = 128;
    int n_heads = 4;
    int token_seq_len = 16;
    int embed_dim = 32;  // must match the conditioning dimension downstream
    int vocab_size = 1024;
    int mlp_ratio = 4;
    int train_steps_T = 1000;
    int inference_steps = 64;
    double cfg_dropout = 0.1;
    double ema_decay = 0.9999;
    double lr = 1e-4;
    double weight_decay = 0.06;
    int batch = 32;
    bool renorm_output = false;  // optionally L2-normalize sampled embeddings

    int seq_len() const { return token_seq_len + 4; }

    void validate() const {
        if (n_layers < 1 || model_dim < 1 || n_heads < 1 || token_seq_len < 1 ||
            embed_dim < 1 || mlp_ratio < 1 || batch < 1)
            throw std::invalid_argument("prior config: all sizes must be positive");
        if (vocab_size < 2) throw std::invalid_argument("prior config: vocab_size must be >= 2");
        if (model_dim % n_heads != 0)
            throw std::invalid_argument("prior config: model_dim " + std::to_string(model_dim) +
                                        " not divisible by n_heads " + std::to_string(n_heads));
        if (train_steps_T < 1 || inference_steps < 1 || inference_steps > train_steps_T)
            throw std::invalid_argument("prior config: need 1 <= inference_steps <= train_steps_T");
        if (cfg_dropout < 0.0 || cfg_dropout > 1.0 || ema_decay < 0.0 || ema_decay > 1.0)
            throw std::invalid_argument("prior config: rates must lie in [0, 1]");
        if (lr <= 0.0 || weight_decay < 0.0)
            throw std::invalid_argument("prior config: bad optimizer settings");
    }

    /// Desk-scale settings paired with the synthetic encoders.
    static PriorConfig desk_preset() { return {}; }
};

/// Pre-norm residual block: causal self-attention then a pointwise MLP.
template <typename S>
struct PriorBlock {
    nn::LayerNorm<S> ln1;
    nn::MultiHeadAttention<S> attn;
    nn::LayerNorm<S> ln2;
    nn::Linear<S> fc1;
    nn::Gelu<S> act;
    nn::Linear<S> fc2;
    int dim;
    int n_ = 0, l_ = 0;

    PriorBlock(ParamStore<S>& ps, const std::string& name, int dim_, int heads, int hidden)
        : ln1(ps, name + ".ln1", dim_),
          attn(ps, name + ".attn", dim_, heads),
          ln2(ps, name + ".ln2", dim_),
          fc1(ps, name + ".fc1", dim_, hidden),
          fc2(ps, name + ".fc2", hidden, dim_, /*zero_init=*/true),
          dim(dim_) {}

    TensorT<S> forward(ParamStore<S>& ps, const TensorT<S>& x) {
        n_ = x.dim(0);
        l_ = x.dim(1);
        const TensorT<S> h = attn.forward(ps, ln1.forward(ps, x), nullptr, /*causal=*/true);
        TensorT<S> y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += h[i];

        TensorT<S> mid = ln2.forward(ps, y);
        mid.reshape({n_ * l_, dim});
        TensorT<S> mlp = fc2.forward(ps, act.forward(fc1.forward(ps, mid)));
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += mlp[i];
        return y;
    }

    TensorT<S> backward(ParamStore<S>& ps, const TensorT<S>& dy) {
        TensorT<S> dflat = dy;
        dflat.reshape({n_ * l_, dim});
        TensorT<S> dmid = fc1.backward(ps, act.backward(fc2.backward(ps, dflat)));
        dmid.reshape({n_, l_, dim});
        TensorT<S> dy1 = ln2.backward(ps, dmid);
        for (std::size_t i = 0; i < dy1.size(); ++i) dy1[i] += dy[i];

        const TensorT<S> da = attn.backward(ps, dy1);
        TensorT<S> dx = ln1.backward(ps, da);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy1[i];
        return dx;
    }
};

/// The assembled transformer input. Rows are laid out strictly in the order
/// [text tokens, text embedding, step embedding, noised image embedding,
/// final input embedding]; there is no public constructor, so no caller can
/// assemble the slots in any other order.
template <typename S>
class PriorInputSequence {
public:
    const TensorT<S>& activations() const { return x_; }
    int batch() const { return x_.dim(0); }
    int length() const { return x_.dim(1); }
    const std::vector<char>& dropped() const { return dropped_; }
    const std::vector<double>& steps() const { return t_; }

private:
    template <typename U> friend struct PriorModel;
    PriorInputSequence() = default;

    TensorT<S> x_;               // (N, seq_len, model_dim)
    std::vector<char> dropped_;  // rows whose text inputs are the placeholders
    std::vector<double> t_;      // per-row diffusion step
};

template <typename S>
struct PriorModel {
    PriorConfig cfg;
    ParamStore<S> ps;
    nn::Embedding<S> tok_emb;
    nn::Linear<S> text_proj, step_proj, img_proj;
    nn::LayerNorm<S> ln_f;
    nn::Linear<S> readout;  // zero-init: a fresh model predicts exactly zero
    std::size_t ph_tokens_off, ph_text_off, final_off, pos_off;
    std::vector<PriorBlock<S>> blocks;
    nn::AdamW<S> opt;
    nn::Ema<S> ema;
    std::uint64_t step = 0;
    std::uint64_t forward_calls = 0;  // diagnostic: counts transformer passes

    explicit PriorModel(const PriorConfig& c)
        : cfg((c.validate(), c)),  // validate before any layer registers parameters
          tok_emb(ps, "tok", c.vocab_size, c.model_dim),
          text_proj(ps, "text_proj", c.embed_dim, c.model_dim),
          step_proj(ps, "step_proj", c.model_dim, c.model_dim),
          img_proj(ps, "img_proj", c.embed_dim, c.model_dim),
          ln_f(ps, "ln_f", c.model_dim),
          readout(ps, "readout", c.model_dim, c.embed_dim, /*zero_init=*/true) {
        ph_tokens_off = ps.add("placeholder.tokens", {c.model_dim}, nn::Init::normal(0.02), false);
        ph_text_off = ps.add("placeholder.text", {c.model_dim}, nn::Init::normal(0.02), false);
        final_off = ps.add("final_emb", {c.model_dim}, nn::Init::normal(0.02), false);
        pos_off = ps.add("pos_emb", {cfg.seq_len(), c.model_dim}, nn::Init::normal(0.02), false);
        blocks.reserve(static_cast<std::size_t>(c.n_layers));
        for (int i = 0; i < c.n_layers; ++i)
            blocks.emplace_back(ps, "block" + std::to_string(i), c.model_dim, c.n_heads,
                                c.model_dim * c.mlp_ratio);
        ps.finalize();
        opt.lr = c.lr;
        opt.weight_decay = c.weight_decay;
        ema.decay = c.ema_decay;
    }

    void init(Rng& rng) {
        ps.init_params(rng);
        opt.reset(ps);
        ema.reset(ps);
        step = 0;
    }

    /// Swap live weights with another buffer (e.g. an EMA snapshot); call
    /// again to restore.
    void swap_values(AlignedVec<S>& other) {
        if (other.size() != ps.values().size())
            throw std::invalid_argument("swap_values: buffer size mismatch");
        ps.values().swap(other);
    }

    /// Assembles the input sequence in the mandated slot order and adds the
    /// learned positional embeddings. Rows flagged in `dropped` use the
    /// learnable placeholders for tokens and text embedding (classifier-free
    /// training and the unconditional sampling branch).
    PriorInputSequence<S> build_input_sequence(const std::vector<std::vector<int>>& tokens,
                                               const TensorT<S>& q_text,
                                               const std::vector<double>& t,
                                               const TensorT<S>& noised_img,
                                               std::vector<char> dropped = {}) {
        const int n = static_cast<int>(tokens.size());
        if (n < 1) throw std::invalid_argument("build_input_sequence: empty batch");
        for (const auto& row : tokens)
            if (static_cast<int>(row.size()) != cfg.token_seq_len)
                throw std::invalid_argument("build_input_sequence: every token row must have " +
                                            std::to_string(cfg.token_seq_len) + " ids");
        auto check_emb = [&](const TensorT<S>& e, const char* what) {
            if (!(e.ndim() == 2 && e.dim(0) == n && e.dim(1) == cfg.embed_dim))
                throw std::invalid_argument(std::string("build_input_sequence: ") + what +
                                            " must be (N, " + std::to_string(cfg.embed_dim) +
                                            "), got " + shape_str(e.shape));
        };
        check_emb(q_text, "text embeddings");
        check_emb(noised_img, "noised image embeddings");
        if (static_cast<int>(t.size()) != n)
            throw std::invalid_argument("build_input_sequence: need one step per row");
        if (dropped.empty()) dropped.assign(static_cast<std::size_t>(n), 0);
        if (static_cast<int>(dropped.size()) != n)
            throw std::invalid_argument("build_input_sequence: dropped flags size mismatch");

        const int L = cfg.seq_len(), D = cfg.model_dim, T = cfg.token_seq_len;
        std::vector<int> flat;
        flat.reserve(static_cast<std::size_t>(n) * T);
        for (const auto& row : tokens) flat.insert(flat.end(), row.begin(), row.end());

        const TensorT<S> te = tok_emb.forward(ps, flat);                                // (N*T, D)
        const TensorT<S> tx = text_proj.forward(ps, q_text);                            // (N, D)
        const TensorT<S> se = step_proj.forward(ps, nn::sinusoidal_embedding<S>(t, D)); // (N, D)
        const TensorT<S> ie = img_proj.forward(ps, noised_img);                         // (N, D)

        PriorInputSequence<S> seq;
        seq.x_ = TensorT<S>({n, L, D});
        const S* ph_tok = ps.w(ph_tokens_off);
        const S* ph_text = ps.w(ph_text_off);
        const S* fin = ps.w(final_off);
        const S* pos = ps.w(pos_off);
        for (int i = 0; i < n; ++i) {
            S* row = seq.x_.ptr() + static_cast<std::size_t>(i) * L * D;
            const bool drop = dropped[static_cast<std::size_t>(i)] != 0;
            for (int p = 0; p < T; ++p) {
                const S* src =
                    drop ? ph_tok : te.ptr() + (static_cast<std::size_t>(i) * T + p) * D;
                std::copy(src, src + D, row + static_cast<std::size_t>(p) * D);
            }
            const S* txt = drop ? ph_text : tx.ptr() + static_cast<std::size_t>(i) * D;
            std::copy(txt, txt + D, row + static_cast<std::size_t>(T) * D);
            std::copy(se.ptr() + static_cast<std::size_t>(i) * D,
                      se.ptr() + static_cast<std::size_t>(i + 1) * D,
                      row + static_cast<std::size_t>(T + 1) * D);
            std::copy(ie.ptr() + static_cast<std::size_t>(i) * D,
                      ie.ptr() + static_cast<std::size_t>(i + 1) * D,
                      row + static_cast<std::size_t>(T + 2) * D);
            std::copy(fin, fin + D, row + static_cast<std::size_t>(T + 3) * D);
            for (std::size_t j = 0; j < static_cast<std::size_t>(L) * D; ++j) row[j] += pos[j];
        }
        seq.dropped_ = std::move(dropped);
        seq.t_ = t;
        return seq;
    }

    /// Transformer forward; the prediction is read at the final-input-
    /// embedding position and projected down to embed_dim.
    TensorT<S> predict(const PriorInputSequence<S>& seq) {
        ++forward_calls;
        TensorT<S> x = seq.x_;
        for (auto& b : blocks) x = b.forward(ps, x);
        x = ln_f.forward(ps, x);
        n_ = x.dim(0);
        const int L = x.dim(1), D = cfg.model_dim;
        TensorT<S> last({n_, D});
        for (int i = 0; i < n_; ++i)
            std::copy(x.ptr() + (static_cast<std::size_t>(i) * L + L - 1) * D,
                      x.ptr() + (static_cast<std::size_t>(i) * L + L) * D,
                      last.ptr() + static_cast<std::size_t>(i) * D);
        return readout.forward(ps, last);
    }

    /// dpred is (N, embed_dim); scatters gradients through the transformer
    /// and the sequence assembly. Must follow the matching build + predict.
    void backward(const PriorInputSequence<S>& seq, const TensorT<S>& dpred) {
        const int n = n_, L = cfg.seq_len(), D = cfg.model_dim, T = cfg.token_seq_len;
        const TensorT<S> dlast = readout.backward(ps, dpred);
        TensorT<S> dx({n, L, D});
        for (int i = 0; i < n; ++i)
            std::copy(dlast.ptr() + static_cast<std::size_t>(i) * D,
                      dlast.ptr() + static_cast<std::size_t>(i + 1) * D,
                      dx.ptr() + (static_cast<std::size_t>(i) * L + L - 1) * D);
        dx = ln_f.backward(ps, dx);
        for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) dx = it->backward(ps, dx);

        S* g_pos = ps.g(pos_off);
        S* g_fin = ps.g(final_off);
        S* g_pht = ps.g(ph_tokens_off);
        S* g_phx = ps.g(ph_text_off);
        TensorT<S> dte({n * T, D});  // zero-filled; dropped rows stay zero
        TensorT<S> dtx({n, D});
        TensorT<S> dse({n, D});
        TensorT<S> die({n, D});
        for (int i = 0; i < n; ++i) {
            const S* row = dx.ptr() + static_cast<std::size_t>(i) * L * D;
            for (std::size_t j = 0; j < static_cast<std::size_t>(L) * D; ++j) g_pos[j] += row[j];
            for (int d = 0; d < D; ++d) g_fin[d] += row[static_cast<std::size_t>(T + 3) * D + d];
            if (seq.dropped_[static_cast<std::size_t>(i)]) {
                for (int p = 0; p < T; ++p)
                    for (int d = 0; d < D; ++d)
                        g_pht[d] += row[static_cast<std::size_t>(p) * D + d];
                for (int d = 0; d < D; ++d) g_phx[d] += row[static_cast<std::size_t>(T) * D + d];
            } else {
                std::copy(row, row + static_cast<std::size_t>(T) * D,
                          dte.ptr() + static_cast<std::size_t>(i) * T * D);
                std::copy(row + static_cast<std::size_t>(T) * D,
                          row + static_cast<std::size_t>(T + 1) * D,
                          dtx.ptr() + static_cast<std::size_t>(i) * D);
            }
            std::copy(row + static_cast<std::size_t>(T + 1) * D,
                      row + static_cast<std::size_t>(T + 2) * D,
                      dse.ptr() + static_cast<std::size_t>(i) * D);
            std::copy(row + static_cast<std::size_t>(T + 2) * D,
                      row + static_cast<std::size_t>(T + 3) * D,
                      die.ptr() + static_cast<std::size_t>(i) * D);
        }
        tok_emb.backward(ps, dte);
        text_proj.backward(ps, dtx);
        step_proj.backward(ps, dse);
        img_proj.backward(ps, die);
    }

private:
    int n_ = 0;
};

template <typename S>
TensorT<S> prior_predict(PriorModel<S>& m, const PriorInputSequence<S>& seq) {
    return m.predict(seq);
}

/// Paired text/image embedding batch for prior training.
template <typename S>
struct PriorBatch {
    std::vector<std::vector<int>> tokens;
    TensorT<S> q_text;  // (N, embed_dim)
    TensorT<S> q_img;   // (N, embed_dim)

    int size() const { return static_cast<int>(tokens.size()); }
};

/// Denoising loss in x0-parameterization: per-row uniform timestep, forward
/// noising of the image embedding, classifier-free placeholder dropout, MSE
/// between the prediction and the clean embedding. RNG draw order:
/// timesteps, then the noise, then dropout decisions.
template <typename S>
double prior_training_loss(PriorModel<S>& m, const PriorBatch<S>& batch,
                           const NoiseSchedule& sched, double cfg_dropout, Rng& rng,
                           bool with_grads = true) {
    const int n = batch.size();
    if (n < 1) throw std::invalid_argument("prior_training_loss: empty batch");
    auto paired = [&](const TensorT<S>& e) {
        return e.ndim() == 2 && e.dim(0) == n && e.dim(1) == m.cfg.embed_dim;
    };
    if (!paired(batch.q_text) || !paired(batch.q_img))
        throw std::invalid_argument("prior_training_loss: unpaired batch (need " +
                                    std::to_string(n) + " text and image embeddings of dim " +
                                    std::to_string(m.cfg.embed_dim) + ")");
    if (cfg_dropout < 0.0 || cfg_dropout > 1.0)
        throw std::invalid_argument("prior_training_loss: cfg_dropout must lie in [0, 1]");

    std::vector<int> t(static_cast<std::size_t>(n));
    for (auto& ti : t)
        ti = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sched.n_steps)));
    TensorT<S> noise(batch.q_img.shape);
    noise.fill_normal(rng);
    const TensorT<S> xt = diffusion::q_sample(batch.q_img, t, noise, sched);

    std::vector<char> dropped(static_cast<std::size_t>(n), 0);
    for (auto& f : dropped) f = rng.uniform() < cfg_dropout ? 1 : 0;

    std::vector<double> tm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        tm[static_cast<std::size_t>(i)] = static_cast<double>(sched.model_timestep(t[i]));

    auto seq = m.build_input_sequence(batch.tokens, batch.q_text, tm, xt, dropped);
    const TensorT<S> pred = m.predict(seq);

    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(batch.q_img[i]);
        loss += d * d;
    }
    loss /= static_cast<double>(pred.size());

    if (with_grads) {
        TensorT<S> dpred(pred.shape);
        const double scale = 2.0 / static_cast<double>(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i)
            dpred[i] = static_cast<S>(
                scale * (static_cast<double>(pred[i]) - static_cast<double>(batch.q_img[i])));
        m.backward(seq, dpred);
    }
    return loss;
}

/// One optimizer step with EMA tracking of the parameters.
template <typename S>
double prior_train_step(PriorModel<S>& m, const PriorBatch<S>& batch, const NoiseSchedule& sched,
                        Rng& rng) {
    m.ps.zero_grad();
    const double loss = prior_training_loss(m, batch, sched, m.cfg.cfg_dropout, rng, true);
    m.opt.update(m.ps);
    m.ema.update(m.ps);
    ++m.step;
    return loss;
}

namespace detail {
/// Swaps in the EMA snapshot for the lifetime of the scope.
template <typename S>
struct EmaScope {
    PriorModel<S>& m;
    AlignedVec<S> snap;
    bool active;
    EmaScope(PriorModel<S>& model, bool use) : m(model), active(use) {
        if (active) {
            snap = m.ema.snapshot();
            m.swap_values(snap);
        }
    }
    ~EmaScope() {
        if (active) m.swap_values(snap);
    }
};
}  // namespace detail

/// Ancestral sampling of an image embedding from text conditioning over the
/// respaced inference schedule. guidance = 1.0 (the default; unguided works
/// best for this prior) runs only the conditional branch; other scales blend
/// a placeholder (unconditional) pass as x0_u + w * (x0_c - x0_u). The
/// predicted x0 is never clamped; set cfg.renorm_output to L2-normalize the
/// result.
template <typename S>
TensorT<S> prior_sample(PriorModel<S>& m, const std::vector<int>& tokens,
                        const std::vector<float>& q_text, bool use_ema, double guidance,
                        Rng& rng) {
    if (guidance < 0.0) throw std::invalid_argument("prior_sample: guidance must be >= 0");
    if (static_cast<int>(q_text.size()) != m.cfg.embed_dim)
        throw std::invalid_argument("prior_sample: q_text must have dim " +
                                    std::to_string(m.cfg.embed_dim));
    const NoiseSchedule sched = diffusion::respace_schedule(
        diffusion::make_cosine_schedule(m.cfg.train_steps_T), m.cfg.inference_steps);
    detail::EmaScope<S> scope(m, use_ema);

    const int d = m.cfg.embed_dim;
    TensorT<S> qt({1, d});
    for (int i = 0; i < d; ++i) qt[static_cast<std::size_t>(i)] = static_cast<S>(q_text[i]);
    TensorT<S> x({1, d});
    x.fill_normal(rng);

    for (int k = sched.n_steps - 1; k >= 0; --k) {
        const std::vector<double> tm{static_cast<double>(sched.model_timestep(k))};
        auto seq_c = m.build_input_sequence({tokens}, qt, tm, x);
        TensorT<S> x0 = m.predict(seq_c);
        if (guidance != 1.0) {
            auto seq_u = m.build_input_sequence({tokens}, qt, tm, x, {1});
            const TensorT<S> x0u = m.predict(seq_u);
            for (std::size_t i = 0; i < x0.size(); ++i)
                x0[i] = static_cast<S>(static_cast<double>(x0u[i]) +
                                       guidance * (static_cast<double>(x0[i]) -
                                                   static_cast<double>(x0u[i])));
        }
        const double ab = sched.alpha_bar_for_step(k);
        const double ab_prev = sched.alpha_bar_prev(k);
        const double beta = sched.beta[static_cast<std::size_t>(k)];
        const double c_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
        const double c_xt = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
        const double sigma = std::sqrt(sched.posterior_variance(k));
        for (std::size_t i = 0; i < x.size(); ++i) {
            double mu = c_x0 * static_cast<double>(x0[i]) + c_xt * static_cast<double>(x[i]);
            if (k > 0) mu += sigma * rng.normal();
            x[i] = static_cast<S>(mu);
        }
        if (!x.all_finite())
            throw std::runtime_error("prior sampling diverged at inference step " +
                                     std::to_string(k) + ": max |x| = " +
                                     std::to_string(x.max_abs()));
    }
    if (m.cfg.renorm_output) {
        double nrm = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            nrm += static_cast<double>(x[i]) * static_cast<double>(x[i]);
        nrm = std::sqrt(nrm);
        if (nrm > 1e-12)
            for (std::size_t i = 0; i < x.size(); ++i)
                x[i] = static_cast<S>(static_cast<double>(x[i]) / nrm);
    }
    x.reshape({d});
    return x;
}

/// Two independent samples; returns the one with the higher cosine to the
/// text embedding. The ground-truth image embedding is never consulted.
template <typename S>
TensorT<S> sample_best_of_two(PriorModel<S>& m, const std::vector<int>& tokens,
                              const std::vector<float>& q_text, bool use_ema, double guidance,
                              Rng& rng) {
    Rng ra = rng.fork(0), rb = rng.fork(1);
    TensorT<S> a = prior_sample(m, tokens, q_text, use_ema, guidance, ra);
    TensorT<S> b = prior_sample(m, tokens, q_text, use_ema, guidance, rb);
    auto cos_to_text = [&](const TensorT<S>& v) {
        double dot = 0.0, nv = 0.0, nq = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            dot += static_cast<double>(v[i]) * static_cast<double>(q_text[i]);
            nv += static_cast<double>(v[i]) * static_cast<double>(v[i]);
            nq += static_cast<double>(q_text[i]) * static_cast<double>(q_text[i]);
        }
        return dot / std::max(1e-12, std::sqrt(nv) * std::sqrt(nq));
    };
    return cos_to_text(a) >= cos_to_text(b) ? a : b;
}

}  // namespace melbridge::prior
