#pragma once

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "melbridge/core/tensor.hpp"
#include "melbridge/nn/attention.hpp"
#include "melbridge/nn/layers.hpp"
#include "melbridge/nn/param.hpp"

namespace melbridge::diffusion {

using nn::ParamStore;

/// How the conditioning embedding reaches the denoiser.
enum class CondMode { kAdd, kCrossAttn, kBoth };

inline const char* to_string(CondMode m) {
    switch (m) {
        case CondMode::kAdd: return "add";
        case CondMode::kCrossAttn: return "cross_attn";
        case CondMode::kBoth: return "both";
    }
    return "?";
}

inline CondMode cond_mode_from_string(const std::string& s) {
    if (s == "add") return CondMode::kAdd;
    if (s == "cross_attn") return CondMode::kCrossAttn;
    if (s == "both") return CondMode::kBoth;
    throw std::invalid_argument("unknown cond_mode '" + s + "' (want add|cross_attn|both)");
}

/// U-shaped denoiser hyperparameters. The desk-scale preset is base_channels
/// 32 with multipliers [1,2,4]; tests instantiate much smaller ones.
/// attention_resolutions entries name the mel-band count (height) at which
/// encoder/decoder attention blocks are inserted; the bottleneck always
/// carries one attention block so cross-attention conditioning has at least
/// one site regardless of the list.
struct DenoiserConfig {
    int n_mels = 64;
    int clip_frames = 64;
    int base_channels = 32;
    std::vector<int> channel_multipliers = {1, 2, 4};
    int res_blocks_per_level = 1;
    std::vector<int> attention_resolutions = {16};
    int cond_dim = 32;
    int time_embed_dim = 128;
    int groups = 8;
    int heads = 4;
    CondMode cond_mode = CondMode::kBoth;

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int channels_at(int level) const { return base_channels * channel_multipliers[level]; }

    bool attention_at(int height) const {
        for (int r : attention_resolutions)
            if (r == height) return true;
        return false;
    }

    void validate() const {
        if (n_mels < 1 || clip_frames < 1)
            throw std::invalid_argument("denoiser: input shape must be positive");
        if (base_channels < 1) throw std::invalid_argument("denoiser: base_channels must be >= 1");
        if (channel_multipliers.empty())
            throw std::invalid_argument("denoiser: channel_multipliers must be non-empty");
        const int down = 1 << (levels() - 1);
        if (n_mels % down != 0 || clip_frames % down != 0)
            throw std::invalid_argument(
                "denoiser: input shape must be divisible by 2^(levels-1) = " +
                std::to_string(down));
        for (int l = 0; l < levels(); ++l) {
            if (channel_multipliers[l] < 1)
                throw std::invalid_argument("denoiser: channel multipliers must be >= 1");
            if (channels_at(l) % groups != 0)
                throw std::invalid_argument("denoiser: channels at every level must divide into " +
                                            std::to_string(groups) + " norm groups");
            if (channels_at(l) % heads != 0)
                throw std::invalid_argument("denoiser: channels at every level must divide into " +
                                            std::to_string(heads) + " attention heads");
        }
        if (cond_dim < 1) throw std::invalid_argument("denoiser: cond_dim must be >= 1");
        if (time_embed_dim < 1)
            throw std::invalid_argument("denoiser: time_embed_dim must be >= 1");
        if (res_blocks_per_level < 1)
            throw std::invalid_argument("denoiser: res_blocks_per_level must be >= 1");
    }
};

/// (N, C, H, W) -> (N, H*W, C) spatial-token view; pure permutation.
template <typename S>
TensorT<S> nchw_to_tokens(const TensorT<S>& x) {
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    TensorT<S> y({n, hw, c});
    for (int ni = 0; ni < n; ++ni) {
        const S* src = x.ptr() + static_cast<std::size_t>(ni) * c * hw;
        S* dst = y.ptr() + static_cast<std::size_t>(ni) * c * hw;
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < hw; ++i) dst[static_cast<std::size_t>(i) * c + ci] = src[static_cast<std::size_t>(ci) * hw + i];
    }
    return y;
}

/// (N, H*W, C) -> (N, C, H, W); inverse (and adjoint) of nchw_to_tokens.
template <typename S>
TensorT<S> tokens_to_nchw(const TensorT<S>& x, int h, int w) {
    const int n = x.dim(0), hw = x.dim(1), c = x.dim(2);
    if (hw != h * w) throw std::invalid_argument("tokens_to_nchw: token count != h*w");
    TensorT<S> y({n, c, h, w});
    for (int ni = 0; ni < n; ++ni) {
        const S* src = x.ptr() + static_cast<std::size_t>(ni) * c * hw;
        S* dst = y.ptr() + static_cast<std::size_t>(ni) * c * hw;
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < hw; ++i) dst[static_cast<std::size_t>(ci) * hw + i] = src[static_cast<std::size_t>(i) * c + ci];
    }
    return y;
}

template <typename S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w)
        throw std::invalid_argument("concat_channels: spatial/batch shape mismatch");
    TensorT<S> y({n, ca + cb, h, w});
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ni = 0; ni < n; ++ni) {
        std::copy(a.ptr() + ni * ca * hw, a.ptr() + (ni + 1) * ca * hw,
                  y.ptr() + static_cast<std::size_t>(ni) * (ca + cb) * hw);
        std::copy(b.ptr() + ni * cb * hw, b.ptr() + (ni + 1) * cb * hw,
                  y.ptr() + static_cast<std::size_t>(ni) * (ca + cb) * hw + ca * hw);
    }
    return y;
}

template <typename S>
void split_channels(const TensorT<S>& dy, int ca, TensorT<S>& da, TensorT<S>& db) {
    const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2), w = dy.dim(3);
    const int cb = c - ca;
    da = TensorT<S>({n, ca, h, w});
    db = TensorT<S>({n, cb, h, w});
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ni = 0; ni < n; ++ni) {
        const S* src = dy.ptr() + static_cast<std::size_t>(ni) * c * hw;
        std::copy(src, src + ca * hw, da.ptr() + static_cast<std::size_t>(ni) * ca * hw);
        std::copy(src + ca * hw, src + c * hw, db.ptr() + static_cast<std::size_t>(ni) * cb * hw);
    }
}

/// GroupNorm -> SiLU -> conv, timestep-embedding add, GroupNorm -> SiLU ->
/// zero-init conv, residual skip (1x1 conv when the channel count changes).
/// Zero-initializing the second conv makes a fresh block the identity map.
template <typename S>
struct ResBlock {
    int in_c, out_c;
    nn::GroupNorm<S> norm1;
    nn::SiLU<S> act1;
    nn::Conv2d<S> conv1;
    nn::SiLU<S> act_t;
    nn::Linear<S> temb_proj;
    nn::GroupNorm<S> norm2;
    nn::SiLU<S> act2;
    nn::Conv2d<S> conv2;
    std::unique_ptr<nn::Conv2d<S>> skip;

    ResBlock(ParamStore<S>& ps, const std::string& name, int in_channels, int out_channels,
             int time_embed_dim, int groups)
        : in_c(in_channels), out_c(out_channels),
          norm1(ps, name + ".norm1", in_channels, groups),
          conv1(ps, name + ".conv1", in_channels, out_channels, 3),
          temb_proj(ps, name + ".temb", time_embed_dim, out_channels),
          norm2(ps, name + ".norm2", out_channels, groups),
          conv2(ps, name + ".conv2", out_channels, out_channels, 3, 1, -1, /*zero_init=*/true) {
        if (in_channels != out_channels)
            skip = std::make_unique<nn::Conv2d<S>>(ps, name + ".skip", in_channels, out_channels, 1);
    }

    TensorT<S> forward(ParamStore<S>& ps, const TensorT<S>& x, const TensorT<S>& temb) {
        TensorT<S> h = conv1.forward(ps, act1.forward(norm1.forward(ps, x)));
        const TensorT<S> tproj = temb_proj.forward(ps, act_t.forward(temb));
        const int n = h.dim(0), hw = h.dim(2) * h.dim(3);
        for (int ni = 0; ni < n; ++ni)
            for (int c = 0; c < out_c; ++c) {
                const S t = tproj[static_cast<std::size_t>(ni) * out_c + c];
                S* p = h.ptr() + (static_cast<std::size_t>(ni) * out_c + c) * hw;
                for (int i = 0; i < hw; ++i) p[i] += t;
            }
        TensorT<S> y = conv2.forward(ps, act2.forward(norm2.forward(ps, h)));
        if (skip) {
            const TensorT<S> sk = skip->forward(ps, x);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += sk[i];
        } else {
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
        }
        return y;
    }

    /// Accumulates the timestep-embedding gradient into dtemb (N, time_embed_dim).
    TensorT<S> backward(ParamStore<S>& ps, const TensorT<S>& dy, TensorT<S>& dtemb) {
        TensorT<S> dh = norm2.backward(ps, act2.backward(conv2.backward(ps, dy)));
        const int n = dh.dim(0), hw = dh.dim(2) * dh.dim(3);
        TensorT<S> dtproj({n, out_c});
        for (int ni = 0; ni < n; ++ni)
            for (int c = 0; c < out_c; ++c) {
                const S* p = dh.ptr() + (static_cast<std::size_t>(ni) * out_c + c) * hw;
                S acc{0};
                for (int i = 0; i < hw; ++i) acc += p[i];
                dtproj[static_cast<std::size_t>(ni) * out_c + c] = acc;
            }
        const TensorT<S> dt = act_t.backward(temb_proj.backward(ps, dtproj));
        for (std::size_t i = 0; i < dtemb.size(); ++i) dtemb[i] += dt[i];
        TensorT<S> dx = norm1.backward(ps, act1.backward(conv1.backward(ps, dh)));
        if (skip) {
            const TensorT<S> ds = skip->backward(ps, dy);
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
        } else {
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
        }
        return dx;
    }
};

/// Pre-norm residual self-attention over spatial tokens, optionally followed
/// by pre-norm residual cross-attention against the conditioning embedding
/// (projected to a single context token per item).
template <typename S>
struct AttnBlock {
    int channels, h_ = 0, w_ = 0;
    nn::GroupNorm<S> norm_self;
    nn::MultiHeadAttention<S> self_attn;
    std::unique_ptr<nn::GroupNorm<S>> norm_cross;
    std::unique_ptr<nn::MultiHeadAttention<S>> cross_attn;
    std::unique_ptr<nn::Linear<S>> ctx_proj;

    AttnBlock(ParamStore<S>& ps, const std::string& name, int channels_, int heads, int groups,
              int cond_dim, bool with_cross)
        : channels(channels_),
          norm_self(ps, name + ".norm_s", channels_, groups),
          self_attn(ps, name + ".self", channels_, heads) {
        if (with_cross) {
            norm_cross = std::make_unique<nn::GroupNorm<S>>(ps, name + ".norm_x", channels_, groups);
            cross_attn = std::make_unique<nn::MultiHeadAttention<S>>(ps, name + ".cross", channels_, heads);
            ctx_proj = std::make_unique<nn::Linear<S>>(ps, name + ".ctx", cond_dim, channels_);
        }
    }

    TensorT<S> forward(ParamStore<S>& ps, const TensorT<S>& x, const TensorT<S>& cond) {
        h_ = x.dim(2);
        w_ = x.dim(3);
        const TensorT<S> a =
            self_attn.forward(ps, nchw_to_tokens(norm_self.forward(ps, x)));
        TensorT<S> y = tokens_to_nchw(a, h_, w_);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
        if (cross_attn) {
            TensorT<S> ctx = ctx_proj->forward(ps, cond);
            ctx.reshape({cond.dim(0), 1, channels});
            const TensorT<S> c = cross_attn->forward(
                ps, nchw_to_tokens(norm_cross->forward(ps, y)), &ctx);
            const TensorT<S> cn = tokens_to_nchw(c, h_, w_);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += cn[i];
        }
        return y;
    }

    /// dcond, when non-null, accumulates the conditioning gradient (N, cond_dim).
    TensorT<S> backward(ParamStore<S>& ps, const TensorT<S>& dy, TensorT<S>* dcond) {
        TensorT<S> d = dy;
        if (cross_attn) {
            const int n = dy.dim(0);
            TensorT<S> dctx({n, 1, channels});
            dctx.zero();
            const TensorT<S> dtok = cross_attn->backward(ps, nchw_to_tokens(d), &dctx);
            const TensorT<S> dgn = norm_cross->backward(ps, tokens_to_nchw(dtok, h_, w_));
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dgn[i];
            dctx.reshape({n, channels});
            const TensorT<S> dc = ctx_proj->backward(ps, dctx);
            if (dcond)
                for (std::size_t i = 0; i < dc.size(); ++i) (*dcond)[i] += dc[i];
        }
        const TensorT<S> dtok = self_attn.backward(ps, nchw_to_tokens(d));
        const TensorT<S> dgn = norm_self.backward(ps, tokens_to_nchw(dtok, h_, w_));
        TensorT<S> dx = d;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dgn[i];
        return dx;
    }
};

/// The noise-prediction network: a U-shaped encoder-decoder over the mel
/// "image" with sinusoidal timestep features and the conditioning embedding
/// injected by temb addition and/or single-token cross-attention.
template <typename S>
struct UNet {
    DenoiserConfig cfg;
    nn::Linear<S> temb_fc1;
    nn::SiLU<S> temb_act;
    nn::Linear<S> temb_fc2;
    std::unique_ptr<nn::Linear<S>> cond_to_temb;
    nn::Conv2d<S> conv_in;

    struct EncLevel {
        std::vector<ResBlock<S>> res;
        std::vector<std::unique_ptr<AttnBlock<S>>> attn;  // parallel to res; may hold nulls
        std::unique_ptr<nn::Conv2d<S>> down;
    };
    struct DecLevel {
        std::vector<ResBlock<S>> res;
        std::vector<std::unique_ptr<AttnBlock<S>>> attn;
        std::unique_ptr<nn::Upsample2x<S>> up;
        std::unique_ptr<nn::Conv2d<S>> up_conv;
    };
    std::vector<EncLevel> enc;
    std::unique_ptr<ResBlock<S>> mid1;
    std::unique_ptr<AttnBlock<S>> mid_attn;
    std::unique_ptr<ResBlock<S>> mid2;
    std::vector<DecLevel> dec;  // stored bottom-up: dec[0] is the deepest level
    nn::GroupNorm<S> out_norm;
    nn::SiLU<S> out_act;
    nn::Conv2d<S> out_conv;

    // forward bookkeeping for the skip connections
    std::vector<TensorT<S>> hs_;
    std::vector<int> cat_ch_;  // channels of h before each decoder concat, in pop order
    TensorT<S> temb_in_;       // saved sinusoidal features (input to temb_fc1)

    UNet(ParamStore<S>& ps, const DenoiserConfig& cfg_)
        : cfg(cfg_),
          temb_fc1(ps, "temb.fc1", cfg_.base_channels, cfg_.time_embed_dim),
          temb_fc2(ps, "temb.fc2", cfg_.time_embed_dim, cfg_.time_embed_dim),
          conv_in(ps, "conv_in", 1, cfg_.channels_at(0), 3),
          out_norm(ps, "out.norm", cfg_.channels_at(0), cfg_.groups),
          out_conv(ps, "out.conv", cfg_.channels_at(0), 1, 3, 1, -1, /*zero_init=*/true) {
        cfg.validate();
        const bool cross = cfg.cond_mode != CondMode::kAdd;
        if (cfg.cond_mode != CondMode::kCrossAttn)
            cond_to_temb = std::make_unique<nn::Linear<S>>(ps, "temb.cond", cfg.cond_dim,
                                                           cfg.time_embed_dim);
        const int levels = cfg.levels();
        int ch = cfg.channels_at(0);
        int height = cfg.n_mels;
        for (int l = 0; l < levels; ++l) {
            EncLevel lev;
            const int out_ch = cfg.channels_at(l);
            for (int i = 0; i < cfg.res_blocks_per_level; ++i) {
                const std::string base = "enc" + std::to_string(l) + ".res" + std::to_string(i);
                lev.res.emplace_back(ps, base, ch, out_ch, cfg.time_embed_dim, cfg.groups);
                ch = out_ch;
                lev.attn.push_back(cfg.attention_at(height)
                                       ? std::make_unique<AttnBlock<S>>(ps, base + ".attn", ch,
                                                                        cfg.heads, cfg.groups,
                                                                        cfg.cond_dim, cross)
                                       : nullptr);
            }
            if (l < levels - 1) {
                lev.down = std::make_unique<nn::Conv2d<S>>(
                    ps, "enc" + std::to_string(l) + ".down", ch, ch, 3, 2, 1);
                height /= 2;
            }
            enc.push_back(std::move(lev));
        }
        mid1 = std::make_unique<ResBlock<S>>(ps, "mid.res1", ch, ch, cfg.time_embed_dim, cfg.groups);
        mid_attn = std::make_unique<AttnBlock<S>>(ps, "mid.attn", ch, cfg.heads, cfg.groups,
                                                  cfg.cond_dim, cross);
        mid2 = std::make_unique<ResBlock<S>>(ps, "mid.res2", ch, ch, cfg.time_embed_dim, cfg.groups);
        for (int l = levels - 1; l >= 0; --l) {
            DecLevel lev;
            const int out_ch = cfg.channels_at(l);
            for (int i = 0; i <= cfg.res_blocks_per_level; ++i) {
                // the concatenated skip carries the channel count of the
                // matching encoder stage: out_ch for in-level stages, the
                // previous level's width for the stage consuming conv_in/down
                const int skip_ch =
                    (i < cfg.res_blocks_per_level) ? out_ch : cfg.channels_at(l > 0 ? l - 1 : 0);
                const std::string base = "dec" + std::to_string(l) + ".res" + std::to_string(i);
                lev.res.emplace_back(ps, base, ch + skip_ch, out_ch, cfg.time_embed_dim,
                                     cfg.groups);
                ch = out_ch;
                lev.attn.push_back(cfg.attention_at(height)
                                       ? std::make_unique<AttnBlock<S>>(ps, base + ".attn", ch,
                                                                        cfg.heads, cfg.groups,
                                                                        cfg.cond_dim, cross)
                                       : nullptr);
            }
            if (l > 0) {
                lev.up = std::make_unique<nn::Upsample2x<S>>();
                lev.up_conv = std::make_unique<nn::Conv2d<S>>(
                    ps, "dec" + std::to_string(l) + ".up", ch, ch, 3);
                height *= 2;
            }
            dec.push_back(std::move(lev));
        }
    }

    /// x: (N, 1, n_mels, clip_frames); t: per-item timesteps in model units;
    /// cond: (N, cond_dim) with null rows already substituted by the caller.
    TensorT<S> forward(ParamStore<S>& ps, const TensorT<S>& x, const std::vector<double>& t,
                       const TensorT<S>& cond) {
        if (x.ndim() != 4 || x.dim(1) != 1 || x.dim(2) != cfg.n_mels || x.dim(3) != cfg.clip_frames)
            throw std::invalid_argument("denoiser: input must be (N, 1, " +
                                        std::to_string(cfg.n_mels) + ", " +
                                        std::to_string(cfg.clip_frames) + "), got " +
                                        shape_str(x.shape));
        const int n = x.dim(0);
        if (static_cast<int>(t.size()) != n)
            throw std::invalid_argument("denoiser: timestep count != batch size");
        if (cond.ndim() != 2 || cond.dim(0) != n || cond.dim(1) != cfg.cond_dim)
            throw std::invalid_argument("denoiser: conditioning must be (N, " +
                                        std::to_string(cfg.cond_dim) + "), got " +
                                        shape_str(cond.shape));
        temb_in_ = nn::sinusoidal_embedding<S>(t, cfg.base_channels);
        TensorT<S> temb = temb_fc2.forward(ps, temb_act.forward(temb_fc1.forward(ps, temb_in_)));
        if (cond_to_temb) {
            const TensorT<S> ct = cond_to_temb->forward(ps, cond);
            for (std::size_t i = 0; i < temb.size(); ++i) temb[i] += ct[i];
        }

        hs_.clear();
        cat_ch_.clear();
        TensorT<S> h = conv_in.forward(ps, x);
        hs_.push_back(h);
        for (std::size_t l = 0; l < enc.size(); ++l) {
            auto& lev = enc[l];
            for (std::size_t i = 0; i < lev.res.size(); ++i) {
                h = lev.res[i].forward(ps, h, temb);
                if (lev.attn[i]) h = lev.attn[i]->forward(ps, h, cond);
                hs_.push_back(h);
            }
            if (lev.down) {
                h = lev.down->forward(ps, h);
                hs_.push_back(h);
            }
        }
        h = mid1->forward(ps, h, temb);
        h = mid_attn->forward(ps, h, cond);
        h = mid2->forward(ps, h, temb);
        for (auto& lev : dec) {
            for (std::size_t i = 0; i < lev.res.size(); ++i) {
                cat_ch_.push_back(h.dim(1));
                h = lev.res[i].forward(ps, concat_channels(h, hs_.back()), temb);
                hs_.pop_back();
                if (lev.attn[i]) h = lev.attn[i]->forward(ps, h, cond);
            }
            if (lev.up) h = lev.up_conv->forward(ps, lev.up->forward(h));
        }
        return out_conv.forward(ps, out_act.forward(out_norm.forward(ps, h)));
    }

    /// Accumulates parameter gradients; dcond, when non-null, must be a
    /// zero-initialized (N, cond_dim) tensor and receives the conditioning
    /// gradient. Returns d(loss)/d(input).
    TensorT<S> backward(ParamStore<S>& ps, const TensorT<S>& dy, TensorT<S>* dcond = nullptr) {
        const int n = dy.dim(0);
        TensorT<S> dtemb({n, cfg.time_embed_dim});
        dtemb.zero();
        TensorT<S> dh = out_norm.backward(ps, out_act.backward(out_conv.backward(ps, dy)));
        std::vector<TensorT<S>> dhs;  // gradients for pending encoder skip outputs
        std::size_t cat_idx = cat_ch_.size();
        for (auto it = dec.rbegin(); it != dec.rend(); ++it) {
            auto& lev = *it;
            if (lev.up) dh = lev.up->backward(lev.up_conv->backward(ps, dh));
            for (std::size_t i = lev.res.size(); i-- > 0;) {
                if (lev.attn[i]) dh = lev.attn[i]->backward(ps, dh, dcond);
                const TensorT<S> dcat = lev.res[i].backward(ps, dh, dtemb);
                TensorT<S> dskip;
                split_channels(dcat, cat_ch_[--cat_idx], dh, dskip);
                dhs.push_back(std::move(dskip));
            }
        }
        dh = mid2->backward(ps, dh, dtemb);
        dh = mid_attn->backward(ps, dh, dcond);
        dh = mid1->backward(ps, dh, dtemb);
        for (auto it = enc.rbegin(); it != enc.rend(); ++it) {
            auto& lev = *it;
            if (lev.down) {
                for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dhs.back()[i];
                dhs.pop_back();
                dh = lev.down->backward(ps, dh);
            }
            for (std::size_t i = lev.res.size(); i-- > 0;) {
                for (std::size_t j = 0; j < dh.size(); ++j) dh[j] += dhs.back()[j];
                dhs.pop_back();
                if (lev.attn[i]) dh = lev.attn[i]->backward(ps, dh, dcond);
                dh = lev.res[i].backward(ps, dh, dtemb);
            }
        }
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dhs.back()[i];
        dhs.pop_back();
        TensorT<S> dx = conv_in.backward(ps, dh);

        if (cond_to_temb) {
            const TensorT<S> dc = cond_to_temb->backward(ps, dtemb);
            if (dcond)
                for (std::size_t i = 0; i < dc.size(); ++i) (*dcond)[i] += dc[i];
        }
        temb_fc1.backward(ps, temb_act.backward(temb_fc2.backward(ps, dtemb)));
        return dx;
    }
};

}  // namespace melbridge::diffusion
