#include <doctest.h>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "helpers.hpp"
#include "melbridge/core/rng.hpp"
#include "melbridge/core/tensor.hpp"
#include "melbridge/nn/adamw.hpp"
#include "melbridge/nn/attention.hpp"
#include "melbridge/nn/layers.hpp"
#include "melbridge/nn/param.hpp"

using namespace melbridge;
using namespace melbridge::nn;
using testutil::fd_against;
using testutil::rel_err;

namespace {

using T = TensorT<double>;

T random_tensor(std::vector<int> shape, Rng& rng) {
    T t(std::move(shape));
    t.fill_normal(rng);
    return t;
}

double weighted_sum(const T& y, const T& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("param store: registration, duplicate guard, init kinds") {
    ParamStore<double> ps;
    const auto a = ps.add("w", {3, 4}, Init::normal(0.5));
    const auto b = ps.add("bias", {4}, Init::zeros(), false);
    const auto c = ps.add("gain", {4}, Init::ones(), false);
    CHECK_THROWS_AS(ps.add("w", {1}, Init::zeros()), std::invalid_argument);
    ps.finalize();
    CHECK(ps.size() == 12 + 4 + 4);
    Rng rng(3);
    ps.init_params(rng);
    CHECK(ps.w(a)[0] != 0.0);
    CHECK(ps.w(b)[0] == 0.0);
    CHECK(ps.w(c)[3] == 1.0);
    CHECK(ps.find("bias").offset == b);
    CHECK(ps.find("bias").decay == false);
    CHECK_THROWS_AS(ps.find("nope"), std::invalid_argument);
    ps.g(a)[0] = 7.0;
    ps.zero_grad();
    CHECK(ps.g(a)[0] == 0.0);
    CHECK(ps.all_finite());
}

TEST_CASE("linear: gradients match finite differences") {
    Rng rng(11);
    ParamStore<double> ps;
    Linear<double> fc(ps, "fc", 7, 5);
    ps.finalize();
    ps.init_params(rng);
    T x = random_tensor({4, 7}, rng);
    T r = random_tensor({4, 5}, rng);

    auto loss = [&] { return weighted_sum(fc.forward(ps, x), r); };
    loss();
    ps.zero_grad();
    T dx = fc.backward(ps, r);
    fd_against(x.data, dx.ptr(), loss);
    fd_against(ps.values(), ps.grads().data(), loss);
}

TEST_CASE("conv2d: gradients match finite differences (stride 1, pad 1)") {
    Rng rng(21);
    ParamStore<double> ps;
    Conv2d<double> conv(ps, "conv", 3, 4, 3);
    ps.finalize();
    ps.init_params(rng);
    T x = random_tensor({2, 3, 5, 5}, rng);
    auto probe = conv.forward(ps, x);
    T r = random_tensor(probe.shape, rng);
    CHECK(probe.shape == std::vector<int>{2, 4, 5, 5});

    auto loss = [&] { return weighted_sum(conv.forward(ps, x), r); };
    loss();
    ps.zero_grad();
    T dx = conv.backward(ps, r);
    fd_against(x.data, dx.ptr(), loss);
    fd_against(ps.values(), ps.grads().data(), loss);
}

TEST_CASE("conv2d: gradients match finite differences (stride 2 downsample)") {
    Rng rng(22);
    ParamStore<double> ps;
    Conv2d<double> conv(ps, "down", 2, 3, 3, /*stride=*/2);
    ps.finalize();
    ps.init_params(rng);
    T x = random_tensor({2, 2, 8, 8}, rng);
    auto probe = conv.forward(ps, x);
    CHECK(probe.shape == std::vector<int>{2, 3, 4, 4});
    T r = random_tensor(probe.shape, rng);

    auto loss = [&] { return weighted_sum(conv.forward(ps, x), r); };
    loss();
    ps.zero_grad();
    T dx = conv.backward(ps, r);
    fd_against(x.data, dx.ptr(), loss);
    fd_against(ps.values(), ps.grads().data(), loss);
}

TEST_CASE("group norm: gradients match finite differences") {
    Rng rng(31);
    ParamStore<double> ps;
    GroupNorm<double> gn(ps, "gn", 8, 4);
    ps.finalize();
    ps.init_params(rng);
    // non-trivial gamma/beta so their gradients register
    for (int c = 0; c < 8; ++c) {
        ps.w(gn.gamma_off)[c] = 1.0 + 0.1 * c;
        ps.w(gn.beta_off)[c] = 0.05 * c;
    }
    T x = random_tensor({2, 8, 3, 3}, rng);
    T r = random_tensor({2, 8, 3, 3}, rng);

    auto loss = [&] { return weighted_sum(gn.forward(ps, x), r); };
    loss();
    ps.zero_grad();
    T dx = gn.backward(ps, r);
    fd_against(x.data, dx.ptr(), loss, 96);
    fd_against(ps.values(), ps.grads().data(), loss);
}

TEST_CASE("group norm: rejects indivisible channel counts") {
    ParamStore<double> ps;
    CHECK_THROWS_AS(GroupNorm<double>(ps, "bad", 10, 4), std::invalid_argument);
}

TEST_CASE("layer norm: gradients match finite differences") {
    Rng rng(41);
    ParamStore<double> ps;
    LayerNorm<double> ln(ps, "ln", 6);
    ps.finalize();
    ps.init_params(rng);
    for (int i = 0; i < 6; ++i) ps.w(ln.gamma_off)[i] = 0.8 + 0.1 * i;
    T x = random_tensor({3, 4, 6}, rng);
    T r = random_tensor({3, 4, 6}, rng);

    auto loss = [&] { return weighted_sum(ln.forward(ps, x), r); };
    loss();
    ps.zero_grad();
    T dx = ln.backward(ps, r);
    fd_against(x.data, dx.ptr(), loss, 72);
    fd_against(ps.values(), ps.grads().data(), loss);
}

TEST_CASE("activations: silu and gelu match finite differences") {
    Rng rng(51);
    T x = random_tensor({40}, rng);
    T r = random_tensor({40}, rng);

    SiLU<double> silu;
    auto loss_s = [&] { return weighted_sum(silu.forward(x), r); };
    loss_s();
    T dxs = silu.backward(r);
    fd_against(x.data, dxs.ptr(), loss_s, 40, 1e-6);

    Gelu<double> gelu;
    auto loss_g = [&] { return weighted_sum(gelu.forward(x), r); };
    loss_g();
    T dxg = gelu.backward(r);
    fd_against(x.data, dxg.ptr(), loss_g, 40, 1e-6);

    // spot values: silu(0) = 0, gelu(0) = 0, gelu(large) ~ identity
    T zero({1});
    CHECK(silu.forward(zero)[0] == 0.0);
    CHECK(gelu.forward(zero)[0] == 0.0);
    T big({1});
    big[0] = 6.0;
    CHECK(gelu.forward(big)[0] == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("upsample 2x: exact nearest-neighbor adjoint") {
    Rng rng(61);
    T x = random_tensor({2, 3, 4, 4}, rng);
    Upsample2x<double> up;
    auto y = up.forward(x);
    CHECK(y.shape == std::vector<int>{2, 3, 8, 8});
    CHECK(y[0] == x[0]);

    T r = random_tensor({2, 3, 8, 8}, rng);
    auto loss = [&] { return weighted_sum(up.forward(x), r); };
    loss();
    T dx = up.backward(r);
    fd_against(x.data, dx.ptr(), loss, 48, 1e-6);
}

TEST_CASE("embedding: lookup and scatter gradients") {
    Rng rng(71);
    ParamStore<double> ps;
    Embedding<double> emb(ps, "tok", 10, 4);
    ps.finalize();
    ps.init_params(rng);
    const std::vector<int> tokens = {1, 3, 3, 0, 9};
    T r = random_tensor({5, 4}, rng);

    auto loss = [&] { return weighted_sum(emb.forward(ps, tokens), r); };
    loss();
    ps.zero_grad();
    emb.backward(ps, r);
    fd_against(ps.values(), ps.grads().data(), loss, 40, 1e-6);

    CHECK_THROWS_AS(emb.forward(ps, {10}), std::out_of_range);
    CHECK_THROWS_AS(emb.forward(ps, {-1}), std::out_of_range);
}

TEST_CASE("self-attention: gradients match finite differences") {
    Rng rng(81);
    ParamStore<double> ps;
    MultiHeadAttention<double> attn(ps, "attn", 8, 2);
    ps.finalize();
    ps.init_params(rng);
    // output projection is zero-initialized; give it signal so grads flow
    Rng wrng(82);
    for (std::size_t i = 0; i < 64; ++i) ps.w(attn.out_.w_off)[i] = 0.3 * wrng.normal();
    T x = random_tensor({2, 5, 8}, rng);
    T r = random_tensor({2, 5, 8}, rng);

    for (bool causal : {false, true}) {
        auto loss = [&] { return weighted_sum(attn.forward(ps, x, nullptr, causal), r); };
        loss();
        ps.zero_grad();
        T dx = attn.backward(ps, r);
        fd_against(x.data, dx.ptr(), loss, 40);
        fd_against(ps.values(), ps.grads().data(), loss, 48);
    }
}

TEST_CASE("self-attention: causal mask blocks future positions") {
    Rng rng(83);
    ParamStore<double> ps;
    MultiHeadAttention<double> attn(ps, "attn", 8, 2);
    ps.finalize();
    ps.init_params(rng);
    Rng wrng(84);
    for (std::size_t i = 0; i < 64; ++i) ps.w(attn.out_.w_off)[i] = 0.3 * wrng.normal();

    T x = random_tensor({1, 4, 8}, rng);
    auto y1 = attn.forward(ps, x, nullptr, true);
    // changing a future token must not affect earlier outputs
    T x2 = x;
    for (int d = 0; d < 8; ++d) x2[3 * 8 + d] += 1.0;
    auto y2 = attn.forward(ps, x2, nullptr, true);
    for (int t = 0; t < 3; ++t)
        for (int d = 0; d < 8; ++d)
            REQUIRE(y1[static_cast<std::size_t>(t) * 8 + d] ==
                    y2[static_cast<std::size_t>(t) * 8 + d]);
    // ... while the final position does change
    bool changed = false;
    for (int d = 0; d < 8; ++d)
        changed = changed || y1[3 * 8 + d] != y2[3 * 8 + d];
    CHECK(changed);

    CHECK_THROWS_AS(attn.forward(ps, x, &x, true), std::invalid_argument);
}

TEST_CASE("cross-attention: context gradients match finite differences") {
    Rng rng(91);
    ParamStore<double> ps;
    MultiHeadAttention<double> attn(ps, "xattn", 8, 2);
    ps.finalize();
    ps.init_params(rng);
    Rng wrng(92);
    for (std::size_t i = 0; i < 64; ++i) ps.w(attn.out_.w_off)[i] = 0.3 * wrng.normal();

    T x = random_tensor({2, 3, 8}, rng);
    T ctx = random_tensor({2, 6, 8}, rng);
    T r = random_tensor({2, 3, 8}, rng);

    auto loss = [&] { return weighted_sum(attn.forward(ps, x, &ctx, false), r); };
    loss();
    ps.zero_grad();
    T dctx(ctx.shape);
    T dx = attn.backward(ps, r, &dctx);
    fd_against(x.data, dx.ptr(), loss, 40);
    fd_against(ctx.data, dctx.ptr(), loss, 40);
    fd_against(ps.values(), ps.grads().data(), loss, 48);
}

TEST_CASE("sinusoidal embedding: bounded, distinct, half cos / half sin") {
    const auto e = sinusoidal_embedding<double>({0.0, 1.0, 500.0}, 16);
    CHECK(e.shape == std::vector<int>{3, 16});
    for (double v : e.data) REQUIRE(std::abs(v) <= 1.0);
    // t = 0: cos half all ones, sin half all zeros
    for (int i = 0; i < 8; ++i) {
        CHECK(e[static_cast<std::size_t>(i)] == 1.0);
        CHECK(e[static_cast<std::size_t>(8 + i)] == 0.0);
    }
    // different steps give different codes
    double diff = 0.0;
    for (int i = 0; i < 16; ++i) diff += std::abs(e[16 + i] - e[32 + i]);
    CHECK(diff > 0.1);
}

TEST_CASE("adamw: quadratic descent, decay mask, bias correction") {
    ParamStore<double> ps;
    const auto w_off = ps.add("w", {4}, Init::zeros(), true);
    const auto b_off = ps.add("b", {4}, Init::zeros(), false);
    ps.finalize();

    AdamW<double> opt;
    opt.lr = 0.05;
    opt.weight_decay = 0.1;
    const double target = 2.0;
    for (int it = 0; it < 400; ++it) {
        ps.zero_grad();
        for (int i = 0; i < 4; ++i) {
            ps.g(w_off)[i] = 2.0 * (ps.w(w_off)[i] - target);
            ps.g(b_off)[i] = 2.0 * (ps.w(b_off)[i] - target);
        }
        opt.update(ps);
    }
    // no-decay parameter reaches the target; decayed one settles short of it
    CHECK(ps.w(b_off)[0] == doctest::Approx(target).epsilon(1e-3));
    CHECK(ps.w(w_off)[0] < target - 1e-3);
    CHECK(ps.w(w_off)[0] > 1.0);
    CHECK(opt.step == 400);
}

TEST_CASE("ema: shadow tracks parameters at the configured rate") {
    ParamStore<double> ps;
    const auto off = ps.add("w", {2}, Init::zeros());
    ps.finalize();
    ps.w(off)[0] = 1.0;
    ps.w(off)[1] = -2.0;

    Ema<double> ema;
    ema.decay = 0.9;
    ema.reset(ps);
    CHECK(ema.snapshot()[0] == 1.0);

    ps.w(off)[0] = 3.0;
    ema.update(ps);
    // 0.9 * 1 + 0.1 * 3 = 1.2
    CHECK(ema.snapshot()[0] == doctest::Approx(1.2));
    for (int i = 0; i < 200; ++i) ema.update(ps);
    CHECK(ema.snapshot()[0] == doctest::Approx(3.0).epsilon(1e-6));
}

}  // TEST_SUITE
