#include "melbridge/diffusion/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace melbridge::diffusion {

NoiseSchedule make_cosine_schedule(int n_steps) {
    if (n_steps < 1)
        throw std::invalid_argument("schedule: n_steps must be >= 1");
    constexpr double s = 0.008;
    auto f = [&](double t) {
        const double x = (t / n_steps + s) / (1.0 + s) * std::numbers::pi / 2.0;
        const double c = std::cos(x);
        return c * c;
    };

    NoiseSchedule sched;
    sched.n_steps = n_steps;
    sched.kind = "cosine";
    sched.alpha_bar.resize(static_cast<std::size_t>(n_steps) + 1);
    sched.beta.resize(static_cast<std::size_t>(n_steps));
    sched.timestep_map.resize(static_cast<std::size_t>(n_steps));
    sched.alpha_bar[0] = 1.0;
    for (int t = 1; t <= n_steps; ++t) {
        const double ratio = f(static_cast<double>(t)) / f(static_cast<double>(t - 1));
        const double beta = std::min(1.0 - ratio, 0.999);
        sched.beta[static_cast<std::size_t>(t) - 1] = beta;
        sched.alpha_bar[static_cast<std::size_t>(t)] =
            sched.alpha_bar[static_cast<std::size_t>(t) - 1] * (1.0 - beta);
        sched.timestep_map[static_cast<std::size_t>(t) - 1] = t - 1;
    }
    return sched;
}

NoiseSchedule respace_schedule(const NoiseSchedule& sched, int n_inference) {
    if (n_inference < 1 || n_inference > sched.n_steps)
        throw std::invalid_argument("respace: n_inference must be in [1, n_steps]");
    if (n_inference == sched.n_steps) return sched;

    const int T = sched.n_steps;
    const int K = n_inference;
    NoiseSchedule out;
    out.n_steps = K;
    out.kind = sched.kind;
    out.alpha_bar.resize(static_cast<std::size_t>(K) + 1);
    out.beta.resize(static_cast<std::size_t>(K));
    out.timestep_map.resize(static_cast<std::size_t>(K));
    out.alpha_bar[0] = sched.alpha_bar[0];
    for (int k = 1; k <= K; ++k) {
        // evenly spaced over the original table, always ending at T
        const int idx = static_cast<int>(
            std::llround(static_cast<double>(k) * T / static_cast<double>(K)));
        out.alpha_bar[static_cast<std::size_t>(k)] = sched.alpha_bar[static_cast<std::size_t>(idx)];
        out.beta[static_cast<std::size_t>(k) - 1] =
            1.0 - out.alpha_bar[static_cast<std::size_t>(k)] /
                      out.alpha_bar[static_cast<std::size_t>(k) - 1];
        out.timestep_map[static_cast<std::size_t>(k) - 1] =
            sched.timestep_map[static_cast<std::size_t>(idx) - 1];
    }
    return out;
}

}  // namespace melbridge::diffusion
