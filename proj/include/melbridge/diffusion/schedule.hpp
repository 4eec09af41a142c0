#pragma once

#include <string>
#include <vector>

namespace melbridge::diffusion {

/// Per-step tables for the forward noising process. alpha_bar has
/// n_steps + 1 entries with alpha_bar[0] == 1 (clean data); beta[k] is the
/// variance of the step taking alpha_bar[k] to alpha_bar[k+1]. A training
/// step index t in [0, n_steps) uses alpha_bar[t+1].
///
/// For respaced schedules, timestep_map[k] holds the original training-step
/// index each inference step corresponds to, so the denoiser is always
/// queried with timestep embeddings it was trained on.
struct NoiseSchedule {
    int n_steps = 0;
    std::vector<double> alpha_bar;   // size n_steps + 1, strictly decreasing from 1
    std::vector<double> beta;        // size n_steps
    std::vector<int> timestep_map;   // size n_steps; identity for unrespaced
    std::string kind = "cosine";

    double alpha_bar_for_step(int t) const { return alpha_bar[static_cast<std::size_t>(t) + 1]; }
    double alpha_bar_prev(int t) const { return alpha_bar[static_cast<std::size_t>(t)]; }
    int model_timestep(int t) const { return timestep_map[static_cast<std::size_t>(t)]; }

    /// Variance of q(x_{t-1} | x_t, x_0) ("fixed small" posterior variance).
    double posterior_variance(int t) const {
        const double ab = alpha_bar_for_step(t);
        const double ab_prev = alpha_bar_prev(t);
        return beta[static_cast<std::size_t>(t)] * (1.0 - ab_prev) / (1.0 - ab);
    }
};

/// Cosine schedule: f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2) with s = 0.008;
/// betas 1 - f(t)/f(t-1) clipped to 0.999, alpha_bar rebuilt by cumulative
/// product so the tables stay self-consistent after clipping.
NoiseSchedule make_cosine_schedule(int n_steps);

/// Keep n_inference evenly spaced steps, recomputing beta from the retained
/// alpha_bar values so retained marginals are preserved exactly. Respaced
/// betas may exceed the 0.999 construction clip; preserving the products
/// takes precedence.
NoiseSchedule respace_schedule(const NoiseSchedule& sched, int n_inference);

}  // namespace melbridge::diffusion
