#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "moserflow/core.hpp"
#include "moserflow/potential.hpp"
#include "moserflow/rng.hpp"
#include "moserflow/sample_set.hpp"

namespace moserflow {

// Overdamped Langevin sampling, Euler-Maruyama:
//   x_{k+1} = x_k - grad U(x_k) dt + sqrt(2 dt / beta) xi_k
// with coordinate-wise reflection at the domain box. Steps landing on a
// singular point (infinite energy or gradient beyond grad_cap) are rejected
// and the noise redrawn, up to max_retries per step.
struct LangevinConfig {
    double dt = 1e-3;
    std::size_t n_steps = 0;
    double beta = 1.0;
    std::uint64_t seed = 0;
    std::size_t burn_in = 0;
    Vec x0;
    std::size_t thin = 1;        // keep every thin-th post-burn-in step
    double grad_cap = 1e8;
    std::size_t max_retries = 100;

    void validate() const {
        if (!(dt > 0.0)) throw std::invalid_argument("LangevinConfig: dt must be positive");
        if (!(beta > 0.0)) throw std::invalid_argument("LangevinConfig: beta must be positive");
        if (n_steps <= burn_in)
            throw std::invalid_argument("LangevinConfig: n_steps must exceed burn_in");
        if (thin == 0) throw std::invalid_argument("LangevinConfig: thin must be >= 1");
    }
};

template <EnergyModel P>
SampleSet simulate(const P& pot, const LangevinConfig& cfg) {
    cfg.validate();
    const std::size_t d = pot.dim();
    if (cfg.x0.size() != d)
        throw std::invalid_argument("simulate: x0 dimension does not match potential");
    const Box& box = pot.domain_box();
    if (!box.contains(cfg.x0)) throw std::invalid_argument("simulate: x0 outside domain");
    if (std::isinf(pot.energy(cfg.x0)))
        throw std::invalid_argument("simulate: x0 on a singular point");

    Rng rng(cfg.seed);
    const double noise_scale = std::sqrt(2.0 * cfg.dt / cfg.beta);

    SampleSet out(d, Provenance::langevin, cfg.seed);
    out.meta["dt"] = format_double(cfg.dt);
    out.meta["beta"] = format_double(cfg.beta);
    out.meta["n_steps"] = std::to_string(cfg.n_steps);
    out.meta["burn_in"] = std::to_string(cfg.burn_in);
    out.meta["thin"] = std::to_string(cfg.thin);
    out.data.reserve(((cfg.n_steps - cfg.burn_in + cfg.thin - 1) / cfg.thin) * d);

    Vec x = cfg.x0;
    Vec y(d), noise(d);
    for (std::size_t step = 0; step < cfg.n_steps; ++step) {
        const Vec g = pot.gradient(x);
        bool accepted = false;
        for (std::size_t attempt = 0; attempt <= cfg.max_retries; ++attempt) {
            rng.fill_normal(noise);
            for (std::size_t a = 0; a < d; ++a)
                y[a] = x[a] - g[a] * cfg.dt + noise_scale * noise[a];
            if (!all_finite(y))
                throw numerical_blowup_error(
                    "simulate: non-finite state at step " + std::to_string(step), step);
            box.reflect(y);
            const double u = pot.energy(y);
            if (std::isinf(u)) continue;
            bool grad_ok = true;
            try {
                const Vec gy = pot.gradient(y);
                grad_ok = norm2(gy) <= cfg.grad_cap;
            } catch (const singularity_error&) {
                grad_ok = false;
            }
            if (!grad_ok) continue;
            accepted = true;
            break;
        }
        if (!accepted)
            throw singularity_error("simulate: step " + std::to_string(step) +
                                    " rejected after max retries near a singular region");
        x = y;
        if (step >= cfg.burn_in && (step - cfg.burn_in) % cfg.thin == 0) out.push(x);
    }
    return out;
}

// Hysteresis transition counter on one coordinate: the state becomes LEFT
// below lo and RIGHT above hi; each LEFT<->RIGHT change after the first
// assignment counts once. Points inside (lo, hi) never change the state.
inline std::size_t count_transitions(const SampleSet& traj, std::size_t coord, double lo,
                                     double hi) {
    if (traj.size() == 0) throw std::invalid_argument("count_transitions: empty trajectory");
    if (coord >= traj.dim) throw std::invalid_argument("count_transitions: bad coordinate");
    if (!(lo < hi)) throw std::invalid_argument("count_transitions: need lo < hi");
    enum class Side { none, left, right };
    Side state = Side::none;
    std::size_t transitions = 0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const double v = traj.point(i)[coord];
        Side next = state;
        if (v < lo) next = Side::left;
        else if (v > hi) next = Side::right;
        if (next != state) {
            if (state != Side::none) ++transitions;
            state = next;
        }
    }
    return transitions;
}

}  // namespace moserflow
