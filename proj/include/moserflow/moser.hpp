#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "moserflow/core.hpp"
#include "moserflow/grid.hpp"
#include "moserflow/pde.hpp"
#include "moserflow/rng.hpp"
#include "moserflow/sample_set.hpp"

namespace moserflow {

enum class MoserIntegrator { rk4, euler_composition };
enum class FlowDirection { forward, backward };

// Discrete Moser transport between two grid densities sharing one grid:
//
//   v_t(x) = grad u(x) / ((1-t) rho0(x) + t rho1(x)),   -Delta u = rho1 - rho0
//
// The time-1 flow map of v_t transports rho0 to rho1. Off-grid values of
// grad u and the densities come from multilinear interpolation, so v is
// continuous in (x, t). The interpolated density is required to stay above
// floor_delta; hitting the floor signals that the positivity hypothesis
// behind the construction has been violated.
struct MoserMap {
    PotentialField field;
    GridDensity rho0;
    GridDensity rho1;
    std::size_t ell = 256;
    MoserIntegrator integrator = MoserIntegrator::rk4;
    double floor_delta = 1e-8;

    void validate() const {
        if (!(rho0.grid == field.grid) || !(rho1.grid == field.grid))
            throw std::invalid_argument("MoserMap: endpoint densities must share the field grid");
        if (ell < 1) throw std::invalid_argument("MoserMap: ell must be >= 1");
        if (floor_delta < 0.0) throw std::invalid_argument("MoserMap: floor_delta must be >= 0");
        if (std::min(rho0.min_value(), rho1.min_value()) < floor_delta)
            throw std::invalid_argument(
                "MoserMap: endpoint density falls below floor_delta on the grid");
    }

    Vec velocity(std::span<const double> x, double t) const {
        const double d0 = rho0.at(x);
        const double d1 = rho1.at(x);
        const double den = (1.0 - t) * d0 + t * d1;
        if (den < floor_delta)
            throw density_floor_error("MoserMap::velocity: interpolated density " +
                                      format_double(den) + " below floor " +
                                      format_double(floor_delta));
        Vec v = field.sample_gradient(x);
        for (auto& c : v) c /= den;
        return v;
    }

    // Time-1 flow map (or its inverse) by ell fixed RK4 steps. A trajectory
    // leaving the box raises out_of_domain_error with the exit time rather
    // than being clamped.
    Vec integrate(std::span<const double> x0, FlowDirection dir) const {
        if (integrator == MoserIntegrator::euler_composition && dir == FlowDirection::forward) {
            auto states = compose_steps(x0);
            return states.back();
        }
        const std::size_t d = field.grid.dim();
        if (x0.size() != d) throw std::invalid_argument("MoserMap::integrate: dimension mismatch");
        Vec x(x0.begin(), x0.end());
        const double h = 1.0 / static_cast<double>(ell);
        const bool fwd = dir == FlowDirection::forward;
        auto vel = [&](const Vec& p, double s) {
            // backward integration runs the reversed field
            const double t = fwd ? s : 1.0 - s;
            Vec v = velocity(p, t);
            if (!fwd)
                for (auto& c : v) c = -c;
            return v;
        };
        Vec k1, k2, k3, k4, tmp(d);
        for (std::size_t step = 0; step < ell; ++step) {
            const double s = static_cast<double>(step) * h;
            try {
                k1 = vel(x, s);
                for (std::size_t a = 0; a < d; ++a) tmp[a] = x[a] + 0.5 * h * k1[a];
                k2 = vel(tmp, s + 0.5 * h);
                for (std::size_t a = 0; a < d; ++a) tmp[a] = x[a] + 0.5 * h * k2[a];
                k3 = vel(tmp, s + 0.5 * h);
                for (std::size_t a = 0; a < d; ++a) tmp[a] = x[a] + h * k3[a];
                k4 = vel(tmp, s + h);
            } catch (const out_of_domain_error&) {
                throw out_of_domain_error(
                    "MoserMap::integrate: trajectory left the domain at t = " + format_double(s),
                    s);
            }
            for (std::size_t a = 0; a < d; ++a)
                x[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            if (!field.grid.box.contains(x))
                throw out_of_domain_error(
                    "MoserMap::integrate: trajectory left the domain at t = " +
                        format_double(s + h),
                    s + h);
        }
        return x;
    }

    // Explicit Euler composition G(ell) o ... o G(1) with
    // G(k)(x) = x + (1/ell) v_{t_k}(x), t_k = k/ell; returns all ell states.
    std::vector<Vec> compose_steps(std::span<const double> x0) const {
        const std::size_t d = field.grid.dim();
        if (x0.size() != d)
            throw std::invalid_argument("MoserMap::compose_steps: dimension mismatch");
        std::vector<Vec> states;
        states.reserve(ell);
        Vec x(x0.begin(), x0.end());
        const double h = 1.0 / static_cast<double>(ell);
        for (std::size_t k = 1; k <= ell; ++k) {
            const double tk = static_cast<double>(k) * h;
            Vec v;
            try {
                v = velocity(x, tk);
            } catch (const out_of_domain_error&) {
                throw out_of_domain_error(
                    "MoserMap::compose_steps: trajectory left the domain at t = " +
                        format_double(tk),
                    tk);
            }
            for (std::size_t a = 0; a < d; ++a) x[a] += h * v[a];
            if (!field.grid.box.contains(x))
                throw out_of_domain_error(
                    "MoserMap::compose_steps: trajectory left the domain at t = " +
                        format_double(tk),
                    tk);
            states.push_back(x);
        }
        return states;
    }

    // Maps every sample through the forward flow. Individual failures are
    // tolerated up to 0.1% of the input and recorded in the output meta.
    SampleSet pushforward(const SampleSet& samples) const {
        const std::size_t d = field.grid.dim();
        if (samples.dim != d)
            throw std::invalid_argument("MoserMap::pushforward: dimension mismatch");
        SampleSet out(d, Provenance::moser_pushforward, samples.seed);
        out.data.reserve(samples.data.size());
        std::size_t failed = 0;
        std::string first_error;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            try {
                const Vec y = integrate(samples.point(i), FlowDirection::forward);
                out.push(y);
            } catch (const numerical_error& e) {
                ++failed;
                if (first_error.empty()) first_error = e.what();
            }
        }
        if (failed * 1000 > samples.size())
            throw numerical_error("MoserMap::pushforward: " + std::to_string(failed) + " of " +
                                  std::to_string(samples.size()) + " points failed (first: " +
                                  first_error + ")");
        if (failed > 0) out.meta["n_failed"] = std::to_string(failed);
        return out;
    }
};

// Builds the map for given endpoints: assembles rho1 - rho0, solves the
// Neumann problem, and wires the result together.
inline MoserMap make_moser_map(const GridDensity& rho0, const GridDensity& rho1,
                               std::size_t ell = 256,
                               MoserIntegrator integrator = MoserIntegrator::rk4,
                               double floor_delta = 1e-8, double solve_tol = 1e-10) {
    if (!(rho0.grid == rho1.grid))
        throw std::invalid_argument("make_moser_map: endpoint grids differ");
    NeumannProblem p;
    p.grid = rho0.grid;
    p.rhs.resize(rho0.values.size());
    for (std::size_t i = 0; i < p.rhs.size(); ++i) p.rhs[i] = rho1.values[i] - rho0.values[i];
    MoserMap m;
    m.field = solve_neumann(p, solve_tol);
    m.rho0 = rho0;
    m.rho1 = rho1;
    m.ell = ell;
    m.integrator = integrator;
    m.floor_delta = floor_delta;
    m.validate();
    return m;
}

// Empirical Lipschitz constant of a point map: max ratio |T(x)-T(y)|/|x-y|
// over seeded random pairs whose separations are stratified log-uniformly
// from ~half the region diameter down to 1e-4 of it.
inline double lipschitz_estimate(const std::function<Vec(std::span<const double>)>& map,
                                 const Box& region, std::size_t n_pairs, std::uint64_t seed) {
    if (n_pairs < 1) throw std::invalid_argument("lipschitz_estimate: n_pairs must be >= 1");
    const std::size_t d = region.dim();
    const double diam = region.diameter();
    Rng rng(seed);
    double best = 0.0;
    Vec x(d), y(d), dir(d);
    for (std::size_t k = 0; k < n_pairs; ++k) {
        // stratum for this pair: log10 scale from -0.3 down to -4
        const double frac = n_pairs == 1 ? 0.0 : static_cast<double>(k) / (n_pairs - 1);
        const double expo = -0.3 - 3.7 * frac;
        const double dist = diam * std::pow(10.0, expo + 0.2 * (rng.uniform() - 0.5));
        bool placed = false;
        for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
            for (std::size_t a = 0; a < d; ++a) x[a] = rng.uniform(region.lo[a], region.hi[a]);
            double n2 = 0.0;
            for (std::size_t a = 0; a < d; ++a) {
                dir[a] = rng.normal();
                n2 += dir[a] * dir[a];
            }
            if (n2 == 0.0) continue;
            const double inv = dist / std::sqrt(n2);
            for (std::size_t a = 0; a < d; ++a) y[a] = x[a] + dir[a] * inv;
            placed = region.contains(y);
        }
        if (!placed) continue;
        const Vec tx = map(x);
        const Vec ty = map(y);
        const double ratio = dist2(tx, ty) / dist2(x, y);
        best = std::max(best, ratio);
    }
    return best;
}

}  // namespace moserflow
