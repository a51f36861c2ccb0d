#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "moserflow/core.hpp"
#include "moserflow/grid.hpp"

namespace moserflow {

enum class PotentialKind { double_well, diatomic, composite };

inline const char* to_string(PotentialKind k) {
    switch (k) {
        case PotentialKind::double_well: return "double_well";
        case PotentialKind::diatomic: return "diatomic";
        case PotentialKind::composite: return "composite";
    }
    return "?";
}

// Pairwise Lennard-Jones coefficients a/r^12 - b/r^6 for atoms (i, j).
struct LjPair {
    std::size_t i = 0, j = 0;
    double a = 0.0, b = 0.0;
};

struct Bond {
    std::size_t i = 0, j = 0;
    double stiffness = 0.0;  // > 0
    double rest_length = 0.0;
};

struct Angle {
    std::size_t i = 0, j = 0, k = 0;  // angle at j
    double stiffness = 0.0;           // > 0
    double rest_angle = 0.0;
};

// One cosine term kappa * (1 + cos(n*phi - phase)) of a torsion series.
struct TorsionTerm {
    std::size_t i = 0, j = 0, k = 0, l = 0;
    unsigned n = 1;
    double amplitude = 0.0;  // >= 0
    double phase = 0.0;
};

// ---------------------------------------------------------------------------
// Closed-form molecular energies.
//
//   double_well  U(x1,x2) = (x1^2-1)^2/4 + x2^2/2 on a 2D box
//   diatomic     two particles reduced to the 2D relative coordinate:
//                U(x) = q0*q1/|x| + A/|x|^12 - B/|x|^6
//   composite    atoms in 3D (x flattened, dim = 3*n_atoms): bond/angle/
//                torsion terms over a chain-style bond graph plus Coulomb
//                and Lennard-Jones over listed pairs
// ---------------------------------------------------------------------------

struct PotentialSpec {
    PotentialKind kind = PotentialKind::double_well;
    Box domain;

    Vec charges;                       // per atom (diatomic, composite)
    std::vector<LjPair> lj_pairs;      // pairs carrying LJ coefficients
    std::vector<Bond> bonds;           // composite only
    std::vector<Angle> angles;         // composite only
    std::vector<TorsionTerm> torsions; // composite only
    std::size_t n_atoms = 0;           // composite only

    static PotentialSpec double_well(Box box = Box::cube(2, -3.0, 3.0)) {
        PotentialSpec s;
        s.kind = PotentialKind::double_well;
        s.domain = std::move(box);
        s.validate();
        return s;
    }

    static PotentialSpec diatomic(double q0, double q1, double lj_a, double lj_b,
                                  Box box = Box::cube(2, -1.5, 1.5)) {
        PotentialSpec s;
        s.kind = PotentialKind::diatomic;
        s.domain = std::move(box);
        s.charges = {q0, q1};
        s.lj_pairs = {{0, 1, lj_a, lj_b}};
        s.validate();
        return s;
    }

    std::size_t dim() const {
        switch (kind) {
            case PotentialKind::double_well:
            case PotentialKind::diatomic: return 2;
            case PotentialKind::composite: return 3 * n_atoms;
        }
        return 0;
    }

    const Box& domain_box() const { return domain; }

    void validate() const {
        domain.validate();
        if (domain.dim() != dim())
            throw std::invalid_argument("PotentialSpec: domain dimension != potential dimension");
        if (kind == PotentialKind::double_well) return;
        const std::size_t atoms = (kind == PotentialKind::diatomic) ? 2 : n_atoms;
        if (kind == PotentialKind::composite && n_atoms < 2)
            throw std::invalid_argument("PotentialSpec: composite needs at least 2 atoms");
        if (!charges.empty() && charges.size() != atoms)
            throw std::invalid_argument("PotentialSpec: charge count != atom count");
        for (const auto& p : lj_pairs) {
            if (p.i >= atoms || p.j >= atoms || p.i == p.j)
                throw std::invalid_argument("PotentialSpec: bad LJ pair indices");
            if (p.a < 0.0 || p.b < 0.0)
                throw std::invalid_argument("PotentialSpec: LJ coefficients must be >= 0");
            if (p.b > 0.0 && p.a <= 0.0)
                throw std::invalid_argument("PotentialSpec: A must be positive when B > 0");
        }
        // Opposite charges need a repulsive core or the energy is unbounded.
        for (std::size_t i = 0; i < charges.size(); ++i)
            for (std::size_t j = i + 1; j < charges.size(); ++j) {
                if (charges[i] * charges[j] < 0.0 && lj_repulsion(i, j) <= 0.0)
                    throw std::invalid_argument(
                        "PotentialSpec: A must be positive for oppositely charged pair");
            }
        for (const auto& b : bonds) {
            if (b.i >= atoms || b.j >= atoms || b.i == b.j)
                throw std::invalid_argument("PotentialSpec: bad bond indices");
            if (!(b.stiffness > 0.0))
                throw std::invalid_argument("PotentialSpec: bond stiffness must be positive");
        }
        for (const auto& a : angles) {
            if (a.i >= atoms || a.j >= atoms || a.k >= atoms)
                throw std::invalid_argument("PotentialSpec: bad angle indices");
            if (!(a.stiffness > 0.0))
                throw std::invalid_argument("PotentialSpec: angle stiffness must be positive");
        }
        for (const auto& t : torsions) {
            if (t.i >= atoms || t.j >= atoms || t.k >= atoms || t.l >= atoms)
                throw std::invalid_argument("PotentialSpec: bad torsion indices");
            if (t.amplitude < 0.0)
                throw std::invalid_argument("PotentialSpec: torsion amplitude must be >= 0");
            if (t.n == 0) throw std::invalid_argument("PotentialSpec: torsion n must be >= 1");
        }
    }

    double energy(std::span<const double> x) const;
    Vec gradient(std::span<const double> x) const;

    // Analytic (double well, diatomic) or per-pair-minimum lower bound.
    double lower_bound() const;

  private:
    double lj_repulsion(std::size_t i, std::size_t j) const {
        for (const auto& p : lj_pairs)
            if ((p.i == i && p.j == j) || (p.i == j && p.j == i)) return p.a;
        return 0.0;
    }

    double charge_product(std::size_t i, std::size_t j) const {
        if (charges.empty()) return 0.0;
        return charges[i] * charges[j];
    }

    friend struct detail_potential_access;
};

namespace detail {

// c/r + a/r^12 - b/r^6 and its derivative in r.
inline double pair_energy(double r, double c, double a, double b) {
    const double inv = 1.0 / r;
    const double inv6 = inv * inv * inv * inv * inv * inv;
    return c * inv + (a * inv6 - b) * inv6;
}

inline double pair_denergy(double r, double c, double a, double b) {
    const double inv = 1.0 / r;
    const double inv2 = inv * inv;
    const double inv6 = inv2 * inv2 * inv2;
    return -c * inv2 - 12.0 * a * inv6 * inv6 * inv + 6.0 * b * inv6 * inv;
}

// Minimum of the pair energy over r > 0 (lower-bound bookkeeping). Closed
// form when the Coulomb part is nonnegative, coarse log-scan plus golden
// section otherwise.
inline double pair_minimum(double c, double a, double b) {
    if (c == 0.0 && a == 0.0 && b == 0.0) return 0.0;
    if (c >= 0.0) return a > 0.0 ? -b * b / (4.0 * a) : 0.0;
    double best_s = 0.0, best_f = kInf;
    for (int k = 0; k <= 2400; ++k) {
        const double s = -6.0 + 12.0 * k / 2400.0;
        const double f = pair_energy(std::exp(s), c, a, b);
        if (f < best_f) {
            best_f = f;
            best_s = s;
        }
    }
    double lo = best_s - 0.01, hi = best_s + 0.01;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = pair_energy(std::exp(x1), c, a, b);
    double f2 = pair_energy(std::exp(x2), c, a, b);
    for (int it = 0; it < 120; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = pair_energy(std::exp(x1), c, a, b);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = pair_energy(std::exp(x2), c, a, b);
        }
    }
    return std::min(std::min(f1, f2), best_f);
}

using Vec3 = std::array<double, 3>;

inline Vec3 vsub(const Vec3& a, const Vec3& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 vcross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double vdot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double vnorm(const Vec3& a) { return std::sqrt(vdot(a, a)); }
inline Vec3 vscale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

inline Vec3 atom(std::span<const double> x, std::size_t i) {
    return {x[3 * i], x[3 * i + 1], x[3 * i + 2]};
}

inline void add_to_atom(std::span<double> g, std::size_t i, const Vec3& v) {
    g[3 * i] += v[0];
    g[3 * i + 1] += v[1];
    g[3 * i + 2] += v[2];
}

// Dihedral angle for atoms (i,j,k,l) and, optionally, its Cartesian gradient.
inline double dihedral(const Vec3& ri, const Vec3& rj, const Vec3& rk, const Vec3& rl,
                       Vec3* gi = nullptr, Vec3* gj = nullptr, Vec3* gk = nullptr,
                       Vec3* gl = nullptr) {
    const Vec3 b1 = vsub(rj, ri);
    const Vec3 b2 = vsub(rk, rj);
    const Vec3 b3 = vsub(rl, rk);
    const Vec3 n1 = vcross(b1, b2);
    const Vec3 n2 = vcross(b2, b3);
    const double nb2 = vnorm(b2);
    const double phi = std::atan2(nb2 * vdot(b1, n2), vdot(n1, n2));
    if (gi) {
        const double n1sq = vdot(n1, n1), n2sq = vdot(n2, n2);
        if (n1sq == 0.0 || n2sq == 0.0 || nb2 == 0.0)
            throw singularity_error("dihedral: degenerate geometry");
        const Vec3 fi = vscale(n1, -nb2 / n1sq);
        const Vec3 fl = vscale(n2, nb2 / n2sq);
        const double p = vdot(b1, b2) / (nb2 * nb2);
        const double q = vdot(b3, b2) / (nb2 * nb2);
        *gi = fi;
        *gl = fl;
        for (int c = 0; c < 3; ++c) {
            (*gj)[c] = -fi[c] - p * fi[c] + q * fl[c];
            (*gk)[c] = -fl[c] + p * fi[c] - q * fl[c];
        }
    }
    return phi;
}

}  // namespace detail

inline double PotentialSpec::energy(std::span<const double> x) const {
    if (x.size() != dim())
        throw std::invalid_argument("PotentialSpec::energy: dimension mismatch");
    switch (kind) {
        case PotentialKind::double_well: {
            const double a = x[0] * x[0] - 1.0;
            return 0.25 * a * a + 0.5 * x[1] * x[1];
        }
        case PotentialKind::diatomic: {
            const double r = std::sqrt(x[0] * x[0] + x[1] * x[1]);
            const double c = charge_product(0, 1);
            const auto& p = lj_pairs[0];
            if (r == 0.0) return (c != 0.0 || p.a > 0.0 || p.b > 0.0) ? kInf : 0.0;
            return detail::pair_energy(r, c, p.a, p.b);
        }
        case PotentialKind::composite: break;
    }
    double u = 0.0;
    for (const auto& b : bonds) {
        const double l = detail::vnorm(detail::vsub(detail::atom(x, b.i), detail::atom(x, b.j)));
        const double d = l - b.rest_length;
        u += b.stiffness * d * d;
    }
    for (const auto& a : angles) {
        const auto rj = detail::atom(x, a.j);
        const auto u1 = detail::vsub(detail::atom(x, a.i), rj);
        const auto v1 = detail::vsub(detail::atom(x, a.k), rj);
        const double nu = detail::vnorm(u1), nv = detail::vnorm(v1);
        if (nu == 0.0 || nv == 0.0) return kInf;  // coincident bonded atoms
        double c = detail::vdot(u1, v1) / (nu * nv);
        c = std::clamp(c, -1.0, 1.0);
        const double d = std::acos(c) - a.rest_angle;
        u += a.stiffness * d * d;
    }
    for (const auto& t : torsions) {
        const double phi = detail::dihedral(detail::atom(x, t.i), detail::atom(x, t.j),
                                            detail::atom(x, t.k), detail::atom(x, t.l));
        u += t.amplitude * (1.0 + std::cos(t.n * phi - t.phase));
    }
    // Coulomb over all charged pairs, LJ over listed pairs. A zero distance
    // with either term present sends the energy to +infinity.
    for (std::size_t i = 0; i < charges.size(); ++i)
        for (std::size_t j = i + 1; j < charges.size(); ++j) {
            const double c = charges[i] * charges[j];
            if (c == 0.0) continue;
            const double r =
                detail::vnorm(detail::vsub(detail::atom(x, i), detail::atom(x, j)));
            if (r == 0.0) return kInf;
            u += c / r;
        }
    for (const auto& p : lj_pairs) {
        if (p.a == 0.0 && p.b == 0.0) continue;
        const double r = detail::vnorm(detail::vsub(detail::atom(x, p.i), detail::atom(x, p.j)));
        if (r == 0.0) return kInf;
        const double inv6 = 1.0 / (r * r * r * r * r * r);
        u += (p.a * inv6 - p.b) * inv6;
    }
    return u;
}

inline Vec PotentialSpec::gradient(std::span<const double> x) const {
    if (x.size() != dim())
        throw std::invalid_argument("PotentialSpec::gradient: dimension mismatch");
    Vec g(x.size(), 0.0);
    switch (kind) {
        case PotentialKind::double_well:
            g[0] = x[0] * (x[0] * x[0] - 1.0);
            g[1] = x[1];
            return g;
        case PotentialKind::diatomic: {
            const double r = std::sqrt(x[0] * x[0] + x[1] * x[1]);
            const double c = charge_product(0, 1);
            const auto& p = lj_pairs[0];
            if (c == 0.0 && p.a == 0.0 && p.b == 0.0) return g;
            if (r == 0.0)
                throw singularity_error("PotentialSpec::gradient: evaluation on the collision set");
            const double du = detail::pair_denergy(r, c, p.a, p.b);
            g[0] = du * x[0] / r;
            g[1] = du * x[1] / r;
            return g;
        }
        case PotentialKind::composite: break;
    }
    for (const auto& b : bonds) {
        const auto d = detail::vsub(detail::atom(x, b.i), detail::atom(x, b.j));
        const double l = detail::vnorm(d);
        if (l == 0.0)
            throw singularity_error("PotentialSpec::gradient: coincident bonded atoms");
        const double f = 2.0 * b.stiffness * (l - b.rest_length) / l;
        detail::add_to_atom(g, b.i, detail::vscale(d, f));
        detail::add_to_atom(g, b.j, detail::vscale(d, -f));
    }
    for (const auto& a : angles) {
        const auto rj = detail::atom(x, a.j);
        const auto u1 = detail::vsub(detail::atom(x, a.i), rj);
        const auto v1 = detail::vsub(detail::atom(x, a.k), rj);
        const double nu = detail::vnorm(u1), nv = detail::vnorm(v1);
        if (nu == 0.0 || nv == 0.0)
            throw singularity_error("PotentialSpec::gradient: coincident bonded atoms");
        double c = std::clamp(detail::vdot(u1, v1) / (nu * nv), -1.0, 1.0);
        const double s = std::sqrt(1.0 - c * c);
        if (s == 0.0)
            throw singularity_error("PotentialSpec::gradient: collinear angle geometry");
        const double dU = 2.0 * a.stiffness * (std::acos(c) - a.rest_angle);
        detail::Vec3 gi, gk;
        for (int d3 = 0; d3 < 3; ++d3) {
            gi[d3] = (c * u1[d3] / nu - v1[d3] / nv) / (nu * s);
            gk[d3] = (c * v1[d3] / nv - u1[d3] / nu) / (nv * s);
        }
        detail::add_to_atom(g, a.i, detail::vscale(gi, dU));
        detail::add_to_atom(g, a.k, detail::vscale(gk, dU));
        detail::Vec3 gj{-gi[0] - gk[0], -gi[1] - gk[1], -gi[2] - gk[2]};
        detail::add_to_atom(g, a.j, detail::vscale(gj, dU));
    }
    for (const auto& t : torsions) {
        detail::Vec3 gi, gj, gk, gl;
        const double phi =
            detail::dihedral(detail::atom(x, t.i), detail::atom(x, t.j), detail::atom(x, t.k),
                             detail::atom(x, t.l), &gi, &gj, &gk, &gl);
        const double dU = -t.amplitude * t.n * std::sin(t.n * phi - t.phase);
        detail::add_to_atom(g, t.i, detail::vscale(gi, dU));
        detail::add_to_atom(g, t.j, detail::vscale(gj, dU));
        detail::add_to_atom(g, t.k, detail::vscale(gk, dU));
        detail::add_to_atom(g, t.l, detail::vscale(gl, dU));
    }
    for (std::size_t i = 0; i < charges.size(); ++i)
        for (std::size_t j = i + 1; j < charges.size(); ++j) {
            const double c = charges[i] * charges[j];
            if (c == 0.0) continue;
            const auto d = detail::vsub(detail::atom(x, i), detail::atom(x, j));
            const double r = detail::vnorm(d);
            if (r == 0.0)
                throw singularity_error("PotentialSpec::gradient: evaluation on the collision set");
            const double f = -c / (r * r * r);
            detail::add_to_atom(g, i, detail::vscale(d, f));
            detail::add_to_atom(g, j, detail::vscale(d, -f));
        }
    for (const auto& p : lj_pairs) {
        if (p.a == 0.0 && p.b == 0.0) continue;
        const auto d = detail::vsub(detail::atom(x, p.i), detail::atom(x, p.j));
        const double r = detail::vnorm(d);
        if (r == 0.0)
            throw singularity_error("PotentialSpec::gradient: evaluation on the collision set");
        const double inv2 = 1.0 / (r * r);
        const double inv6 = inv2 * inv2 * inv2;
        const double f = (-12.0 * p.a * inv6 + 6.0 * p.b) * inv6 * inv2;
        detail::add_to_atom(g, p.i, detail::vscale(d, f));
        detail::add_to_atom(g, p.j, detail::vscale(d, -f));
    }
    return g;
}

inline double PotentialSpec::lower_bound() const {
    switch (kind) {
        case PotentialKind::double_well: return 0.0;
        case PotentialKind::diatomic:
            return detail::pair_minimum(charge_product(0, 1), lj_pairs[0].a, lj_pairs[0].b);
        case PotentialKind::composite: break;
    }
    double u0 = 0.0;  // bonded terms are nonnegative
    for (std::size_t i = 0; i < charges.size(); ++i)
        for (std::size_t j = i + 1; j < charges.size(); ++j) {
            const double c = charges[i] * charges[j];
            double a = 0.0, b = 0.0;
            for (const auto& p : lj_pairs)
                if ((p.i == i && p.j == j) || (p.i == j && p.j == i)) {
                    a = p.a;
                    b = p.b;
                }
            if (c != 0.0 || a != 0.0 || b != 0.0) u0 += detail::pair_minimum(c, a, b);
        }
    for (const auto& p : lj_pairs) {
        const bool charged = !charges.empty() && charges[p.i] * charges[p.j] != 0.0;
        if (!charged && (p.a != 0.0 || p.b != 0.0))
            u0 += detail::pair_minimum(0.0, p.a, p.b);
    }
    return u0;
}

// ---------------------------------------------------------------------------
// High-energy regularization:
//
//   U_eps(x) = (1 - zeta(x)) U(x) + zeta(x) * 2/eps,  zeta(x) = chi(eps U(x))
//
// with the C^1 smoothstep profile chi (0 below 1, 1 above 2). The base energy
// is returned unchanged (bit for bit) wherever U <= 1/eps, and the result is
// capped at 2/eps everywhere, in particular across the collision set.
// ---------------------------------------------------------------------------

struct RegularizedPotential {
    PotentialSpec base;
    double epsilon = 1.0;
    double base_lower_bound = 0.0;  // U0; the uniform bound is U_eps >= -|U0|

    static double chi(double u) {
        if (u <= 1.0) return 0.0;
        if (u >= 2.0) return 1.0;
        const double t = u - 1.0;
        return t * t * (3.0 - 2.0 * t);
    }

    static double chi_prime(double u) {
        if (u <= 1.0 || u >= 2.0) return 0.0;
        const double t = u - 1.0;
        return 6.0 * t * (1.0 - t);
    }

    std::size_t dim() const { return base.dim(); }
    const Box& domain_box() const { return base.domain; }

    double energy(std::span<const double> x) const {
        const double u = base.energy(x);
        const double cap = 2.0 / epsilon;
        if (u <= 1.0 / epsilon) return u;
        if (u >= cap) return cap;  // covers +infinity
        const double z = chi(epsilon * u);
        return (1.0 - z) * u + z * cap;
    }

    Vec gradient(std::span<const double> x) const {
        const double u = base.energy(x);
        const double cap = 2.0 / epsilon;
        if (u >= cap) return Vec(base.dim(), 0.0);  // flat above the cap
        Vec g = base.gradient(x);
        if (u <= 1.0 / epsilon) return g;
        const double z = chi(epsilon * u);
        const double scale = (1.0 - z) + chi_prime(epsilon * u) * epsilon * (cap - u);
        for (auto& v : g) v *= scale;
        return g;
    }
};

inline RegularizedPotential regularize(const PotentialSpec& spec, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("regularize: epsilon must be positive");
    RegularizedPotential r;
    r.base = spec;
    r.epsilon = epsilon;
    r.base_lower_bound = spec.lower_bound();
    return r;
}

// Anything with energy/gradient/domain can drive Langevin sampling and
// Boltzmann grids.
template <class P>
concept EnergyModel = requires(const P& p, std::span<const double> x) {
    { p.energy(x) } -> std::convertible_to<double>;
    { p.gradient(x) } -> std::convertible_to<Vec>;
    { p.domain_box() } -> std::convertible_to<const Box&>;
    { p.dim() } -> std::convertible_to<std::size_t>;
};

inline double eval_energy(const PotentialSpec& s, std::span<const double> x) {
    return s.energy(x);
}
inline Vec eval_gradient(const PotentialSpec& s, std::span<const double> x) {
    return s.gradient(x);
}

template <EnergyModel P>
GridDensity boltzmann_grid(const P& pot, double beta, const UniformGrid& grid) {
    return boltzmann_grid([&pot](std::span<const double> x) { return pot.energy(x); }, beta, grid);
}

}  // namespace moserflow
