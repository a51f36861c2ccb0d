#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "moserflow/potential.hpp"
#include "moserflow/rng.hpp"

using namespace moserflow;

namespace {

// Central-difference gradient oracle, independent of the analytic path.
Vec fd_gradient(const PotentialSpec& spec, const Vec& x, double h = 1e-5) {
    Vec g(x.size());
    Vec xp = x, xm = x;
    for (std::size_t a = 0; a < x.size(); ++a) {
        xp[a] = x[a] + h;
        xm[a] = x[a] - h;
        g[a] = (spec.energy(xp) - spec.energy(xm)) / (2.0 * h);
        xp[a] = x[a];
        xm[a] = x[a];
    }
    return g;
}

void check_gradient_against_fd(const PotentialSpec& spec, const Vec& x, double rel_tol = 1e-6) {
    const Vec g = spec.gradient(x);
    const Vec gfd = fd_gradient(spec, x);
    const double scale = std::max(norm2(g), 1.0);
    for (std::size_t a = 0; a < g.size(); ++a) {
        CAPTURE(a, g[a], gfd[a]);
        REQUIRE(std::abs(g[a] - gfd[a]) / scale < rel_tol);
    }
}

PotentialSpec chain_molecule() {
    PotentialSpec s;
    s.kind = PotentialKind::composite;
    s.n_atoms = 4;
    s.domain = Box::cube(12, -6.0, 6.0);
    s.charges = {0.3, -0.2, 0.1, 0.25};
    s.lj_pairs = {{0, 3, 0.8, 0.5}, {0, 1, 1.0, 0.0}, {1, 2, 1.0, 0.0},
                  {2, 3, 1.0, 0.0}, {0, 2, 1.0, 0.4}, {1, 3, 1.0, 0.4}};
    s.bonds = {{0, 1, 40.0, 1.1}, {1, 2, 35.0, 1.0}, {2, 3, 42.0, 1.2}};
    s.angles = {{0, 1, 2, 6.0, 1.9}, {1, 2, 3, 5.0, 2.0}};
    s.torsions = {{0, 1, 2, 3, 1, 0.7, 0.3}, {0, 1, 2, 3, 2, 0.4, -0.5}, {0, 1, 2, 3, 3, 0.2, 1.1}};
    s.validate();
    return s;
}

Vec chain_positions(Rng& rng) {
    // zig-zag chain with jitter; keeps all pair distances well off zero
    Vec x = {0.0, 0.0, 0.0, 1.1, 0.2, 0.1, 1.9, 1.0, -0.2, 3.0, 1.2, 0.6};
    for (auto& v : x) v += 0.15 * rng.normal();
    return x;
}

}  // namespace

TEST_CASE("double well energies at reference points") {
    const auto dw = PotentialSpec::double_well();
    REQUIRE(dw.energy(Vec{1.0, 0.0}) == 0.0);
    REQUIRE(dw.energy(Vec{0.0, 0.0}) == 0.25);
    REQUIRE(dw.energy(Vec{-1.0, 0.0}) == 0.0);
}

TEST_CASE("double well gradient at reference points") {
    const auto dw = PotentialSpec::double_well();
    const Vec g0 = dw.gradient(Vec{1.0, 0.0});
    REQUIRE(g0[0] == 0.0);
    REQUIRE(g0[1] == 0.0);
    const Vec g1 = dw.gradient(Vec{0.0, 1.0});
    REQUIRE(g1[0] == 0.0);
    REQUIRE(g1[1] == 1.0);
}

TEST_CASE("diatomic minimum from calculus") {
    // minimize A/r^12 - B/r^6: r* = (2A/B)^(1/6), U(r*) = -B^2/(4A)
    const double a = 1.0, b = 1.0;
    const auto di = PotentialSpec::diatomic(0.0, 0.0, a, b);
    const double rstar = std::pow(2.0 * a / b, 1.0 / 6.0);
    REQUIRE_THAT(di.energy(Vec{rstar, 0.0}),
                 Catch::Matchers::WithinAbs(-b * b / (4.0 * a), 1e-14));
    // radial gradient component vanishes at the minimum
    const Vec g = di.gradient(Vec{rstar, 0.0});
    REQUIRE_THAT(g[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(g[1], Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("collision set maps to +infinity exactly") {
    const auto di = PotentialSpec::diatomic(1.0, 1.0, 1.0, 1.0);
    REQUIRE(di.energy(Vec{0.0, 0.0}) == kInf);
    REQUIRE_THROWS_AS(di.gradient(Vec{0.0, 0.0}), singularity_error);
    // no Coulomb or LJ term: finite (zero) at the origin
    const auto free = PotentialSpec::diatomic(0.0, 0.0, 0.0, 0.0);
    REQUIRE(free.energy(Vec{0.0, 0.0}) == 0.0);
}

TEST_CASE("dimension mismatch rejected") {
    const auto dw = PotentialSpec::double_well();
    REQUIRE_THROWS_AS(dw.energy(Vec{1.0, 2.0, 3.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(dw.gradient(Vec{1.0}), std::invalid_argument);
}

TEST_CASE("spec validation enforces sign constraints") {
    PotentialSpec bad = PotentialSpec::diatomic(0.0, 0.0, 1.0, 1.0);
    bad.lj_pairs[0].a = -1.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    // B > 0 needs A > 0
    bad.lj_pairs[0] = {0, 1, 0.0, 1.0};
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    // oppositely charged pair needs repulsive core
    REQUIRE_THROWS_AS(PotentialSpec::diatomic(1.0, -1.0, 0.0, 0.0), std::invalid_argument);
    PotentialSpec chain = chain_molecule();
    chain.bonds[0].stiffness = 0.0;
    REQUIRE_THROWS_AS(chain.validate(), std::invalid_argument);
}

TEST_CASE("analytic gradients match central differences") {
    Rng rng(2024);
    SECTION("double well") {
        const auto dw = PotentialSpec::double_well();
        for (int i = 0; i < 100; ++i) {
            Vec x = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
            check_gradient_against_fd(dw, x);
        }
    }
    SECTION("diatomic with charges") {
        const auto di = PotentialSpec::diatomic(0.8, -0.5, 1.0, 1.0);
        for (int i = 0; i < 100; ++i) {
            // stay away from the collision set and from regions where the
            // core repulsion dwarfs the FD step
            const double r = rng.uniform(0.7, 1.5);
            const double phi = rng.uniform(0.0, 6.28);
            Vec x = {r * std::cos(phi), r * std::sin(phi)};
            check_gradient_against_fd(di, x);
        }
    }
    SECTION("composite chain") {
        const auto mol = chain_molecule();
        for (int i = 0; i < 100; ++i) {
            const Vec x = chain_positions(rng);
            check_gradient_against_fd(mol, x);
        }
    }
}

TEST_CASE("regularization reference values") {
    const auto dw = PotentialSpec::double_well();
    SECTION("below the threshold the energy is untouched") {
        const auto reg = regularize(dw, 1.0);
        // base value 0.5 <= 1/eps
        const Vec x = {0.0, std::sqrt(0.5)};
        REQUIRE(dw.energy(x) <= 1.0);
        REQUIRE(reg.energy(x) == dw.energy(x));
    }
    SECTION("infinite base energy maps to 2/eps") {
        const auto di = PotentialSpec::diatomic(1.0, 1.0, 1.0, 1.0);
        for (double eps : {1.0, 0.25, 0.01}) {
            const auto reg = regularize(di, eps);
            REQUIRE(reg.energy(Vec{0.0, 0.0}) == 2.0 / eps);
        }
    }
    SECTION("mid-band blend with the smoothstep profile") {
        // base value 1.5/eps with eps = 1: chi(1.5) = 0.5, so the blend is
        // 0.5 * 1.5 + 0.5 * 2 = 1.75
        const double eps = 1.0;
        const auto reg = regularize(dw, eps);
        const Vec x = {1.0, std::sqrt(3.0)};
        const double u = dw.energy(x);
        REQUIRE_THAT(u, Catch::Matchers::WithinAbs(1.5, 1e-13));
        const double expected = (1.0 - RegularizedPotential::chi(eps * u)) * u +
                                RegularizedPotential::chi(eps * u) * 2.0 / eps;
        REQUIRE(reg.energy(x) == expected);
        REQUIRE(reg.energy(x) > 1.5);
        REQUIRE(reg.energy(x) < 2.0);
    }
    REQUIRE_THROWS_AS(regularize(dw, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(regularize(dw, -1.0), std::invalid_argument);
}

TEST_CASE("regularization properties on random nodes") {
    const auto di = PotentialSpec::diatomic(0.5, -0.4, 1.0, 1.0);
    const double eps = 0.25;
    const auto reg = regularize(di, eps);
    Rng rng(7);
    std::size_t n_exact = 0;
    for (int i = 0; i < 10000; ++i) {
        const Vec x = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
        const double u = di.energy(x);
        const double ue = reg.energy(x);
        REQUIRE(ue <= 2.0 / eps);
        REQUIRE(ue >= -std::abs(reg.base_lower_bound));
        if (u <= 1.0 / eps) {
            REQUIRE(ue == u);  // bit-for-bit
            ++n_exact;
        }
    }
    REQUIRE(n_exact > 1000);  // the low-energy region is actually exercised
}

TEST_CASE("regularized gradient stays consistent with finite differences") {
    const auto di = PotentialSpec::diatomic(0.5, -0.4, 1.0, 1.0);
    const auto reg = regularize(di, 0.5);
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        const double r = rng.uniform(0.55, 1.4);
        const double phi = rng.uniform(0.0, 6.28);
        const Vec x = {r * std::cos(phi), r * std::sin(phi)};
        const Vec g = reg.gradient(x);
        Vec xp = x, xm = x;
        const double h = 1e-6;
        const double scale = std::max(norm2(g), 1.0);
        for (std::size_t a = 0; a < 2; ++a) {
            xp[a] += h;
            xm[a] -= h;
            const double fd = (reg.energy(xp) - reg.energy(xm)) / (2.0 * h);
            REQUIRE(std::abs(g[a] - fd) / scale < 2e-5);
            xp[a] = x[a];
            xm[a] = x[a];
        }
    }
}

TEST_CASE("lower bound constants") {
    REQUIRE(PotentialSpec::double_well().lower_bound() == 0.0);
    const auto di = PotentialSpec::diatomic(0.0, 0.0, 1.0, 1.0);
    REQUIRE_THAT(di.lower_bound(), Catch::Matchers::WithinAbs(-0.25, 1e-14));
    // attractive Coulomb deepens the minimum below the LJ value
    const auto polar = PotentialSpec::diatomic(1.0, -1.0, 1.0, 1.0);
    REQUIRE(polar.lower_bound() < -0.25);
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const double r = rng.uniform(0.05, 3.0);
        REQUIRE(polar.energy(Vec{r, 0.0}) >= polar.lower_bound() - 1e-12);
    }
}

TEST_CASE("boltzmann grid normalization and reference ratios") {
    const auto dw = PotentialSpec::double_well();
    // 61 nodes over [-3,3]: h = 0.1, so (1,0) and (0,0) are grid nodes
    const auto grid = make_grid(Box::cube(2, -3.0, 3.0), 61);
    const auto rho = boltzmann_grid(dw, 1.0, grid);
    rho.validate(1e-10);
    SECTION("density ratio between the well and the barrier") {
        // rho(1,0)/rho(0,0) = e^{0.25}; both points are nodes of the grid
        const double d_well = rho.at(Vec{1.0, 0.0});
        const double d_barrier = rho.at(Vec{0.0, 0.0});
        REQUIRE_THAT(d_well / d_barrier, Catch::Matchers::WithinRel(std::exp(0.25), 1e-12));
    }
    SECTION("constant energy gives the uniform density") {
        struct Flat {
            double operator()(std::span<const double>) const { return 3.7; }
        };
        const auto uni = boltzmann_grid(Flat{}, 2.0, make_grid(Box::cube(2, 0.0, 1.0), 33));
        for (double v : uni.values) REQUIRE_THAT(v, Catch::Matchers::WithinRel(1.0, 1e-12));
    }
    SECTION("collision nodes carry zero density") {
        const auto di = PotentialSpec::diatomic(1.0, 1.0, 1.0, 1.0);
        // odd node count puts a node exactly on the collision point
        const auto g = make_grid(Box::cube(2, -1.5, 1.5), 31);
        const auto rhod = boltzmann_grid(di, 1.0, g);
        rhod.validate(1e-10);
        Vec x = {0.0, 0.0};
        REQUIRE(rhod.at(x) == 0.0);
    }
    SECTION("beta far beyond float range fails loudly") {
        struct Steep {
            double operator()(std::span<const double> x) const { return 1e6 + x[0]; }
        };
        REQUIRE_THROWS_AS(boltzmann_grid(Steep{}, 1e303, make_grid(Box::cube(1, 0.0, 1.0), 16)),
                          overflow_domain_error);
    }
}

TEST_CASE("l1 distance basics") {
    const auto grid = make_grid(Box::cube(1, 0.0, 1.0), 101);
    auto bump = [&](double center) {
        return density_from_function(
            [&](std::span<const double> x) {
                const double d = x[0] - center;
                return std::exp(-d * d / 0.002);
            },
            grid);
    };
    const auto a = bump(0.25);
    const auto b = bump(0.75);
    REQUIRE(l1_distance(a, a) == 0.0);
    REQUIRE_THAT(l1_distance(a, b), Catch::Matchers::WithinAbs(2.0, 1e-6));
    REQUIRE_THAT(l1_distance(a, b), Catch::Matchers::WithinAbs(l1_distance(b, a), 0.0));
    const auto other = density_from_function(
        [](std::span<const double>) { return 1.0; }, make_grid(Box::cube(1, 0.0, 1.0), 51));
    REQUIRE_THROWS_AS(l1_distance(a, other), std::invalid_argument);
}

TEST_CASE("regularized densities converge monotonically on the diatomic toy") {
    const auto di = PotentialSpec::diatomic(0.0, 0.0, 1.0, 1.0);
    const auto grid = make_grid(Box::cube(2, -1.5, 1.5), 128);
    const auto rho = boltzmann_grid(di, 1.0, grid);
    Vec dists;
    for (double eps : {1.0, 0.5, 0.25, 0.125}) {
        const auto reg = regularize(di, eps);
        dists.push_back(l1_distance(boltzmann_grid(reg, 1.0, grid), rho));
    }
    CAPTURE(dists[0], dists[1], dists[2], dists[3]);
    for (std::size_t i = 1; i < dists.size(); ++i) REQUIRE(dists[i] < dists[i - 1]);
}
