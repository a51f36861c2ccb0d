#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "moserflow/langevin.hpp"

using namespace moserflow;

namespace {

// 1D harmonic well U = x^2/2; the Euler-Maruyama chain has a known
// stationary variance for exact dynamics of 1/beta.
struct QuadraticWell {
    Box box = Box::cube(1, -10.0, 10.0);
    std::size_t dim() const { return 1; }
    const Box& domain_box() const { return box; }
    double energy(std::span<const double> x) const { return 0.5 * x[0] * x[0]; }
    Vec gradient(std::span<const double> x) const { return {x[0]}; }
};

SampleSet from_x1(const Vec& xs) {
    SampleSet s(2, Provenance::langevin, 0);
    for (double v : xs) s.push(Vec{v, 0.0});
    return s;
}

}  // namespace

TEST_CASE("noise-free limit descends into the nearest well") {
    const auto dw = PotentialSpec::double_well();
    LangevinConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 20000;
    cfg.beta = 1e300;  // noise amplitude underflows to ~0
    cfg.seed = 42;
    cfg.x0 = {0.3, 0.7};
    const auto traj = simulate(dw, cfg);
    const auto last = traj.point(traj.size() - 1);
    REQUIRE(std::abs(last[0] - 1.0) < 1e-4);
    REQUIRE(std::abs(last[1]) < 1e-4);
}

TEST_CASE("harmonic well reproduces the stationary variance") {
    QuadraticWell well;
    LangevinConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 1000000;
    cfg.beta = 2.0;
    cfg.seed = 7;
    cfg.burn_in = 20000;
    cfg.x0 = {0.0};
    const auto traj = simulate(well, cfg);
    double var = 0.0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const double v = traj.point(i)[0];
        var += v * v;
    }
    var /= static_cast<double>(traj.size());
    REQUIRE_THAT(var, Catch::Matchers::WithinRel(0.5, 0.05));
}

TEST_CASE("simulation is deterministic in the seed") {
    const auto dw = PotentialSpec::double_well();
    LangevinConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 5000;
    cfg.beta = 1.0;
    cfg.seed = 123;
    cfg.x0 = {1.0, 0.0};
    const auto a = simulate(dw, cfg);
    const auto b = simulate(dw, cfg);
    REQUIRE(a.data == b.data);  // bit-identical
    cfg.seed = 124;
    const auto c = simulate(dw, cfg);
    REQUIRE(a.data != c.data);
}

TEST_CASE("config validation") {
    const auto dw = PotentialSpec::double_well();
    LangevinConfig cfg;
    cfg.n_steps = 100;
    cfg.x0 = {0.0, 0.0};
    SECTION("burn_in must stay below n_steps") {
        cfg.burn_in = 100;
        REQUIRE_THROWS_AS(simulate(dw, cfg), std::invalid_argument);
    }
    SECTION("dt must be positive") {
        cfg.dt = 0.0;
        REQUIRE_THROWS_AS(simulate(dw, cfg), std::invalid_argument);
    }
    SECTION("x0 must live in the domain") {
        cfg.x0 = {5.0, 0.0};
        REQUIRE_THROWS_AS(simulate(dw, cfg), std::invalid_argument);
    }
    SECTION("x0 on a singular point is rejected") {
        const auto di = PotentialSpec::diatomic(1.0, 1.0, 1.0, 1.0);
        cfg.x0 = {0.0, 0.0};
        REQUIRE_THROWS_AS(simulate(di, cfg), std::invalid_argument);
    }
}

TEST_CASE("reflection keeps trajectories inside the box") {
    const auto dw = PotentialSpec::double_well();
    LangevinConfig cfg;
    cfg.dt = 1e-2;  // large steps to provoke wall contact
    cfg.n_steps = 50000;
    cfg.beta = 0.2;
    cfg.seed = 5;
    cfg.x0 = {0.0, 0.0};
    const auto traj = simulate(dw, cfg);
    for (std::size_t i = 0; i < traj.size(); ++i)
        REQUIRE(dw.domain.contains(traj.point(i)));
}

TEST_CASE("langevin sampling near the LJ wall stays finite") {
    // the retry policy has to keep the chain off the collision region
    const auto di = PotentialSpec::diatomic(0.0, 0.0, 1.0, 1.0);
    LangevinConfig cfg;
    cfg.dt = 1e-4;
    cfg.n_steps = 50000;
    cfg.beta = 2.0;
    cfg.seed = 9;
    cfg.x0 = {1.12, 0.0};
    const auto traj = simulate(di, cfg);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const auto p = traj.point(i);
        REQUIRE(std::isfinite(di.energy(p)));
    }
}

TEST_CASE("transition counter on hand-traced sequences") {
    SECTION("constant trajectory never transitions") {
        SampleSet s(2, Provenance::langevin, 0);
        for (int i = 0; i < 10; ++i) s.push(Vec{1.0, 0.0});
        REQUIRE(count_transitions(s, 0, -0.5, 0.5) == 0);
    }
    SECTION("single crossing") {
        REQUIRE(count_transitions(from_x1({-1.0, -1.0, 1.0, 1.0}), 0, -0.5, 0.5) == 1);
    }
    SECTION("in-band excursion does not count") {
        REQUIRE(count_transitions(from_x1({-1.0, 0.4, -1.0, 1.0, -1.0}), 0, -0.5, 0.5) == 2);
    }
    SECTION("errors") {
        SampleSet empty(2, Provenance::langevin, 0);
        REQUIRE_THROWS_AS(count_transitions(empty, 0, -0.5, 0.5), std::invalid_argument);
        REQUIRE_THROWS_AS(count_transitions(from_x1({0.0}), 0, 0.5, -0.5), std::invalid_argument);
        REQUIRE_THROWS_AS(count_transitions(from_x1({0.0}), 3, -0.5, 0.5), std::invalid_argument);
    }
}

TEST_CASE("transition count is invariant under non-crossing insertions") {
    Rng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        Vec xs;
        for (int i = 0; i < 40; ++i) xs.push_back(rng.uniform(-2.0, 2.0));
        const auto base = count_transitions(from_x1(xs), 0, -0.5, 0.5);
        // splice in-band points anywhere
        Vec padded;
        for (double v : xs) {
            padded.push_back(v);
            if (rng.uniform() < 0.5) padded.push_back(rng.uniform(-0.49, 0.49));
        }
        REQUIRE(count_transitions(from_x1(padded), 0, -0.5, 0.5) == base);
    }
}

TEST_CASE("double-well trajectory matches the Boltzmann marginals") {
    const auto dw = PotentialSpec::double_well();
    LangevinConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 1000000;
    cfg.beta = 1.0;
    cfg.seed = 1;
    cfg.burn_in = 50000;
    cfg.x0 = {1.0, 0.0};
    const auto traj = simulate(dw, cfg);

    const auto rho = boltzmann_grid(dw, cfg.beta, make_grid(Box::cube(2, -3.0, 3.0), 241));
    const int K = 16;  // bins; edges align with the 241-node marginal grid
    for (std::size_t axis = 0; axis < 2; ++axis) {
        const auto marg = rho.marginal(axis);
        const std::size_t per = (marg.values.size() - 1) / K;
        const double h = marg.grid.spacing(0);
        Vec q(K, 0.0);
        for (int b = 0; b < K; ++b) {
            const std::size_t k0 = b * per, k1 = (b + 1) * per;
            q[b] = 0.5 * (marg.values[k0] + marg.values[k1]) * h;
            for (std::size_t k = k0 + 1; k < k1; ++k) q[b] += marg.values[k] * h;
        }
        Vec p(K, 0.0);
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const double v = traj.point(i)[axis];
            int b = static_cast<int>((v + 3.0) / 6.0 * K);
            p[std::clamp(b, 0, K - 1)] += 1.0 / static_cast<double>(traj.size());
        }
        double l1 = 0.0;
        for (int b = 0; b < K; ++b) l1 += std::abs(p[b] - q[b]);
        CAPTURE(axis, l1);
        REQUIRE(l1 < 0.05);
    }
}

TEST_CASE("thinned trajectory visits both wells") {
    const auto dw = PotentialSpec::double_well();
    LangevinConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 1250000;
    cfg.beta = 1.0;
    cfg.seed = 11;
    cfg.burn_in = 50000;
    cfg.thin = 2000;  // 600 retained frames
    cfg.x0 = {1.0, 0.0};
    const auto traj = simulate(dw, cfg);
    REQUIRE(traj.size() == 600);
    const auto x1 = traj.coordinate(0);
    REQUIRE(*std::min_element(x1.begin(), x1.end()) < -0.5);
    REQUIRE(*std::max_element(x1.begin(), x1.end()) > 0.5);
    REQUIRE(count_transitions(traj, 0, -0.5, 0.5) >= 1);
}
