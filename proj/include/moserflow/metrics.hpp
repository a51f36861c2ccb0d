#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "moserflow/core.hpp"
#include "moserflow/rng.hpp"
#include "moserflow/sample_set.hpp"

namespace moserflow {

struct W2Report {
    double value = 0.0;
    std::size_t n_used = 0;
    std::string method;           // exact_assignment | quantile_1d
    std::uint64_t seed = 0;
    Vec per_coordinate;           // 1D distances on the same subsample
    double per_coordinate_mean = 0.0;
};

namespace detail {

// Exact linear assignment by shortest augmenting paths with dual potentials
// (Jonker-Volgenant style), O(n^3). cost is row-major n x n. Returns the
// column matched to each row.
inline std::vector<std::size_t> solve_assignment(const Vec& cost, std::size_t n) {
    const double inf = kInf;
    Vec u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0);       // match[col] = row (1-based)
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        Vec minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            const double* row = cost.data() + (i0 - 1) * n;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = row[j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

inline Vec sorted_copy(Vec v) {
    std::sort(v.begin(), v.end());
    return v;
}

// Linear interpolation of the empirical quantile function at q in (0,1).
inline double quantile(const Vec& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size()) - 0.5;
    if (pos <= 0.0) return sorted.front();
    if (pos >= static_cast<double>(sorted.size() - 1)) return sorted.back();
    const std::size_t k = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(k);
    return sorted[k] * (1.0 - t) + sorted[k + 1] * t;
}

inline Vec resample_sorted(const Vec& sorted, std::size_t m) {
    Vec out(m);
    for (std::size_t i = 0; i < m; ++i)
        out[i] = quantile(sorted, (static_cast<double>(i) + 0.5) / static_cast<double>(m));
    return out;
}

}  // namespace detail

// Quantile form of the 1D W2 distance: sorted values matched in order. Inputs
// of different lengths are resampled to the shorter length by sorted linear
// interpolation.
inline double w2_1d(Vec a, Vec b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("w2_1d: empty input");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.size() != b.size()) {
        const std::size_t m = std::min(a.size(), b.size());
        a = detail::resample_sorted(a, m);
        b = detail::resample_sorted(b, m);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

// W2 on a circle of circumference 2*pi (angles). The optimal matching of two
// equal-size angle sets is order-preserving up to a cyclic shift, so the
// exact value is the minimum over the n shifts of the sorted matching.
inline double w2_1d_circular(Vec a, Vec b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("w2_1d_circular: empty input");
    const double two_pi = 2.0 * std::numbers::pi;
    auto wrap = [&](double x) {
        x = std::fmod(x + std::numbers::pi, two_pi);
        if (x < 0.0) x += two_pi;
        return x - std::numbers::pi;
    };
    for (auto& v : a) v = wrap(v);
    for (auto& v : b) v = wrap(v);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.size() != b.size()) {
        const std::size_t m = std::min(a.size(), b.size());
        a = detail::resample_sorted(a, m);
        b = detail::resample_sorted(b, m);
    }
    const std::size_t n = a.size();
    auto sq_geodesic = [&](double x, double y) {
        double d = std::abs(x - y);
        d = std::min(d, two_pi - d);
        return d * d;
    };
    double best = kInf;
    for (std::size_t shift = 0; shift < n; ++shift) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += sq_geodesic(a[i], b[(i + shift) % n]);
        best = std::min(best, s);
    }
    return std::sqrt(best / static_cast<double>(n));
}

// Exact W2 between point clouds: uniform subsample of n_sub per side, squared
// Euclidean cost, optimal assignment, sqrt of the mean matched cost.
inline W2Report w2_exact(const SampleSet& a, const SampleSet& b, std::size_t n_sub,
                         std::uint64_t seed) {
    if (a.dim != b.dim) throw std::invalid_argument("w2_exact: dimension mismatch");
    if (n_sub < 1) throw std::invalid_argument("w2_exact: n_sub must be >= 1");
    if (n_sub > a.size() || n_sub > b.size())
        throw std::invalid_argument("w2_exact: n_sub exceeds a sample size");
    const std::size_t d = a.dim;
    Rng rng_a(Rng::split(seed, 0));
    Rng rng_b(Rng::split(seed, 1));
    const auto ia = rng_a.sample_indices(a.size(), n_sub);
    const auto ib = rng_b.sample_indices(b.size(), n_sub);

    Vec cost(n_sub * n_sub);
    for (std::size_t i = 0; i < n_sub; ++i) {
        const auto pa = a.point(ia[i]);
        for (std::size_t j = 0; j < n_sub; ++j) {
            const auto pb = b.point(ib[j]);
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = pa[c] - pb[c];
                s += diff * diff;
            }
            cost[i * n_sub + j] = s;
        }
    }
    const auto match = detail::solve_assignment(cost, n_sub);
    double total = 0.0;
    for (std::size_t i = 0; i < n_sub; ++i) total += cost[i * n_sub + match[i]];

    W2Report rep;
    rep.value = std::sqrt(total / static_cast<double>(n_sub));
    rep.n_used = n_sub;
    rep.method = "exact_assignment";
    rep.seed = seed;
    rep.per_coordinate.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        Vec va(n_sub), vb(n_sub);
        for (std::size_t i = 0; i < n_sub; ++i) {
            va[i] = a.point(ia[i])[c];
            vb[i] = b.point(ib[i])[c];
        }
        rep.per_coordinate[c] = w2_1d(std::move(va), std::move(vb));
    }
    double m = 0.0;
    for (double v : rep.per_coordinate) m += v;
    rep.per_coordinate_mean = m / static_cast<double>(d);
    return rep;
}

// Noise floor for stochastic acceptance checks: mean exact W2 between
// independent same-size draws from one distribution.
inline double self_distance_floor(const std::function<SampleSet(std::size_t, std::uint64_t)>& draw,
                                  std::size_t n, std::size_t repeats, std::uint64_t seed,
                                  std::size_t n_sub = 1000) {
    if (repeats < 2) throw std::invalid_argument("self_distance_floor: repeats must be >= 2");
    double acc = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
        const SampleSet a = draw(n, Rng::split(seed, 2 * r));
        const SampleSet b = draw(n, Rng::split(seed, 2 * r + 1));
        acc += w2_exact(a, b, std::min(n, n_sub), Rng::split(seed, 1000 + r)).value;
    }
    return acc / static_cast<double>(repeats);
}

// L1 distance between normalized histograms on a shared binning; lies in
// [0, 2]. Every sample must fall inside the binning box.
struct HistSpec {
    Box box;
    std::vector<std::size_t> bins;

    std::size_t total_bins() const {
        std::size_t n = 1;
        for (std::size_t b : bins) n *= b;
        return n;
    }

    std::size_t bin_of(std::span<const double> x) const {
        std::size_t f = 0;
        for (std::size_t a = 0; a < bins.size(); ++a) {
            if (x[a] < box.lo[a] || x[a] > box.hi[a])
                throw std::invalid_argument("HistSpec: sample outside binning box");
            const double t = (x[a] - box.lo[a]) / box.extent(a);
            std::size_t k = static_cast<std::size_t>(t * static_cast<double>(bins[a]));
            if (k >= bins[a]) k = bins[a] - 1;
            f = f * bins[a] + k;
        }
        return f;
    }
};

inline Vec histogram(const SampleSet& s, const HistSpec& spec) {
    if (s.size() == 0) throw std::invalid_argument("histogram: empty sample set");
    if (s.dim != spec.bins.size()) throw std::invalid_argument("histogram: dimension mismatch");
    Vec h(spec.total_bins(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) h[spec.bin_of(s.point(i))] += 1.0;
    for (auto& v : h) v /= static_cast<double>(s.size());
    return h;
}

inline double hist_l1(const SampleSet& a, const SampleSet& b, const HistSpec& spec) {
    const Vec ha = histogram(a, spec);
    const Vec hb = histogram(b, spec);
    double s = 0.0;
    for (std::size_t i = 0; i < ha.size(); ++i) s += std::abs(ha[i] - hb[i]);
    return s;
}

}  // namespace moserflow
