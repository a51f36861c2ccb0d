#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace moserflow {

using Vec = std::vector<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Error types. Invalid user input throws std::invalid_argument; everything
// that can go wrong numerically gets its own type so callers can map it to
// a diagnostic (or an exit code) without string matching.
// ---------------------------------------------------------------------------

struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct singularity_error : numerical_error {
    using numerical_error::numerical_error;
};

struct overflow_domain_error : numerical_error {
    using numerical_error::numerical_error;
};

struct convergence_error : numerical_error {
    convergence_error(const std::string& msg, double residual)
        : numerical_error(msg), residual(residual) {}
    double residual;
};

struct out_of_domain_error : numerical_error {
    explicit out_of_domain_error(const std::string& msg, double exit_time = 0.0)
        : numerical_error(msg), exit_time(exit_time) {}
    double exit_time;
};

struct density_floor_error : numerical_error {
    using numerical_error::numerical_error;
};

struct numerical_blowup_error : numerical_error {
    numerical_blowup_error(const std::string& msg, std::size_t step)
        : numerical_error(msg), step(step) {}
    std::size_t step;
};

struct training_diverged_error : numerical_error {
    training_diverged_error(const std::string& msg, std::size_t epoch)
        : numerical_error(msg), epoch(epoch) {}
    std::size_t epoch;
};

// ---------------------------------------------------------------------------
// Axis-aligned box domain.
// ---------------------------------------------------------------------------

struct Box {
    Vec lo;
    Vec hi;

    Box() = default;
    Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) { validate(); }

    static Box cube(std::size_t dim, double a, double b) {
        return Box(Vec(dim, a), Vec(dim, b));
    }

    std::size_t dim() const { return lo.size(); }

    void validate() const {
        if (lo.size() != hi.size())
            throw std::invalid_argument("Box: lo/hi dimension mismatch");
        for (std::size_t a = 0; a < lo.size(); ++a) {
            if (!std::isfinite(lo[a]) || !std::isfinite(hi[a]) || !(lo[a] < hi[a]))
                throw std::invalid_argument("Box: bounds must be finite with lo < hi");
        }
    }

    bool contains(std::span<const double> x) const {
        if (x.size() != lo.size()) return false;
        for (std::size_t a = 0; a < lo.size(); ++a)
            if (x[a] < lo[a] || x[a] > hi[a]) return false;
        return true;
    }

    double extent(std::size_t axis) const { return hi[axis] - lo[axis]; }

    double diameter() const {
        double s = 0.0;
        for (std::size_t a = 0; a < lo.size(); ++a) s += extent(a) * extent(a);
        return std::sqrt(s);
    }

    double volume() const {
        double v = 1.0;
        for (std::size_t a = 0; a < lo.size(); ++a) v *= extent(a);
        return v;
    }

    // Coordinate-wise reflection into the box; folds as often as needed.
    void reflect(std::span<double> x) const {
        for (std::size_t a = 0; a < lo.size(); ++a) {
            double v = x[a];
            if (!std::isfinite(v)) continue;  // caller detects blow-ups
            while (v < lo[a] || v > hi[a]) {
                if (v < lo[a]) v = 2.0 * lo[a] - v;
                if (v > hi[a]) v = 2.0 * hi[a] - v;
            }
            x[a] = v;
        }
    }

    bool operator==(const Box& o) const { return lo == o.lo && hi == o.hi; }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace moserflow
