#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "moserflow/core.hpp"
#include "moserflow/num_io.hpp"
#include "moserflow/rng.hpp"

namespace moserflow {

// ---------------------------------------------------------------------------
// Uniform cell-vertex grid over an axis-aligned box. Nodes on axis a sit at
// lo + k*h with h = extent/(n-1), so the boundary carries nodes. Flattened
// storage is row-major with the last axis fastest.
//
// The module-wide quadrature rule is the trapezoid rule: node weight 1
// inside, 1/2 on each boundary face (products across axes), times the cell
// volume. Densities are normalized against this rule, so their quadrature is
// exactly one by construction, and differences of normalized densities have
// exactly zero quadrature - which is the discrete Neumann compatibility
// condition the Poisson solver needs.
// ---------------------------------------------------------------------------

struct UniformGrid {
    Box box;
    std::vector<std::size_t> shape;

    UniformGrid() = default;
    UniformGrid(Box b, std::vector<std::size_t> n) : box(std::move(b)), shape(std::move(n)) {
        if (box.dim() != shape.size())
            throw std::invalid_argument("UniformGrid: box/shape dimension mismatch");
        for (std::size_t s : shape)
            if (s < 2) throw std::invalid_argument("UniformGrid: need at least 2 nodes per axis");
    }

    std::size_t dim() const { return shape.size(); }

    std::size_t size() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }

    double spacing(std::size_t axis) const {
        return box.extent(axis) / static_cast<double>(shape[axis] - 1);
    }

    double cell_volume() const {
        double v = 1.0;
        for (std::size_t a = 0; a < dim(); ++a) v *= spacing(a);
        return v;
    }

    double coord(std::size_t axis, std::size_t k) const {
        return box.lo[axis] + spacing(axis) * static_cast<double>(k);
    }

    std::size_t flat(std::span<const std::size_t> idx) const {
        std::size_t f = 0;
        for (std::size_t a = 0; a < dim(); ++a) f = f * shape[a] + idx[a];
        return f;
    }

    void unflat(std::size_t f, std::span<std::size_t> idx) const {
        for (std::size_t a = dim(); a-- > 0;) {
            idx[a] = f % shape[a];
            f /= shape[a];
        }
    }

    void node(std::size_t f, std::span<double> x) const {
        std::vector<std::size_t> idx(dim());
        unflat(f, idx);
        for (std::size_t a = 0; a < dim(); ++a) x[a] = coord(a, idx[a]);
    }

    // Trapezoid weight of a node (without the cell-volume factor).
    double node_weight(std::span<const std::size_t> idx) const {
        double w = 1.0;
        for (std::size_t a = 0; a < dim(); ++a)
            if (idx[a] == 0 || idx[a] == shape[a] - 1) w *= 0.5;
        return w;
    }

    Vec node_weights() const {
        Vec w(size(), 1.0);
        std::vector<std::size_t> idx(dim());
        for (std::size_t f = 0; f < size(); ++f) {
            unflat(f, idx);
            w[f] = node_weight(idx);
        }
        return w;
    }

    // Trapezoid quadrature of node values over the box.
    double quadrature(std::span<const double> values) const {
        const Vec w = node_weights();
        double s = 0.0;
        for (std::size_t f = 0; f < size(); ++f) s += w[f] * values[f];
        return s * cell_volume();
    }

    bool operator==(const UniformGrid& o) const { return box == o.box && shape == o.shape; }

    // Multilinear interpolation of node values; exact at nodes.
    double interpolate(std::span<const double> values, std::span<const double> x) const {
        if (x.size() != dim())
            throw std::invalid_argument("UniformGrid::interpolate: dimension mismatch");
        if (!box.contains(x))
            throw out_of_domain_error("UniformGrid::interpolate: point outside domain");
        const std::size_t d = dim();
        std::vector<std::size_t> base(d);
        std::vector<double> frac(d);
        for (std::size_t a = 0; a < d; ++a) {
            const double h = spacing(a);
            double t = (x[a] - box.lo[a]) / h;
            std::size_t k = static_cast<std::size_t>(t);
            if (k >= shape[a] - 1) k = shape[a] - 2;  // x exactly on the upper face
            base[a] = k;
            frac[a] = t - static_cast<double>(k);
        }
        double acc = 0.0;
        const std::size_t corners = std::size_t{1} << d;
        std::vector<std::size_t> idx(d);
        for (std::size_t c = 0; c < corners; ++c) {
            double w = 1.0;
            for (std::size_t a = 0; a < d; ++a) {
                const bool hi = (c >> a) & 1u;
                idx[a] = base[a] + (hi ? 1 : 0);
                w *= hi ? frac[a] : (1.0 - frac[a]);
            }
            if (w != 0.0) acc += w * values[flat(idx)];
        }
        return acc;
    }
};

inline UniformGrid make_grid(const Box& box, std::size_t nodes_per_axis) {
    return UniformGrid(box, std::vector<std::size_t>(box.dim(), nodes_per_axis));
}

// ---------------------------------------------------------------------------
// Probability density tabulated on a grid.
// ---------------------------------------------------------------------------

struct GridDensity {
    UniformGrid grid;
    Vec values;          // nonnegative, sum * cell_volume == 1
    double beta = 1.0;   // inverse temperature where applicable
    double log_z = 0.0;  // log partition function of the unnormalized factor

    double cell_volume() const { return grid.cell_volume(); }
    double z() const { return std::exp(log_z); }

    double at(std::span<const double> x) const { return grid.interpolate(values, x); }

    double min_value() const { return *std::min_element(values.begin(), values.end()); }

    void validate(double tol = 1e-10) const {
        if (values.size() != grid.size())
            throw std::invalid_argument("GridDensity: value count does not match grid");
        for (double v : values)
            if (!(v >= 0.0)) throw std::invalid_argument("GridDensity: negative value");
        if (std::abs(grid.quadrature(values) - 1.0) > tol)
            throw std::invalid_argument("GridDensity: not normalized");
    }

    // Marginal along one axis: trapezoid integration over the other axes.
    GridDensity marginal(std::size_t axis) const {
        const std::size_t d = grid.dim();
        if (axis >= d) throw std::invalid_argument("GridDensity::marginal: bad axis");
        GridDensity out;
        out.grid = UniformGrid(Box({grid.box.lo[axis]}, {grid.box.hi[axis]}), {grid.shape[axis]});
        out.values.assign(grid.shape[axis], 0.0);
        out.beta = beta;
        out.log_z = log_z;
        double hother = 1.0;
        for (std::size_t a = 0; a < d; ++a)
            if (a != axis) hother *= grid.spacing(a);
        std::vector<std::size_t> idx(d);
        for (std::size_t f = 0; f < grid.size(); ++f) {
            grid.unflat(f, idx);
            double w = 1.0;
            for (std::size_t a = 0; a < d; ++a)
                if (a != axis && (idx[a] == 0 || idx[a] == grid.shape[a] - 1)) w *= 0.5;
            out.values[idx[axis]] += w * values[f] * hother;
        }
        return out;
    }
};

// Boltzmann density e^{-beta U}/Z on a grid. Z is accumulated in log-sum-exp
// form over the node energies, so only an everywhere-infinite energy (or a
// beta outside double range) can make it degenerate.
template <class EnergyFn>
GridDensity boltzmann_grid(EnergyFn&& energy, double beta, const UniformGrid& grid) {
    if (!(beta > 0.0)) throw std::invalid_argument("boltzmann_grid: beta must be positive");
    GridDensity out;
    out.grid = grid;
    out.beta = beta;
    const std::size_t n = grid.size();
    Vec log_f(n);
    double m = -kInf;
    Vec x(grid.dim());
    for (std::size_t f = 0; f < n; ++f) {
        grid.node(f, x);
        const double u = energy(std::span<const double>(x));
        const double lf = std::isinf(u) && u > 0 ? -kInf : -beta * u;
        log_f[f] = lf;
        m = std::max(m, lf);
    }
    if (!std::isfinite(m))
        throw overflow_domain_error("boltzmann_grid: partition function underflows to zero");
    const Vec w = grid.node_weights();
    double s = 0.0;
    for (std::size_t f = 0; f < n; ++f) s += w[f] * std::exp(log_f[f] - m);
    out.log_z = m + std::log(s) + std::log(grid.cell_volume());
    out.values.resize(n);
    for (std::size_t f = 0; f < n; ++f) out.values[f] = std::exp(log_f[f] - out.log_z);
    return out;
}

// Normalizes arbitrary nonnegative node values into a density.
template <class Fn>
GridDensity density_from_function(Fn&& f, const UniformGrid& grid) {
    GridDensity out;
    out.grid = grid;
    out.values.resize(grid.size());
    Vec x(grid.dim());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid.node(i, x);
        const double v = f(std::span<const double>(x));
        if (!(v >= 0.0))
            throw std::invalid_argument("density_from_function: negative or NaN value");
        out.values[i] = v;
    }
    const double z = grid.quadrature(out.values);
    if (!(z > 0.0)) throw overflow_domain_error("density_from_function: zero total mass");
    for (auto& v : out.values) v /= z;
    out.log_z = std::log(z);
    return out;
}

inline double l1_distance(const GridDensity& a, const GridDensity& b) {
    if (!(a.grid == b.grid))
        throw std::invalid_argument("l1_distance: grids differ");
    Vec diff(a.values.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = std::abs(a.values[i] - b.values[i]);
    return a.grid.quadrature(diff);
}

// Draws points from the piecewise-constant density carried by the grid:
// categorical over nodes by trapezoid mass, then uniform jitter inside the
// node cell (half cells at the boundary).
inline Vec sample_grid_density(const GridDensity& rho, std::size_t n, std::uint64_t seed) {
    const std::size_t nn = rho.values.size();
    const Vec w = rho.grid.node_weights();
    Vec cdf(nn);
    double acc = 0.0;
    for (std::size_t i = 0; i < nn; ++i) {
        acc += w[i] * rho.values[i];
        cdf[i] = acc;
    }
    const double total = acc;
    const std::size_t d = rho.grid.dim();
    Rng rng(seed);
    Vec out(n * d);
    std::vector<std::size_t> idx(d);
    for (std::size_t k = 0; k < n; ++k) {
        const double u = rng.uniform() * total;
        const std::size_t cell =
            static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        rho.grid.unflat(std::min(cell, nn - 1), idx);
        for (std::size_t a = 0; a < d; ++a) {
            const double h = rho.grid.spacing(a);
            const double c = rho.grid.coord(a, idx[a]);
            const double j = rng.uniform();
            double x;
            if (idx[a] == 0) x = c + 0.5 * j * h;
            else if (idx[a] == rho.grid.shape[a] - 1) x = c - 0.5 * j * h;
            else x = c + (j - 0.5) * h;
            out[k * d + a] = x;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Text table format shared by GridDensity and PotentialField ("moserflow-grid
// v1"): a whitespace-separated header (axes, scalars, free-form meta), then
// named blocks of one value per line in row-major order, last axis fastest.
// All numbers round-trip bit-exactly.
// ---------------------------------------------------------------------------

struct GridTable {
    UniformGrid grid;
    std::map<std::string, double> scalars;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Vec>> blocks;
};

inline void write_grid_table(std::ostream& os, const GridTable& t) {
    os << "moserflow-grid v1\n";
    os << "dim " << t.grid.dim() << "\n";
    for (std::size_t a = 0; a < t.grid.dim(); ++a)
        os << "axis " << format_double(t.grid.box.lo[a]) << " " << format_double(t.grid.box.hi[a])
           << " " << t.grid.shape[a] << "\n";
    for (const auto& [k, v] : t.scalars) os << "scalar " << k << " " << format_double(v) << "\n";
    for (const auto& [k, v] : t.meta) os << "meta " << k << " " << v << "\n";
    for (const auto& [name, vals] : t.blocks) {
        os << "block " << name << " " << vals.size() << "\n";
        for (double v : vals) os << format_double(v) << "\n";
    }
}

inline GridTable read_grid_table(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || trim(line) != "moserflow-grid v1")
        throw std::invalid_argument("read_grid_table: missing header");
    GridTable t;
    Vec lo, hi;
    std::vector<std::size_t> shape;
    std::size_t dim = 0;
    while (std::getline(is, line)) {
        const auto s = trim(line);
        if (s.empty()) continue;
        const auto tok = split(s, ' ');
        if (tok[0] == "dim") {
            dim = static_cast<std::size_t>(parse_int(tok.at(1)));
        } else if (tok[0] == "axis") {
            lo.push_back(parse_double(tok.at(1)));
            hi.push_back(parse_double(tok.at(2)));
            shape.push_back(static_cast<std::size_t>(parse_int(tok.at(3))));
        } else if (tok[0] == "scalar") {
            t.scalars[std::string(tok.at(1))] = parse_double(tok.at(2));
        } else if (tok[0] == "meta") {
            std::string v;
            for (std::size_t i = 2; i < tok.size(); ++i) {
                if (i > 2) v += ' ';
                v += std::string(tok[i]);
            }
            t.meta[std::string(tok.at(1))] = v;
        } else if (tok[0] == "block") {
            const std::string name(tok.at(1));
            const std::size_t n = static_cast<std::size_t>(parse_int(tok.at(2)));
            Vec vals(n);
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::getline(is, line))
                    throw std::invalid_argument("read_grid_table: truncated block " + name);
                vals[i] = parse_double(trim(line));
            }
            t.blocks.emplace_back(name, std::move(vals));
        } else {
            throw std::invalid_argument("read_grid_table: unknown directive '" +
                                        std::string(tok[0]) + "'");
        }
    }
    if (shape.size() != dim)
        throw std::invalid_argument("read_grid_table: axis count does not match dim");
    t.grid = UniformGrid(Box(std::move(lo), std::move(hi)), std::move(shape));
    return t;
}

inline void write_density(std::ostream& os, const GridDensity& rho) {
    GridTable t;
    t.grid = rho.grid;
    t.scalars["beta"] = rho.beta;
    t.scalars["log_z"] = rho.log_z;
    t.blocks.emplace_back("values", rho.values);
    write_grid_table(os, t);
}

inline GridDensity read_density(std::istream& is) {
    GridTable t = read_grid_table(is);
    GridDensity rho;
    rho.grid = t.grid;
    rho.beta = t.scalars.count("beta") ? t.scalars["beta"] : 1.0;
    rho.log_z = t.scalars.count("log_z") ? t.scalars["log_z"] : 0.0;
    for (auto& [name, vals] : t.blocks)
        if (name == "values") rho.values = std::move(vals);
    if (rho.values.size() != rho.grid.size())
        throw std::invalid_argument("read_density: missing or malformed values block");
    return rho;
}

}  // namespace moserflow
