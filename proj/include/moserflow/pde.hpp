#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "moserflow/core.hpp"
#include "moserflow/grid.hpp"

namespace moserflow {

// -Delta u = rhs on the grid box with homogeneous Neumann data. The right
// hand side must integrate to zero (solvability); the tolerance is on the
// equal-weight node quadrature.
struct NeumannProblem {
    UniformGrid grid;
    Vec rhs;
    double compatibility_tol = 1e-8;

    double rhs_integral() const { return grid.quadrature(rhs); }

    void validate() const {
        if (rhs.size() != grid.size())
            throw std::invalid_argument("NeumannProblem: rhs size does not match grid");
        const double integral = rhs_integral();
        if (std::abs(integral) > compatibility_tol)
            throw std::invalid_argument(
                "NeumannProblem: rhs integral " + format_double(integral) +
                " violates the Neumann compatibility condition (tol " +
                format_double(compatibility_tol) + ")");
    }
};

// Solved potential u (mean-zero over nodes) together with its node gradient.
// The normal component of grad_u is exactly zero on the boundary, matching
// the mirrored-ghost discretization.
struct PotentialField {
    UniformGrid grid;
    Vec u;
    std::vector<Vec> grad_u;  // one array per axis
    double residual_norm = 0.0;  // final relative residual
    std::size_t iterations = 0;

    Vec sample_gradient(std::span<const double> x) const {
        if (x.size() != grid.dim())
            throw std::invalid_argument("PotentialField::sample_gradient: dimension mismatch");
        if (!grid.box.contains(x))
            throw out_of_domain_error("PotentialField::sample_gradient: point outside domain");
        Vec g(grid.dim());
        for (std::size_t a = 0; a < grid.dim(); ++a) g[a] = grid.interpolate(grad_u[a], x);
        return g;
    }
};

namespace detail {

// -Laplacian with ghost nodes mirrored across the boundary: the missing
// neighbor of a boundary node is its inside neighbor, which makes the
// operator self-adjoint in the trapezoid-weighted inner product and gives a
// second-order homogeneous Neumann closure.
class NeumannLaplacian {
  public:
    explicit NeumannLaplacian(const UniformGrid& grid) : grid_(grid) {
        const std::size_t d = grid.dim();
        strides_.assign(d, 1);
        for (std::size_t a = d; a-- > 1;) strides_[a - 1] = strides_[a] * grid.shape[a];
        inv_h2_.resize(d);
        for (std::size_t a = 0; a < d; ++a) inv_h2_[a] = 1.0 / (grid.spacing(a) * grid.spacing(a));
        weights_.assign(grid.size(), 1.0);
        std::vector<std::size_t> idx(d);
        for (std::size_t f = 0; f < grid.size(); ++f) {
            grid.unflat(f, idx);
            for (std::size_t a = 0; a < d; ++a)
                if (idx[a] == 0 || idx[a] == grid.shape[a] - 1) weights_[f] *= 0.5;
        }
        weight_total_ = 0.0;
        for (double w : weights_) weight_total_ += w;
    }

    void apply(const Vec& u, Vec& out) const {
        const std::size_t d = grid_.dim();
        std::vector<std::size_t> idx(d, 0);
        for (std::size_t f = 0; f < u.size(); ++f) {
            double acc = 0.0;
            for (std::size_t a = 0; a < d; ++a) {
                const std::size_t k = idx[a];
                const std::size_t dn = (k > 0) ? f - strides_[a] : f + strides_[a];
                const std::size_t up = (k + 1 < grid_.shape[a]) ? f + strides_[a] : f - strides_[a];
                acc += (2.0 * u[f] - u[dn] - u[up]) * inv_h2_[a];
            }
            out[f] = acc;
            for (std::size_t a = d; a-- > 0;) {  // odometer increment
                if (++idx[a] < grid_.shape[a]) break;
                idx[a] = 0;
            }
        }
    }

    double wdot(const Vec& a, const Vec& b) const {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += weights_[i] * a[i] * b[i];
        return s;
    }

    void project_mean_zero(Vec& v) const {
        double m = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) m += weights_[i] * v[i];
        m /= weight_total_;
        for (auto& x : v) x -= m;
    }

  private:
    UniformGrid grid_;
    std::vector<std::size_t> strides_;
    Vec inv_h2_;
    Vec weights_;
    double weight_total_ = 0.0;
};

}  // namespace detail

// Conjugate gradient on the mean-zero subspace; the rhs is projected onto the
// discrete range first, so a constant shift of rhs does not change the
// answer. The returned u is gauged to zero node mean.
inline PotentialField solve_neumann(const NeumannProblem& p, double tol = 1e-10,
                                    std::size_t max_iter = 50000) {
    p.validate();
    if (!(tol > 0.0)) throw std::invalid_argument("solve_neumann: tol must be positive");
    const std::size_t n = p.grid.size();
    detail::NeumannLaplacian op(p.grid);

    Vec f = p.rhs;
    op.project_mean_zero(f);

    PotentialField field;
    field.grid = p.grid;
    field.u.assign(n, 0.0);

    const double fnorm = std::sqrt(op.wdot(f, f));
    std::size_t iter = 0;
    double rel = 0.0;
    if (fnorm > 0.0) {
        Vec r = f, z(n), q(n);
        Vec pdir = r;
        double rr = op.wdot(r, r);
        for (iter = 0; iter < max_iter; ++iter) {
            rel = std::sqrt(rr) / fnorm;
            if (rel <= tol) break;
            op.apply(pdir, q);
            const double alpha = rr / op.wdot(pdir, q);
            for (std::size_t i = 0; i < n; ++i) field.u[i] += alpha * pdir[i];
            for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * q[i];
            op.project_mean_zero(r);
            const double rr_new = op.wdot(r, r);
            const double beta = rr_new / rr;
            rr = rr_new;
            for (std::size_t i = 0; i < n; ++i) pdir[i] = r[i] + beta * pdir[i];
        }
        rel = std::sqrt(rr) / fnorm;
        if (rel > tol)
            throw convergence_error("solve_neumann: CG did not reach tol " + format_double(tol) +
                                        " in " + std::to_string(max_iter) +
                                        " iterations (residual " + format_double(rel) + ")",
                                    rel);
    }
    field.residual_norm = rel;
    field.iterations = iter;

    // Plain node-mean gauge.
    double mean = 0.0;
    for (double v : field.u) mean += v;
    mean /= static_cast<double>(n);
    for (auto& v : field.u) v -= mean;

    // Node gradient: central differences inside, exact zero for the normal
    // component on the boundary (mirrored ghost).
    const std::size_t d = p.grid.dim();
    std::vector<std::size_t> strides(d, 1);
    for (std::size_t a = d; a-- > 1;) strides[a - 1] = strides[a] * p.grid.shape[a];
    field.grad_u.assign(d, Vec(n, 0.0));
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t fidx = 0; fidx < n; ++fidx) {
        for (std::size_t a = 0; a < d; ++a) {
            const std::size_t k = idx[a];
            if (k == 0 || k + 1 == p.grid.shape[a]) {
                field.grad_u[a][fidx] = 0.0;
            } else {
                field.grad_u[a][fidx] =
                    (field.u[fidx + strides[a]] - field.u[fidx - strides[a]]) /
                    (2.0 * p.grid.spacing(a));
            }
        }
        for (std::size_t a = d; a-- > 0;) {
            if (++idx[a] < p.grid.shape[a]) break;
            idx[a] = 0;
        }
    }
    return field;
}

inline Vec sample_gradient(const PotentialField& field, std::span<const double> x) {
    return field.sample_gradient(x);
}

inline void write_field(std::ostream& os, const PotentialField& f) {
    GridTable t;
    t.grid = f.grid;
    t.scalars["residual_norm"] = f.residual_norm;
    t.scalars["iterations"] = static_cast<double>(f.iterations);
    t.meta["solver"] = "cg-neumann";
    t.blocks.emplace_back("u", f.u);
    for (std::size_t a = 0; a < f.grad_u.size(); ++a)
        t.blocks.emplace_back("grad" + std::to_string(a), f.grad_u[a]);
    write_grid_table(os, t);
}

inline PotentialField read_field(std::istream& is) {
    GridTable t = read_grid_table(is);
    PotentialField f;
    f.grid = t.grid;
    f.residual_norm = t.scalars.count("residual_norm") ? t.scalars["residual_norm"] : 0.0;
    f.iterations = t.scalars.count("iterations")
                       ? static_cast<std::size_t>(t.scalars["iterations"])
                       : 0;
    f.grad_u.assign(f.grid.dim(), Vec());
    for (auto& [name, vals] : t.blocks) {
        if (name == "u") f.u = std::move(vals);
        else if (name.rfind("grad", 0) == 0)
            f.grad_u.at(static_cast<std::size_t>(parse_int(name.substr(4)))) = std::move(vals);
    }
    if (f.u.size() != f.grid.size())
        throw std::invalid_argument("read_field: missing or malformed u block");
    for (const auto& g : f.grad_u)
        if (g.size() != f.grid.size())
            throw std::invalid_argument("read_field: missing gradient block");
    return f;
}

}  // namespace moserflow
