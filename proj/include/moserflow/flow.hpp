#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "moserflow/core.hpp"
#include "moserflow/rng.hpp"
#include "moserflow/sample_set.hpp"

namespace moserflow {

// ---------------------------------------------------------------------------
// RealNVP coupling flow. Each layer splits coordinates by a binary mask into
// a pass-through partition (mask = 1) and an active partition, and applies
//
//   z_a = x_a
//   z_b = x_b * exp(s(x_a)) + t(x_a)
//
// so the inverse is explicit and the Jacobian log-determinant is the plain
// sum of the s outputs. s and t are one-hidden-layer tanh perceptrons; the
// scale output is soft-clamped, s = s_clamp * tanh(s_raw / s_clamp), which
// keeps exp(s) bounded without breaking exactness of inverse or log-det.
//
// Two subnet wirings are supported: partition_input feeds only x_a (d_a
// inputs, d_b outputs) while masked_full_input feeds the masked full vector
// (d inputs, d outputs, active entries used).
// ---------------------------------------------------------------------------

enum class SubnetConvention { partition_input, masked_full_input };
enum class PriorKind { standard_normal, uniform_box };

inline const char* to_string(SubnetConvention c) {
    return c == SubnetConvention::partition_input ? "partition_input" : "masked_full_input";
}

inline SubnetConvention subnet_convention_from_string(std::string_view s) {
    if (s == "partition_input") return SubnetConvention::partition_input;
    if (s == "masked_full_input") return SubnetConvention::masked_full_input;
    throw std::invalid_argument("unknown subnet convention '" + std::string(s) + "'");
}

struct PriorSpec {
    PriorKind kind = PriorKind::standard_normal;
    Box box;  // uniform_box only

    double log_density(std::span<const double> z) const {
        if (kind == PriorKind::standard_normal) {
            double s = 0.0;
            for (double v : z) s += v * v;
            return -0.5 * s - 0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
        }
        return box.contains(z) ? -std::log(box.volume()) : -kInf;
    }

    // d log rho0 / dz; zero almost everywhere for the uniform prior.
    void grad_log_density(std::span<const double> z, std::span<double> out) const {
        if (kind == PriorKind::standard_normal) {
            for (std::size_t i = 0; i < z.size(); ++i) out[i] = -z[i];
        } else {
            std::fill(out.begin(), out.end(), 0.0);
        }
    }

    void sample(Rng& rng, std::span<double> out) const {
        if (kind == PriorKind::standard_normal) {
            rng.fill_normal(out);
        } else {
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = rng.uniform(box.lo[i], box.hi[i]);
        }
    }
};

// One-hidden-layer perceptron y = W2 tanh(W1 u + b1) + b2.
struct SubnetParams {
    std::size_t n_in = 0, n_hidden = 0, n_out = 0;
    Vec w1, b1, w2, b2;  // w1: n_hidden x n_in, w2: n_out x n_hidden, row-major

    void resize(std::size_t in, std::size_t hidden, std::size_t out) {
        n_in = in;
        n_hidden = hidden;
        n_out = out;
        w1.assign(in * hidden, 0.0);
        b1.assign(hidden, 0.0);
        w2.assign(hidden * out, 0.0);
        b2.assign(out, 0.0);
    }

    std::size_t count() const { return n_in * n_hidden + n_hidden + n_hidden * n_out + n_out; }

    void eval(std::span<const double> u, std::span<double> hidden, std::span<double> y) const {
        for (std::size_t h = 0; h < n_hidden; ++h) {
            double acc = b1[h];
            const double* row = w1.data() + h * n_in;
            for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * u[i];
            hidden[h] = std::tanh(acc);
        }
        for (std::size_t o = 0; o < n_out; ++o) {
            double acc = b2[o];
            const double* row = w2.data() + o * n_hidden;
            for (std::size_t h = 0; h < n_hidden; ++h) acc += row[h] * hidden[h];
            y[o] = acc;
        }
    }

    // Accumulates parameter gradients and the input cotangent for output
    // cotangent gy. hidden must hold the tanh activations from eval.
    void backward(std::span<const double> u, std::span<const double> hidden,
                  std::span<const double> gy, SubnetParams& grads,
                  std::span<double> gu_accum) const {
        thread_local Vec gp;
        gp.assign(n_hidden, 0.0);
        for (std::size_t o = 0; o < n_out; ++o) {
            const double g = gy[o];
            if (g == 0.0) continue;
            grads.b2[o] += g;
            double* grow = grads.w2.data() + o * n_hidden;
            const double* row = w2.data() + o * n_hidden;
            for (std::size_t h = 0; h < n_hidden; ++h) {
                grow[h] += g * hidden[h];
                gp[h] += g * row[h];
            }
        }
        for (std::size_t h = 0; h < n_hidden; ++h) {
            const double g = gp[h] * (1.0 - hidden[h] * hidden[h]);
            if (g == 0.0) continue;
            grads.b1[h] += g;
            double* grow = grads.w1.data() + h * n_in;
            const double* row = w1.data() + h * n_in;
            for (std::size_t i = 0; i < n_in; ++i) {
                grow[i] += g * u[i];
                gu_accum[i] += g * row[i];
            }
        }
    }
};

struct CouplingLayer {
    std::vector<std::uint8_t> mask;  // 1 = pass-through partition
    SubnetConvention convention = SubnetConvention::masked_full_input;
    double s_clamp = 5.0;
    SubnetParams s_net, t_net;
    std::vector<std::size_t> idx_a, idx_b;  // derived from mask

    void finalize() {
        idx_a.clear();
        idx_b.clear();
        for (std::size_t i = 0; i < mask.size(); ++i)
            (mask[i] ? idx_a : idx_b).push_back(i);
        if (idx_a.empty() || idx_b.empty())
            throw std::invalid_argument("CouplingLayer: mask must have both 0 and 1 entries");
        if (!(s_clamp > 0.0))
            throw std::invalid_argument("CouplingLayer: s_clamp must be positive");
        const std::size_t d = mask.size();
        const std::size_t in = convention == SubnetConvention::partition_input ? idx_a.size() : d;
        const std::size_t out = convention == SubnetConvention::partition_input ? idx_b.size() : d;
        if (s_net.n_in != in || s_net.n_out != out || t_net.n_in != in || t_net.n_out != out)
            throw std::invalid_argument("CouplingLayer: subnet shape does not match convention");
    }

    std::size_t subnet_input_size() const { return s_net.n_in; }

    void gather_input(std::span<const double> x, std::span<double> u) const {
        if (convention == SubnetConvention::partition_input) {
            for (std::size_t j = 0; j < idx_a.size(); ++j) u[j] = x[idx_a[j]];
        } else {
            for (std::size_t i = 0; i < x.size(); ++i) u[i] = mask[i] ? x[i] : 0.0;
        }
    }

    // Slot of coordinate idx_b[jb] in the subnet output vector.
    std::size_t out_slot(std::size_t jb) const {
        return convention == SubnetConvention::partition_input ? jb : idx_b[jb];
    }

    double clamp_s(double raw) const { return s_clamp * std::tanh(raw / s_clamp); }
    double clamp_s_deriv(double clamped) const {
        const double r = clamped / s_clamp;
        return 1.0 - r * r;
    }
};

// Per-coordinate affine standardization stored with the model; applied on the
// data side of the stack (training whitens, sampling un-whitens).
struct Whitening {
    Vec mean, scale;

    bool identity() const { return mean.empty(); }

    void validate(std::size_t dim) const {
        if (identity()) return;
        if (mean.size() != dim || scale.size() != dim)
            throw std::invalid_argument("Whitening: dimension mismatch");
        for (double s : scale)
            if (!(s > 0.0)) throw std::invalid_argument("Whitening: scales must be positive");
    }

    double log_det() const {
        double s = 0.0;
        for (double v : scale) s += std::log(v);
        return s;
    }
};

struct FlowModel {
    std::size_t dim = 0;
    std::vector<CouplingLayer> layers;
    PriorSpec prior;
    Whitening whiten;

    void validate() const {
        if (dim < 2) throw std::invalid_argument("FlowModel: dim must be >= 2");
        for (const auto& l : layers) {
            if (l.mask.size() != dim) throw std::invalid_argument("FlowModel: mask size != dim");
            if (l.idx_a.empty() || l.idx_b.empty())
                throw std::invalid_argument("FlowModel: layer not finalized");
        }
        for (std::size_t k = 1; k < layers.size(); ++k)
            if (layers[k].mask == layers[k - 1].mask)
                throw std::invalid_argument("FlowModel: consecutive layers share a mask");
        whiten.validate(dim);
        if (prior.kind == PriorKind::uniform_box && prior.box.dim() != dim)
            throw std::invalid_argument("FlowModel: prior box dimension mismatch");
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.s_net.count() + l.t_net.count();
        return n;
    }

    // Prior-to-data pass; returns log|det J|. Exact identity when all
    // parameters are zero.
    double forward(std::span<const double> x, std::span<double> z) const {
        std::copy(x.begin(), x.end(), z.begin());
        thread_local Vec u, hidden, s_raw, t_out;
        double logdet = 0.0;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& l = layers[k];
            u.resize(l.s_net.n_in);
            hidden.resize(std::max(l.s_net.n_hidden, l.t_net.n_hidden));
            s_raw.resize(l.s_net.n_out);
            t_out.resize(l.t_net.n_out);
            l.gather_input(z, u);
            l.s_net.eval(u, hidden, s_raw);
            l.t_net.eval(u, hidden, t_out);
            for (std::size_t jb = 0; jb < l.idx_b.size(); ++jb) {
                const std::size_t slot = l.out_slot(jb);
                const double sc = l.clamp_s(s_raw[slot]);
                const std::size_t j = l.idx_b[jb];
                z[j] = z[j] * std::exp(sc) + t_out[slot];
                logdet += sc;
            }
            if (!all_finite(z))
                throw numerical_error("FlowModel::forward: non-finite value after layer " +
                                      std::to_string(k));
        }
        return logdet;
    }

    // Data-to-prior pass; returns log|det J| of the inverse map, i.e. the
    // negative of forward's log-det at the pulled-back point.
    double inverse(std::span<const double> z, std::span<double> x) const {
        std::copy(z.begin(), z.end(), x.begin());
        thread_local Vec u, hidden, s_raw, t_out;
        double logdet_inv = 0.0;
        for (std::size_t k = layers.size(); k-- > 0;) {
            const auto& l = layers[k];
            u.resize(l.s_net.n_in);
            hidden.resize(std::max(l.s_net.n_hidden, l.t_net.n_hidden));
            s_raw.resize(l.s_net.n_out);
            t_out.resize(l.t_net.n_out);
            l.gather_input(x, u);
            l.s_net.eval(u, hidden, s_raw);
            l.t_net.eval(u, hidden, t_out);
            for (std::size_t jb = 0; jb < l.idx_b.size(); ++jb) {
                const std::size_t slot = l.out_slot(jb);
                const double sc = l.clamp_s(s_raw[slot]);
                const std::size_t j = l.idx_b[jb];
                x[j] = (x[j] - t_out[slot]) * std::exp(-sc);
                logdet_inv -= sc;
            }
            if (!all_finite(x))
                throw numerical_error("FlowModel::inverse: non-finite value after layer " +
                                      std::to_string(k));
        }
        return logdet_inv;
    }

    // Exact model log-density of a data-space point (change of variables
    // through the whitening transform and the coupling stack).
    double log_prob(std::span<const double> x_data) const {
        thread_local Vec y, x0;
        y.assign(x_data.begin(), x_data.end());
        if (!whiten.identity())
            for (std::size_t i = 0; i < dim; ++i) y[i] = (y[i] - whiten.mean[i]) / whiten.scale[i];
        x0.resize(dim);
        const double logdet_inv = inverse(y, x0);
        const double base = prior.log_density(x0);
        if (base == -kInf) return -kInf;
        return base + logdet_inv - (whiten.identity() ? 0.0 : whiten.log_det());
    }

    Vec pack_params() const {
        Vec out;
        out.reserve(param_count());
        for (const auto& l : layers)
            for (const Vec* v : {&l.s_net.w1, &l.s_net.b1, &l.s_net.w2, &l.s_net.b2, &l.t_net.w1,
                                 &l.t_net.b1, &l.t_net.w2, &l.t_net.b2})
                out.insert(out.end(), v->begin(), v->end());
        return out;
    }

    void unpack_params(std::span<const double> flat) {
        if (flat.size() != param_count())
            throw std::invalid_argument("FlowModel::unpack_params: size mismatch");
        std::size_t off = 0;
        for (auto& l : layers)
            for (Vec* v : {&l.s_net.w1, &l.s_net.b1, &l.s_net.w2, &l.s_net.b2, &l.t_net.w1,
                           &l.t_net.b1, &l.t_net.w2, &l.t_net.b2}) {
                std::copy(flat.begin() + off, flat.begin() + off + v->size(), v->begin());
                off += v->size();
            }
    }
};

// Closed-form parameter count for the standard alternating-mask architecture.
inline std::size_t param_count(std::size_t n_layers, std::size_t hidden, std::size_t dim,
                               SubnetConvention convention) {
    std::size_t total = 0;
    for (std::size_t k = 0; k < n_layers; ++k) {
        std::size_t d_a = 0;
        for (std::size_t i = 0; i < dim; ++i)
            if ((i + k) % 2 == 0) ++d_a;
        const std::size_t d_b = dim - d_a;
        const std::size_t n_in = convention == SubnetConvention::partition_input ? d_a : dim;
        const std::size_t n_out = convention == SubnetConvention::partition_input ? d_b : dim;
        total += 2 * (n_in * hidden + hidden + hidden * n_out + n_out);
    }
    return total;
}

// Fresh model with alternating masks. Output layers start at zero so the
// flow is the identity map at initialization; hidden weights are uniform
// +- init_scale * sqrt(6 / (n_in + hidden)).
inline FlowModel make_flow_model(std::size_t dim, std::size_t n_layers, std::size_t hidden,
                                 SubnetConvention convention, PriorSpec prior, std::uint64_t seed,
                                 double s_clamp = 5.0, double init_scale = 1.0) {
    if (dim < 2) throw std::invalid_argument("make_flow_model: dim must be >= 2");
    if (n_layers < 1) throw std::invalid_argument("make_flow_model: need at least one layer");
    FlowModel m;
    m.dim = dim;
    m.prior = std::move(prior);
    Rng rng(seed);
    for (std::size_t k = 0; k < n_layers; ++k) {
        CouplingLayer l;
        l.convention = convention;
        l.s_clamp = s_clamp;
        l.mask.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) l.mask[i] = ((i + k) % 2 == 0) ? 1 : 0;
        std::size_t d_a = 0;
        for (auto b : l.mask) d_a += b;
        const std::size_t n_in = convention == SubnetConvention::partition_input ? d_a : dim;
        const std::size_t n_out =
            convention == SubnetConvention::partition_input ? dim - d_a : dim;
        l.s_net.resize(n_in, hidden, n_out);
        l.t_net.resize(n_in, hidden, n_out);
        const double r = init_scale * std::sqrt(6.0 / static_cast<double>(n_in + hidden));
        for (auto* net : {&l.s_net, &l.t_net})
            for (auto& w : net->w1) w = rng.uniform(-r, r);
        l.finalize();
        m.layers.push_back(std::move(l));
    }
    m.validate();
    return m;
}

inline SampleSet sample(const FlowModel& model, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    Rng rng(seed);
    SampleSet out(model.dim, Provenance::flow, seed);
    out.data.reserve(n * model.dim);
    Vec z(model.dim), x(model.dim);
    for (std::size_t i = 0; i < n; ++i) {
        model.prior.sample(rng, z);
        model.forward(z, x);
        if (!model.whiten.identity())
            for (std::size_t a = 0; a < model.dim; ++a)
                x[a] = x[a] * model.whiten.scale[a] + model.whiten.mean[a];
        out.push(x);
    }
    return out;
}

inline double nll_loss(const FlowModel& model, const SampleSet& batch) {
    if (batch.size() == 0) throw std::invalid_argument("nll_loss: empty batch");
    if (batch.dim != model.dim) throw std::invalid_argument("nll_loss: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double lp = model.log_prob(batch.point(i));
        if (lp == -kInf) return kInf;  // reported, never clipped
        acc -= lp;
    }
    return acc / static_cast<double>(batch.size());
}

namespace detail {

struct LayerCache {
    Vec u;         // subnet input
    Vec s_hidden;  // tanh activations of the s net
    Vec t_hidden;
    Vec s_raw;     // pre-clamp subnet outputs
    Vec s_c;       // clamped scale per active slot
    Vec t_out;
    Vec x_out;     // layer output of the inverse pass
};

// Reverse-mode pass for one example. Returns the per-example NLL and adds
// its parameter gradient into grads (same layer/block layout as the model).
inline double backprop_example(const FlowModel& model, std::span<const double> x_data,
                               std::vector<LayerCache>& cache, std::vector<SubnetParams>& gs,
                               std::vector<SubnetParams>& gt) {
    const std::size_t d = model.dim;
    const std::size_t L = model.layers.size();
    thread_local Vec y;
    y.assign(x_data.begin(), x_data.end());
    if (!model.whiten.identity())
        for (std::size_t i = 0; i < d; ++i) y[i] = (y[i] - model.whiten.mean[i]) / model.whiten.scale[i];

    // Inverse pass with caching; layers processed from the data side down.
    double sum_s = 0.0;
    for (std::size_t k = L; k-- > 0;) {
        const auto& l = model.layers[k];
        auto& c = cache[k];
        c.u.resize(l.s_net.n_in);
        c.s_hidden.resize(l.s_net.n_hidden);
        c.t_hidden.resize(l.t_net.n_hidden);
        c.s_raw.resize(l.s_net.n_out);
        c.t_out.resize(l.t_net.n_out);
        c.s_c.resize(l.idx_b.size());
        c.x_out = y;
        l.gather_input(y, c.u);
        l.s_net.eval(c.u, c.s_hidden, c.s_raw);
        l.t_net.eval(c.u, c.t_hidden, c.t_out);
        for (std::size_t jb = 0; jb < l.idx_b.size(); ++jb) {
            const std::size_t slot = l.out_slot(jb);
            const double sc = l.clamp_s(c.s_raw[slot]);
            c.s_c[jb] = sc;
            const std::size_t j = l.idx_b[jb];
            c.x_out[j] = (y[j] - c.t_out[slot]) * std::exp(-sc);
            sum_s += sc;
        }
        y = c.x_out;
    }
    const double base = model.prior.log_density(y);
    const double nll = sum_s - base +
                       (model.whiten.identity() ? 0.0 : model.whiten.log_det());

    // Backward sweep: cotangent of the per-example NLL with respect to the
    // inverse-pass state, walking back from the prior side.
    thread_local Vec g, gz, gy_s, gy_t;
    g.resize(d);
    model.prior.grad_log_density(y, g);
    for (auto& v : g) v = -v;
    for (std::size_t k = 0; k < L; ++k) {
        const auto& l = model.layers[k];
        const auto& c = cache[k];
        gz.assign(d, 0.0);
        gy_s.assign(l.s_net.n_out, 0.0);
        gy_t.assign(l.t_net.n_out, 0.0);
        // pass-through coordinates
        for (const std::size_t j : l.idx_a) gz[j] += g[j];
        // active coordinates: x_b = (z_b - t) * exp(-s_c), plus the direct
        // +s_c term of the NLL
        for (std::size_t jb = 0; jb < l.idx_b.size(); ++jb) {
            const std::size_t slot = l.out_slot(jb);
            const std::size_t j = l.idx_b[jb];
            const double e = std::exp(-c.s_c[jb]);
            const double gxb = g[j];
            gz[j] += gxb * e;
            gy_t[slot] -= gxb * e;
            const double g_sc = 1.0 - gxb * c.x_out[j];
            gy_s[slot] += g_sc * l.clamp_s_deriv(c.s_c[jb]);
        }
        // subnets; input cotangent flows back into the pass-through slots
        thread_local Vec gu;
        gu.assign(l.s_net.n_in, 0.0);
        l.s_net.backward(c.u, c.s_hidden, gy_s, gs[k], gu);
        l.t_net.backward(c.u, c.t_hidden, gy_t, gt[k], gu);
        if (l.convention == SubnetConvention::partition_input) {
            for (std::size_t ja = 0; ja < l.idx_a.size(); ++ja) gz[l.idx_a[ja]] += gu[ja];
        } else {
            for (const std::size_t j : l.idx_a) gz[j] += gu[j];
        }
        g = gz;
    }
    return nll;
}

}  // namespace detail

// Exact gradient of nll_loss with respect to every parameter, in the
// pack_params layout.
inline Vec grad_nll(const FlowModel& model, const SampleSet& batch) {
    if (batch.size() == 0) throw std::invalid_argument("grad_nll: empty batch");
    if (batch.dim != model.dim) throw std::invalid_argument("grad_nll: dimension mismatch");
    const std::size_t L = model.layers.size();
    std::vector<detail::LayerCache> cache(L);
    std::vector<SubnetParams> gs(L), gt(L);
    for (std::size_t k = 0; k < L; ++k) {
        const auto& l = model.layers[k];
        gs[k].resize(l.s_net.n_in, l.s_net.n_hidden, l.s_net.n_out);
        gt[k].resize(l.t_net.n_in, l.t_net.n_hidden, l.t_net.n_out);
    }
    for (std::size_t i = 0; i < batch.size(); ++i)
        detail::backprop_example(model, batch.point(i), cache, gs, gt);

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    Vec flat;
    flat.reserve(model.param_count());
    for (std::size_t k = 0; k < L; ++k)
        for (const Vec* v : {&gs[k].w1, &gs[k].b1, &gs[k].w2, &gs[k].b2, &gt[k].w1, &gt[k].b1,
                             &gt[k].w2, &gt[k].b2})
            for (double g : *v) flat.push_back(g * inv_n);
    if (!all_finite(flat)) {
        std::size_t off = 0;
        static const char* kBlocks[] = {"s.w1", "s.b1", "s.w2", "s.b2",
                                        "t.w1", "t.b1", "t.w2", "t.b2"};
        for (std::size_t k = 0; k < L; ++k) {
            const auto& l = model.layers[k];
            const std::size_t sizes[] = {l.s_net.w1.size(), l.s_net.b1.size(), l.s_net.w2.size(),
                                         l.s_net.b2.size(), l.t_net.w1.size(), l.t_net.b1.size(),
                                         l.t_net.w2.size(), l.t_net.b2.size()};
            for (int blk = 0; blk < 8; ++blk) {
                for (std::size_t i = 0; i < sizes[blk]; ++i)
                    if (!std::isfinite(flat[off + i]))
                        throw numerical_error("grad_nll: non-finite gradient in layer " +
                                              std::to_string(k) + " block " + kBlocks[blk]);
                off += sizes[blk];
            }
        }
    }
    return flat;
}

// ---------------------------------------------------------------------------
// Training: minibatch Adam on the NLL, deterministic for a fixed seed.
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t n_epochs = 200;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double weight_init_scale = 1.0;
    double validation_fraction = 0.1;
    std::size_t patience = 20;  // epochs without val improvement; 0 disables

    void validate() const {
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("TrainConfig: learning_rate must be positive");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
            throw std::invalid_argument("TrainConfig: validation_fraction must be in [0, 1)");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    }
};

struct TrainResult {
    FlowModel model;
    Vec train_loss;  // per epoch, data units
    Vec val_loss;    // per epoch; empty when validation_fraction == 0
    std::size_t best_epoch = 0;
    bool early_stopped = false;
};

inline TrainResult train(FlowModel model, const SampleSet& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.dim != model.dim) throw std::invalid_argument("train: data dimension mismatch");
    TrainResult result;
    if (cfg.n_epochs == 0) {  // explicitly a no-op: model returned untouched
        result.model = std::move(model);
        return result;
    }
    if (data.size() < 2) throw std::invalid_argument("train: need at least 2 data points");

    const std::size_t d = model.dim;
    const std::size_t n = data.size();

    // Whitening from the full training input, stored in the model.
    Vec mean(d, 0.0), scale(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) mean[a] += data.data[i * d + a];
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double c = data.data[i * d + a] - mean[a];
            scale[a] += c * c;
        }
    for (auto& s : scale) s = std::max(std::sqrt(s / static_cast<double>(n)), 1e-12);
    model.whiten.mean = mean;
    model.whiten.scale = scale;

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n_val = static_cast<std::size_t>(cfg.validation_fraction * n);
    const std::size_t n_train = n - n_val;
    if (n_train == 0) throw std::invalid_argument("train: validation split leaves no data");
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
    std::vector<std::size_t> val_idx(order.begin() + n_train, order.end());

    SampleSet val_set(d, data.provenance, data.seed);
    for (std::size_t i : val_idx) val_set.push(data.point(i));

    const std::size_t P = model.param_count();
    Vec params = model.pack_params();
    Vec m1(P, 0.0), m2(P, 0.0);
    Vec best_params = params;
    double best_val = kInf;
    std::size_t since_best = 0;
    std::size_t adam_t = 0;

    SampleSet batch(d, data.provenance, data.seed);
    for (std::size_t epoch = 0; epoch < cfg.n_epochs; ++epoch) {
        rng.shuffle(train_idx);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, n_train);
            batch.data.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push(data.point(train_idx[i]));
            const double loss = nll_loss(model, batch);
            if (!std::isfinite(loss))
                throw training_diverged_error(
                    "train: non-finite loss at epoch " + std::to_string(epoch), epoch);
            const Vec g = grad_nll(model, batch);
            ++adam_t;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_t));
            for (std::size_t p = 0; p < P; ++p) {
                m1[p] = cfg.adam_beta1 * m1[p] + (1.0 - cfg.adam_beta1) * g[p];
                m2[p] = cfg.adam_beta2 * m2[p] + (1.0 - cfg.adam_beta2) * g[p] * g[p];
                params[p] -= cfg.learning_rate * (m1[p] / bc1) /
                             (std::sqrt(m2[p] / bc2) + cfg.adam_eps);
            }
            model.unpack_params(params);
            epoch_loss += loss;
            ++n_batches;
        }
        result.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));
        if (n_val > 0) {
            const double vl = nll_loss(model, val_set);
            result.val_loss.push_back(vl);
            if (vl < best_val - 1e-12) {
                best_val = vl;
                best_params = params;
                result.best_epoch = epoch;
                since_best = 0;
            } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }
    if (n_val > 0) model.unpack_params(best_params);
    result.model = std::move(model);
    return result;
}

}  // namespace moserflow
