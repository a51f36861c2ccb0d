#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "moserflow/core.hpp"
#include "moserflow/num_io.hpp"

namespace moserflow {

enum class Provenance { langevin, flow, moser_pushforward, prior };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::langevin: return "langevin";
        case Provenance::flow: return "flow";
        case Provenance::moser_pushforward: return "moser_pushforward";
        case Provenance::prior: return "prior";
    }
    return "?";
}

inline Provenance provenance_from_string(std::string_view s) {
    if (s == "langevin") return Provenance::langevin;
    if (s == "flow") return Provenance::flow;
    if (s == "moser_pushforward") return Provenance::moser_pushforward;
    if (s == "prior") return Provenance::prior;
    throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

// Ordered collection of d-dimensional points. Order is the trajectory order
// for Langevin output and draw order for i.i.d. sets.
struct SampleSet {
    std::size_t dim = 0;
    Vec data;  // row-major, size() * dim
    Provenance provenance = Provenance::prior;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> meta;

    SampleSet() = default;
    SampleSet(std::size_t d, Provenance p, std::uint64_t s) : dim(d), provenance(p), seed(s) {}

    std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }

    std::span<const double> point(std::size_t i) const {
        return std::span<const double>(data).subspan(i * dim, dim);
    }

    std::span<double> point(std::size_t i) {
        return std::span<double>(data).subspan(i * dim, dim);
    }

    void push(std::span<const double> x) {
        if (x.size() != dim) throw std::invalid_argument("SampleSet::push: dimension mismatch");
        data.insert(data.end(), x.begin(), x.end());
    }

    // One coordinate across all points.
    Vec coordinate(std::size_t axis) const {
        Vec out(size());
        for (std::size_t i = 0; i < size(); ++i) out[i] = data[i * dim + axis];
        return out;
    }
};

// Text table: comment header lines carrying dim/provenance/seed/meta, one
// point per row with comma-separated coordinates. Coordinates use shortest
// round-trip formatting, so write/read is bit-exact.
inline void write_samples(std::ostream& os, const SampleSet& s) {
    os << "# moserflow-samples v1\n";
    os << "# dim " << s.dim << "\n";
    os << "# provenance " << to_string(s.provenance) << "\n";
    os << "# seed " << s.seed << "\n";
    for (const auto& [k, v] : s.meta) os << "# meta " << k << " " << v << "\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto p = s.point(i);
        for (std::size_t a = 0; a < s.dim; ++a) {
            if (a) os << ',';
            os << format_double(p[a]);
        }
        os << '\n';
    }
}

inline SampleSet read_samples(std::istream& is) {
    SampleSet s;
    std::string line;
    bool have_dim = false;
    while (std::getline(is, line)) {
        const auto t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            const auto tok = split(trim(t.substr(1)), ' ');
            if (tok.empty()) continue;
            if (tok[0] == "dim") {
                s.dim = static_cast<std::size_t>(parse_int(tok.at(1)));
                have_dim = true;
            } else if (tok[0] == "provenance") {
                s.provenance = provenance_from_string(tok.at(1));
            } else if (tok[0] == "seed") {
                s.seed = static_cast<std::uint64_t>(parse_int(tok.at(1)));
            } else if (tok[0] == "meta" && tok.size() >= 3) {
                std::string v;
                for (std::size_t i = 2; i < tok.size(); ++i) {
                    if (i > 2) v += ' ';
                    v += std::string(tok[i]);
                }
                s.meta[std::string(tok[1])] = v;
            }
            continue;
        }
        const auto cols = split(t, ',');
        if (!have_dim) {
            s.dim = cols.size();
            have_dim = true;
        }
        if (cols.size() != s.dim)
            throw std::invalid_argument("read_samples: row width does not match dim");
        for (const auto& c : cols) s.data.push_back(parse_double(trim(c)));
    }
    return s;
}

}  // namespace moserflow
