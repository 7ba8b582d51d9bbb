#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "brt/field.hpp"
#include "brt/geometry.hpp"
#include "brt/unfolding.hpp"

namespace brt {

constexpr int default_s_per_unit = 256;
constexpr int default_n_phi = 256;

/** Fan coordinates over the accessible set: midpoint samples in boundary
 *  arclength s along each arc, midpoint samples in the angle phi from the
 *  inward normal over (-pi/2, pi/2). Cell quadrature weight cos(phi) ds dphi
 *  makes sums approximate integrals over the ingoing bundle. */
struct sinogram_grid {
    access_set E;
    int n_phi = 0;
    int n_max = 0;
    std::vector<double> s_nodes;
    std::vector<double> ds;       // spacing of the arc each node belongs to
    std::vector<int> arc_of;
    std::vector<double> values;   // [is * n_phi + iphi]
    std::vector<std::uint8_t> mask;

    int n_s() const { return static_cast<int>(s_nodes.size()); }
    double dphi() const { return pi / n_phi; }
    double phi(int m) const { return -0.5 * pi + (m + 0.5) * dphi(); }

    std::size_t cell(int is, int iphi) const {
        return static_cast<std::size_t>(is) * n_phi + iphi;
    }

    double weight(int is, int iphi) const {
        return std::cos(phi(iphi)) * ds[is] * dphi();
    }

    /** Ingoing tangent sampled by a cell. */
    unit_tangent ray(int is, int iphi) const {
        const boundary_point bp = point_to_param(boundary_param(s_nodes[is]));
        return {bp.p, wrap_angle(inward_normal_angle(bp.edge) + phi(iphi))};
    }

    /** Integral of the stored values against the cell weights. */
    double quadrature_sum() const {
        double acc = 0.0;
        for (int is = 0; is < n_s(); ++is)
            for (int m = 0; m < n_phi; ++m)
                if (!mask[cell(is, m)]) acc += values[cell(is, m)] * weight(is, m);
        return acc;
    }
};

inline sinogram_grid make_sinogram(const access_set& E, int s_per_unit = default_s_per_unit,
                                   int n_phi = default_n_phi, int n_max = 0) {
    if (s_per_unit <= 0 || n_phi <= 0)
        throw std::invalid_argument("make_sinogram: sample counts must be positive");
    sinogram_grid sg;
    sg.E = E;
    sg.n_phi = n_phi;
    sg.n_max = n_max;
    for (std::size_t a = 0; a < E.arcs.size(); ++a) {
        const double lo = E.arcs[a].first, hi = E.arcs[a].second;
        const int n = std::max(1, static_cast<int>(std::lround((hi - lo) * s_per_unit)));
        const double d = (hi - lo) / n;
        for (int i = 0; i < n; ++i) {
            sg.s_nodes.push_back(lo + (i + 0.5) * d);
            sg.ds.push_back(d);
            sg.arc_of.push_back(static_cast<int>(a));
        }
    }
    sg.values.assign(static_cast<std::size_t>(sg.n_s()) * n_phi, 0.0);
    sg.mask.assign(sg.values.size(), 0);
    return sg;
}

namespace detail {

/** Quadrature nodes on [0, len] for one segment: the step-h attenuation
 *  lattice, the pixel-center crossings of g, and both endpoints. */
inline void segment_nodes(const grid_function& g, point2 entry, point2 dir, double len,
                          double h, std::vector<double>& ts) {
    ts.clear();
    ts.push_back(0.0);
    ts.push_back(len);
    for (double t = h; t < len; t += h) ts.push_back(t);
    axis_crossings(entry.x1, dir.x1, 0.0, len, g.origin.x1 + 0.5 * g.spacing, g.spacing,
                   g.nx, ts);
    axis_crossings(entry.x2, dir.x2, 0.0, len, g.origin.x2 + 0.5 * g.spacing, g.spacing,
                   g.ny, ts);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end(),
                         [](double a, double b) { return b - a < 1e-14; }),
             ts.end());
}

/** Walk the weighted quadrature nodes of a traced trajectory, calling
 *  visit(position, coeff, segment_index) with coeff the trapezoid node weight
 *  times the attenuation factor exp(-A). The transform gathers f against
 *  these coefficients and its transpose scatters with the same ones, which
 *  keeps the two exact algebraic adjoints. Endpoint nodes reuse the stored
 *  snapped entry/exit: recomputing them as entry + t*d can drift past the
 *  wall by an ulp. */
template <class Visit>
inline void for_each_ray_node(const grid_function& g, const broken_ray& r,
                              const attenuation_profile& prof, double h_sigma,
                              std::vector<double>& ts, Visit&& visit) {
    double t0 = 0.0;
    for (std::size_t si = 0; si < r.segments.size(); ++si) {
        const ray_segment& seg = r.segments[si];
        const point2 d = direction(seg.dir);
        segment_nodes(g, seg.entry, d, seg.length, h_sigma, ts);
        auto pos = [&](std::size_t i) {
            if (i == 0) return seg.entry;
            if (i + 1 == ts.size()) return seg.exit;
            return seg.entry + ts[i] * d;
        };
        const std::size_t n = ts.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double left = i == 0 ? 0.0 : ts[i] - ts[i - 1];
            const double right = i + 1 == n ? 0.0 : ts[i + 1] - ts[i];
            const double q = 0.5 * (left + right);
            if (q <= 0.0) continue;
            visit(pos(i), q * weight_w(prof, t0 + ts[i]), si);
        }
        t0 += seg.length;
    }
}

}  // namespace detail

struct forward_result {
    double value = 0.0;
    bool masked = false;
};

/** Attenuated integral of g along the broken ray from v: sum over segments of
 *  the trapezoid rule on the merged node set, with exp(-A) from the midpoint
 *  attenuation lattice. Masked when the trajectory is irregular. */
inline forward_result forward_one(const grid_function& g, const sigma_field& sigma,
                                  unit_tangent v, const access_set& E, int n_max,
                                  double h_sigma = default_h_sigma,
                                  const tolerances& tol = {}) {
    const broken_ray r = trace_broken_ray(v, E, n_max, tol);
    if (!r.regular) return {0.0, true};
    const attenuation_profile prof = make_attenuation(r, sigma, h_sigma);
    double acc = 0.0;
    std::vector<double> ts;
    detail::for_each_ray_node(g, r, prof, h_sigma, ts,
                              [&](point2 p, double c, std::size_t) {
                                  acc += c * sample(g, p);
                              });
    return {acc, false};
}

/** Same integral computed on the straightened trajectory: one line of the
 *  unfolded plane, fields evaluated through their reflection-periodic
 *  extensions, quadrature lattices anchored at each tile entry so the node
 *  sets match the segment-wise route. */
inline forward_result forward_one_unfolded(const grid_function& g, const sigma_field& sigma,
                                           unit_tangent v, const access_set& E, int n_max,
                                           double h_sigma = default_h_sigma,
                                           const tolerances& tol = {}) {
    if (std::abs(g.origin.x1) > 1e-12 || std::abs(g.origin.x2) > 1e-12 ||
        std::abs(g.nx * g.spacing - 1.0) > 1e-12 || std::abs(g.ny * g.spacing - 1.0) > 1e-12)
        throw std::invalid_argument("forward_one_unfolded: grid must cover the unit square");
    const broken_ray r = trace_broken_ray(v, E, n_max, tol);
    if (!r.regular) return {0.0, true};
    const unfolded_ray u = unfold_ray(r);
    const point2 D = direction(u.dir);

    auto sigma_ext = [&](point2 wt, double eta) {
        const folded_point fp = fold_point(wt);
        return sigma(fp.p, fold_angle(fp.tile, eta));
    };
    auto g_ext = [&](point2 wt) { return sample(g, fold_point(wt).p); };

    double acc = 0.0;
    double a_base = 0.0;
    std::vector<double> ts;
    for (std::size_t j = 0; j < u.tiles.size(); ++j) {
        const double piece_lo = u.breaks[j];
        const double piece_len =
            (j + 1 < u.breaks.size() ? u.breaks[j + 1] : u.length) - piece_lo;
        const point2 entry = u.start + piece_lo * D;

        // Midpoint attenuation on the piece-anchored lattice.
        const std::size_t m = static_cast<std::size_t>(piece_len / h_sigma);
        std::vector<double> lat(m + 1, 0.0);
        for (std::size_t k = 0; k < m; ++k)
            lat[k + 1] =
                lat[k] + h_sigma * sigma_ext(entry + ((k + 0.5) * h_sigma) * D, u.dir);
        auto a_at = [&](double local) {
            const std::size_t k =
                std::min(static_cast<std::size_t>(local / h_sigma), lat.size() - 1);
            const double t_k = static_cast<double>(k) * h_sigma;
            double a = a_base + lat[k];
            if (local > t_k)
                a += (local - t_k) *
                     sigma_ext(entry + (0.5 * (t_k + local)) * D, u.dir);
            return a;
        };

        // Node set: crossings of the extended pixel-center lattice. The
        // reflected copies of the center lines fill the plane as the single
        // progression (j + 0.5) * spacing, j integer.
        ts.clear();
        ts.push_back(0.0);
        ts.push_back(piece_len);
        for (double t = h_sigma; t < piece_len; t += h_sigma) ts.push_back(t);
        for (int axis = 0; axis < 2; ++axis) {
            const double e = axis == 0 ? entry.x1 : entry.x2;
            const double dv = axis == 0 ? D.x1 : D.x2;
            if (dv == 0.0) continue;
            const double sp = g.spacing;
            const double lo = std::min(e, e + dv * piece_len);
            const double hi = std::max(e, e + dv * piece_len);
            const long j0 = static_cast<long>(std::floor(lo / sp - 0.5)) - 1;
            const long j1 = static_cast<long>(std::ceil(hi / sp - 0.5)) + 1;
            for (long j = j0; j <= j1; ++j) {
                const double t = ((j + 0.5) * sp - e) / dv;
                if (t > 0.0 && t < piece_len) ts.push_back(t);
            }
        }
        std::sort(ts.begin(), ts.end());
        ts.erase(std::unique(ts.begin(), ts.end(),
                             [](double a, double b) { return b - a < 1e-14; }),
                 ts.end());

        double prev_t = ts[0];
        double prev_f = std::exp(-a_at(prev_t)) * g_ext(entry + prev_t * D);
        for (std::size_t i = 1; i < ts.size(); ++i) {
            const double f = std::exp(-a_at(ts[i])) * g_ext(entry + ts[i] * D);
            acc += 0.5 * (ts[i] - prev_t) * (prev_f + f);
            prev_t = ts[i];
            prev_f = f;
        }
        a_base = a_at(piece_len);
    }
    return {acc, false};
}

/** Fill every cell of the sinogram with the transform of g. Cells are
 *  independent, so the result does not depend on the thread count. */
inline void forward_all(const grid_function& g, const sigma_field& sigma, sinogram_grid& sg,
                        double h_sigma = default_h_sigma, int n_threads = 1,
                        const tolerances& tol = {}) {
    const int rows = sg.n_s();
    auto run_rows = [&](int lo, int hi) {
        for (int is = lo; is < hi; ++is)
            for (int m = 0; m < sg.n_phi; ++m) {
                const forward_result fr =
                    forward_one(g, sigma, sg.ray(is, m), sg.E, sg.n_max, h_sigma, tol);
                sg.values[sg.cell(is, m)] = fr.value;
                sg.mask[sg.cell(is, m)] = fr.masked ? 1 : 0;
            }
    };
    if (n_threads <= 1) {
        run_rows(0, rows);
        return;
    }
    std::vector<std::thread> pool;
    const int chunk = (rows + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
        const int lo = t * chunk, hi = std::min(rows, lo + chunk);
        if (lo < hi) pool.emplace_back(run_rows, lo, hi);
    }
    for (std::thread& th : pool) th.join();
}

/** Multiply each unmasked cell by alpha evaluated at its ingoing tangent. */
template <typename Alpha>
void apply_cutoff(sinogram_grid& sg, Alpha&& alpha) {
    for (int is = 0; is < sg.n_s(); ++is)
        for (int m = 0; m < sg.n_phi; ++m) {
            const std::size_t c = sg.cell(is, m);
            if (!sg.mask[c]) sg.values[c] *= alpha(sg.ray(is, m));
        }
}

}  // namespace brt
