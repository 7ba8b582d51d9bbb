#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "brt/field.hpp"
#include "brt/geometry.hpp"
#include "brt/unfolding.hpp"

namespace brt {

/** Standard bump: exp(1 - 1/(1-t^2)) on (-1, 1), zero outside, value 1 at 0. */
inline double bump(double t) {
    const double t2 = t * t;
    if (t2 >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - t2));
}

/** One-dimensional cutoff profile on [-1, 1]: identically 1 on the inner half,
 *  a bump shoulder on the outer half, zero beyond. */
inline double bump_profile(double u) {
    const double a = std::abs(u);
    if (a >= 1.0) return 0.0;
    if (a <= 0.5) return 1.0;
    return bump(2.0 * a - 1.0);
}

enum class beam_class { corner_free, corner_start, interior_corner };

/** Axis-aligned box in the beam's measurement coordinates. */
struct beam_rect {
    double c1_lo = 0.0, c1_hi = 0.0;
    double c2_lo = 0.0, c2_hi = 0.0;

    double profile(double c1, double c2) const {
        const double u = (2.0 * c1 - c1_lo - c1_hi) / (c1_hi - c1_lo);
        const double v = (2.0 * c2 - c2_lo - c2_hi) / (c2_hi - c2_lo);
        return bump_profile(u) * bump_profile(v);
    }
};

/** One connected family of regular trajectories sharing a reflection
 *  pattern. Coordinates are (s, phi) for beams confined to one accessible
 *  arc; beams spanning a corner of the closure of E use the directed-line
 *  coordinates (ball entry angle, direction), on which the cutoff is
 *  constant along each line. */
struct beam {
    beam_class cls = beam_class::corner_free;
    bool line_coords = false;
    int corner = -1;     // corner index for corner_start beams
    int n_pairs = 0;     // near-corner reflection pairs along the pattern
    tile_path tiles;     // merged tile path
    reflection_signature terminal{0, 0};
    std::vector<beam_rect> rects;
    double ref2 = 0.0;  // unwrap center for the direction coordinate
};

namespace detail {

inline double wrap_pm(double a) {
    a = std::fmod(a + pi, two_pi);
    if (a < 0.0) a += two_pi;
    return a - pi;
}

/** Directed-line coordinates of the trajectory through (base, dir): the
 *  signed offset of the line from the square's center, cross(d, base - c),
 *  and the direction. Both are smooth along families of lines and reversing
 *  the direction negates the offset. */
inline std::pair<double, double> line_coordinates(unit_tangent v) {
    const point2 d = direction(v.dir);
    return {d.x1 * (v.base.x2 - 0.5) - d.x2 * (v.base.x1 - 0.5), wrap_angle(v.dir)};
}

/** Ingoing tangent of the line with those coordinates, if it meets the
 *  square. */
inline std::optional<unit_tangent> line_to_tangent(double p0, double theta) {
    const point2 d = direction(theta);
    const point2 q{0.5 - p0 * d.x2, 0.5 + p0 * d.x1};
    const auto [t_in, t_out] = square_slab(q, d);
    if (t_out - t_in < 1e-9) return std::nullopt;
    point2 p = q + t_in * d;
    // Snap onto the wall that was crossed.
    if (std::abs(p.x1) < 1e-9)
        p.x1 = 0.0;
    else if (std::abs(p.x1 - 1.0) < 1e-9)
        p.x1 = 1.0;
    if (std::abs(p.x2) < 1e-9)
        p.x2 = 0.0;
    else if (std::abs(p.x2 - 1.0) < 1e-9)
        p.x2 = 1.0;
    p.x1 = std::clamp(p.x1, 0.0, 1.0);
    p.x2 = std::clamp(p.x2, 0.0, 1.0);
    return unit_tangent{p, theta};
}

}  // namespace detail

/** Cutoff value of one beam at an ingoing tangent. */
inline double beam_alpha(const beam& b, unit_tangent v) {
    double c1, c2;
    if (b.line_coords) {
        const auto [p0, th] = detail::line_coordinates(v);
        c1 = p0;
        c2 = b.ref2 + detail::wrap_pm(th - b.ref2);
    } else {
        boundary_point bp;
        try {
            bp = point_to_param(v.base);
        } catch (const std::domain_error&) {
            return 0.0;
        }
        const double phi = detail::wrap_pm(v.dir - inward_normal_angle(bp.edge));
        if (std::abs(phi) >= 0.5 * pi) return 0.0;
        c1 = bp.s;
        c2 = phi;
    }
    double acc = 0.0;
    for (const beam_rect& r : b.rects) acc += r.profile(c1, c2);
    return acc;
}

/** Smooth cutoff subordinate to a beam decomposition. */
struct cutoff {
    access_set E;
    int n_max = 0;
    std::vector<beam> beams;

    double alpha(unit_tangent v) const {
        double acc = 0.0;
        for (const beam& b : beams) acc += beam_alpha(b, v);
        return std::min(acc, 1.0);
    }
};

/** Cutoff value of a beam seen from an interior point: x on segment j of the
 *  beam's reflection pattern, with folded direction theta_fold. The
 *  trajectory is straightened, its measurement coordinates are read off the
 *  entry of the line into the square, and the beam profile is evaluated
 *  there. No trace is involved, so the value varies smoothly in (x, theta). */
inline double alpha_pullback(const beam& b, point2 x, double theta_fold, std::size_t j) {
    if (j >= b.tiles.size()) throw std::invalid_argument("alpha_pullback: segment index");
    const double eta = unfold_angle(b.tiles[j], theta_fold);
    const point2 xt = unfold_point(b.tiles[j], x);
    const point2 D = direction(eta);
    if (b.line_coords) {
        const double c1 = D.x1 * (xt.x2 - 0.5) - D.x2 * (xt.x1 - 0.5);
        const double c2 = b.ref2 + detail::wrap_pm(eta - b.ref2);
        double acc = 0.0;
        for (const beam_rect& r : b.rects) acc += r.profile(c1, c2);
        return acc;
    }
    const auto [t_in, t_out] = detail::square_slab(xt, D);
    if (t_out <= t_in) return 0.0;
    const point2 p = xt + t_in * D;
    // Which wall the entry point sits on decides the (s, phi) chart.
    point2 ps = p;
    int edge;
    const double d0 = std::abs(ps.x2), d1 = std::abs(ps.x1 - 1.0);
    const double d2 = std::abs(ps.x2 - 1.0), d3 = std::abs(ps.x1);
    const double dmin = std::min({d0, d1, d2, d3});
    if (dmin == d0) {
        edge = 0;
        ps.x2 = 0.0;
    } else if (dmin == d1) {
        edge = 1;
        ps.x1 = 1.0;
    } else if (dmin == d2) {
        edge = 2;
        ps.x2 = 1.0;
    } else {
        edge = 3;
        ps.x1 = 0.0;
    }
    ps.x1 = std::clamp(ps.x1, 0.0, 1.0);
    ps.x2 = std::clamp(ps.x2, 0.0, 1.0);
    double s;
    switch (edge) {
        case 0: s = ps.x1; break;
        case 1: s = 1.0 + ps.x2; break;
        case 2: s = 3.0 - ps.x1; break;
        default: s = 4.0 - ps.x2; break;
    }
    const double phi = detail::wrap_pm(eta - inward_normal_angle(edge));
    if (std::abs(phi) >= 0.5 * pi) return 0.0;
    double acc = 0.0;
    for (const beam_rect& r : b.rects) acc += r.profile(s, phi);
    return acc;
}

struct classify_options {
    int s_samples = 1024;
    int phi_samples = 1024;
    double min_area_frac = 1e-4;
    int erosion = 2;
    int max_rects = 4;
    tolerances tol{};
};

namespace detail {

struct classify_grid {
    std::vector<double> s_nodes, ds;
    std::vector<int> arc_of;
    int n_phi = 0;
    double dphi() const { return pi / n_phi; }
    double phi(int m) const { return -0.5 * pi + (m + 0.5) * dphi(); }
    int n_s() const { return static_cast<int>(s_nodes.size()); }
    std::size_t cell(int is, int m) const {
        return static_cast<std::size_t>(is) * n_phi + m;
    }
};

/** Largest all-true axis-aligned rectangle in mask (histogram method).
 *  Returns {is0, is1, m0, m1} inclusive, or nullopt if mask is empty. */
inline std::optional<std::array<int, 4>> max_rectangle(const std::vector<std::uint8_t>& mask,
                                                       int ns, int nphi) {
    std::vector<int> height(static_cast<std::size_t>(nphi), 0);
    int best = 0;
    std::array<int, 4> out{};
    for (int is = 0; is < ns; ++is) {
        for (int m = 0; m < nphi; ++m)
            height[m] = mask[static_cast<std::size_t>(is) * nphi + m] ? height[m] + 1 : 0;
        // Largest rectangle under the histogram `height`.
        std::vector<int> stack;
        for (int m = 0; m <= nphi; ++m) {
            const int h = m < nphi ? height[m] : 0;
            int left = m;
            while (!stack.empty() && height[stack.back()] >= h) {
                const int idx = stack.back();
                stack.pop_back();
                const int width = stack.empty() ? m : m - stack.back() - 1;
                const int area = height[idx] * width;
                left = stack.empty() ? 0 : stack.back() + 1;
                if (area > best) {
                    best = area;
                    out = {is - height[idx] + 1, is, left, m - 1};
                }
            }
            stack.push_back(m);
        }
    }
    if (best == 0) return std::nullopt;
    return out;
}

}  // namespace detail

/** Partition the sampled ingoing bundle into connected families of regular
 *  trajectories with a common reflection pattern, and fit a smooth cutoff
 *  inside each family. */
inline cutoff classify_beams(const access_set& E, int n_max, classify_options opts = {}) {
    cutoff co;
    co.E = E;
    co.n_max = n_max;

    detail::classify_grid g;
    g.n_phi = opts.phi_samples;
    double total_len = 0.0;
    for (const auto& [lo, hi] : E.arcs) total_len += hi - lo;
    const int per_unit = std::max(1, static_cast<int>(std::lround(opts.s_samples / total_len)));
    std::vector<int> arc_first, arc_count;
    for (std::size_t a = 0; a < E.arcs.size(); ++a) {
        const double lo = E.arcs[a].first, hi = E.arcs[a].second;
        const int n = std::max(1, static_cast<int>(std::lround((hi - lo) * per_unit)));
        arc_first.push_back(g.n_s());
        arc_count.push_back(n);
        const double d = (hi - lo) / n;
        for (int i = 0; i < n; ++i) {
            g.s_nodes.push_back(lo + (i + 0.5) * d);
            g.ds.push_back(d);
            g.arc_of.push_back(static_cast<int>(a));
        }
    }
    const int ns = g.n_s(), nphi = g.n_phi;
    const std::size_t n_cells = static_cast<std::size_t>(ns) * nphi;

    // Key per cell: merged tile path plus terminal signature of a regular
    // trajectory; -1 for irregular or excluded cells.
    std::vector<int> key(n_cells, -1);
    std::vector<int> pairs(n_cells, 0);
    std::map<std::vector<int>, int> key_ids;
    for (int is = 0; is < ns; ++is) {
        const double s = g.s_nodes[is];
        if (E.boundary_distance(s) < E.eps_boundary + 1e-12) continue;
        const boundary_point bp = point_to_param(boundary_param(s));
        for (int m = 0; m < nphi; ++m) {
            const double dir = wrap_angle(inward_normal_angle(bp.edge) + g.phi(m));
            broken_ray r;
            try {
                r = trace_broken_ray({bp.p, dir}, E, n_max, opts.tol);
            } catch (const std::domain_error&) {
                continue;
            }
            if (!r.regular) continue;
            const tile_path merged = merged_tile_path(r);
            std::vector<int> k;
            k.reserve(2 * merged.size() + 2);
            for (const reflection_signature& t : merged) {
                k.push_back(t.l1);
                k.push_back(t.l2);
            }
            k.push_back(r.signature.l1);
            k.push_back(r.signature.l2);
            const auto [it, inserted] = key_ids.try_emplace(std::move(k),
                                                            static_cast<int>(key_ids.size()));
            key[g.cell(is, m)] = it->second;
            pairs[g.cell(is, m)] = static_cast<int>(r.near_corner_pairs.size());
        }
    }

    // Seam links across corners interior to the closure of E: the last s cell
    // of the arc ending at the corner meets the first s cell of the arc
    // starting there, with the phi index shifted by a quarter turn.
    struct seam_link {
        int is_a, is_b, corner;
    };
    std::vector<seam_link> seams;
    for (std::size_t a = 0; a < E.arcs.size(); ++a)
        for (std::size_t b = 0; b < E.arcs.size(); ++b) {
            const double end_a = E.arcs[a].second;
            const double beg_b = E.arcs[b].first;
            if (std::abs(std::fmod(end_a, 4.0) - beg_b) < 1e-12 &&
                std::abs(end_a - std::round(end_a)) < 1e-12) {
                seams.push_back({arc_first[a] + arc_count[a] - 1, arc_first[b],
                                 static_cast<int>(std::round(beg_b)) % 4});
            }
        }

    // Connected components over equal keys.
    std::vector<int> comp(n_cells, -1);
    std::vector<int> comp_corner;   // seam corner if the component crosses one
    int n_comp = 0;
    const int shift = nphi / 2;
    for (std::size_t seed = 0; seed < n_cells; ++seed) {
        if (key[seed] < 0 || comp[seed] >= 0) continue;
        const int id = n_comp++;
        comp_corner.push_back(-1);
        std::deque<std::size_t> q{seed};
        comp[seed] = id;
        while (!q.empty()) {
            const std::size_t c = q.front();
            q.pop_front();
            const int is = static_cast<int>(c) / nphi, m = static_cast<int>(c) % nphi;
            auto visit = [&](int is2, int m2, int corner) {
                if (is2 < 0 || is2 >= ns || m2 < 0 || m2 >= nphi) return;
                if (g.arc_of[is2] == g.arc_of[is] && std::abs(is2 - is) > 1) return;
                const std::size_t c2 = g.cell(is2, m2);
                if (key[c2] != key[c] || comp[c2] >= 0) return;
                comp[c2] = id;
                if (corner >= 0) comp_corner[id] = corner;
                q.push_back(c2);
            };
            if (is > 0 && g.arc_of[is - 1] == g.arc_of[is]) visit(is - 1, m, -1);
            if (is + 1 < ns && g.arc_of[is + 1] == g.arc_of[is]) visit(is + 1, m, -1);
            visit(is, m - 1, -1);
            visit(is, m + 1, -1);
            for (const seam_link& sl : seams) {
                if (is == sl.is_a && m - shift >= 0) {
                    const std::size_t c2 = g.cell(sl.is_b, m - shift);
                    if (key[c2] == key[c] && comp[c2] < 0) {
                        comp[c2] = id;
                        comp_corner[id] = sl.corner;
                        q.push_back(c2);
                    }
                }
                if (is == sl.is_b && m + shift < nphi) {
                    const std::size_t c2 = g.cell(sl.is_a, m + shift);
                    if (key[c2] == key[c] && comp[c2] < 0) {
                        comp[c2] = id;
                        comp_corner[id] = sl.corner;
                        q.push_back(c2);
                    }
                }
            }
        }
    }

    // Component measures against the whole bundle.
    double bundle = 0.0;
    std::vector<double> area(n_comp, 0.0);
    for (std::size_t c = 0; c < n_cells; ++c) {
        const int is = static_cast<int>(c) / nphi, m = static_cast<int>(c) % nphi;
        const double w = std::cos(g.phi(m)) * g.ds[is] * g.dphi();
        bundle += w;
        if (comp[c] >= 0) area[comp[c]] += w;
    }

    for (int id = 0; id < n_comp; ++id) {
        if (area[id] < opts.min_area_frac * bundle) continue;

        // Representative cell and key data.
        std::vector<std::uint8_t> mask(n_cells, 0);
        std::size_t rep = 0;
        std::size_t count = 0;
        for (std::size_t c = 0; c < n_cells; ++c)
            if (comp[c] == id) {
                mask[c] = 1;
                rep = c;
                ++count;
            }

        // Erode within the component adjacency (seam links included).
        for (int e = 0; e < opts.erosion; ++e) {
            std::vector<std::uint8_t> next(mask);
            for (std::size_t c = 0; c < n_cells; ++c) {
                if (!mask[c]) continue;
                const int is = static_cast<int>(c) / nphi, m = static_cast<int>(c) % nphi;
                auto on = [&](int is2, int m2) -> bool {
                    if (m2 < 0 || m2 >= nphi) return false;
                    if (is2 < 0 || is2 >= ns) return false;
                    return mask[g.cell(is2, m2)] != 0;
                };
                bool left = is > 0 && g.arc_of[is - 1] == g.arc_of[is] && on(is - 1, m);
                bool right = is + 1 < ns && g.arc_of[is + 1] == g.arc_of[is] && on(is + 1, m);
                for (const seam_link& sl : seams) {
                    if (is == sl.is_b && m + shift < nphi && on(sl.is_a, m + shift))
                        left = true;
                    if (is == sl.is_a && m - shift >= 0 && on(sl.is_b, m - shift))
                        right = true;
                }
                if (!(left && right && on(is, m - 1) && on(is, m + 1))) next[c] = 0;
            }
            mask.swap(next);
        }

        beam bm;
        {
            const int is = static_cast<int>(rep) / nphi, m = static_cast<int>(rep) % nphi;
            const boundary_point bp = point_to_param(boundary_param(g.s_nodes[is]));
            const broken_ray r = trace_broken_ray(
                {bp.p, wrap_angle(inward_normal_angle(bp.edge) + g.phi(m))}, E, n_max,
                opts.tol);
            bm.tiles = merged_tile_path(r);
            bm.terminal = r.signature;
        }
        int max_pairs = 0;
        for (std::size_t c = 0; c < n_cells; ++c)
            if (comp[c] == id) max_pairs = std::max(max_pairs, pairs[c]);
        bm.n_pairs = max_pairs;
        bm.corner = comp_corner[id];
        bm.line_coords = comp_corner[id] >= 0;
        bm.cls = bm.line_coords ? beam_class::corner_start
                                : (max_pairs > 0 ? beam_class::interior_corner
                                                 : beam_class::corner_free);

        if (!bm.line_coords) {
            // Rectangles straight off the eroded cell mask of the single arc.
            const int arc = g.arc_of[static_cast<int>(rep) / nphi];
            const int first = arc_first[arc], cnt = arc_count[arc];
            std::vector<std::uint8_t> sub(static_cast<std::size_t>(cnt) * nphi, 0);
            for (int is = 0; is < cnt; ++is)
                for (int m = 0; m < nphi; ++m)
                    sub[static_cast<std::size_t>(is) * nphi + m] =
                        mask[g.cell(first + is, m)];
            for (int k = 0; k < opts.max_rects; ++k) {
                const auto r = detail::max_rectangle(sub, cnt, nphi);
                if (!r) break;
                const auto [i0, i1, m0, m1] = *r;
                if ((i1 - i0 + 1) * (m1 - m0 + 1) < 4) break;
                beam_rect br;
                br.c1_lo = g.s_nodes[first + i0] - 0.5 * g.ds[first + i0];
                br.c1_hi = g.s_nodes[first + i1] + 0.5 * g.ds[first + i1];
                br.c2_lo = g.phi(m0) - 0.5 * g.dphi();
                br.c2_hi = g.phi(m1) + 0.5 * g.dphi();
                bm.rects.push_back(br);
                for (int is = i0; is <= i1; ++is)
                    for (int m = m0; m <= m1; ++m)
                        sub[static_cast<std::size_t>(is) * nphi + m] = 0;
            }
        } else {
            // The family crosses a corner of the closure of E, so (s, phi) is
            // discontinuous on it. Re-rasterize it in directed-line
            // coordinates and fit rectangles there instead.
            std::vector<std::pair<double, double>> pts;
            double tx = 0.0, ty = 0.0;
            for (std::size_t c = 0; c < n_cells; ++c) {
                if (!mask[c]) continue;
                const int is = static_cast<int>(c) / nphi, m = static_cast<int>(c) % nphi;
                const boundary_point bp = point_to_param(boundary_param(g.s_nodes[is]));
                const auto [p0, th] = detail::line_coordinates(
                    {bp.p, wrap_angle(inward_normal_angle(bp.edge) + g.phi(m))});
                pts.emplace_back(p0, th);
                tx += std::cos(th);
                ty += std::sin(th);
            }
            if (pts.empty()) continue;
            bm.ref2 = std::atan2(ty, tx);
            double a_lo = 1e300, a_hi = -1e300, t_lo = 1e300, t_hi = -1e300;
            for (const auto& [p0, th] : pts) {
                const double tu = bm.ref2 + detail::wrap_pm(th - bm.ref2);
                a_lo = std::min(a_lo, p0);
                a_hi = std::max(a_hi, p0);
                t_lo = std::min(t_lo, tu);
                t_hi = std::max(t_hi, tu);
            }
            if (a_hi <= a_lo || t_hi <= t_lo) continue;
            const int rep_key = key[rep];
            const int na = 128, nt = 128;
            const double da = (a_hi - a_lo) / na, dt = (t_hi - t_lo) / nt;
            std::vector<std::uint8_t> raster(static_cast<std::size_t>(na) * nt, 0);
            for (int i = 0; i < na; ++i)
                for (int jm = 0; jm < nt; ++jm) {
                    const double p0 = a_lo + (i + 0.5) * da;
                    const double th = t_lo + (jm + 0.5) * dt;
                    const auto vt = detail::line_to_tangent(p0, wrap_angle(th));
                    if (!vt) continue;
                    broken_ray rr;
                    try {
                        rr = trace_broken_ray(*vt, E, n_max, opts.tol);
                    } catch (const std::domain_error&) {
                        continue;
                    }
                    if (!rr.regular) continue;
                    const tile_path merged = merged_tile_path(rr);
                    std::vector<int> k;
                    for (const reflection_signature& t : merged) {
                        k.push_back(t.l1);
                        k.push_back(t.l2);
                    }
                    k.push_back(rr.signature.l1);
                    k.push_back(rr.signature.l2);
                    const auto it = key_ids.find(k);
                    if (it != key_ids.end() && it->second == rep_key)
                        raster[static_cast<std::size_t>(i) * nt + jm] = 1;
                }
            for (int e = 0; e < opts.erosion; ++e) {
                std::vector<std::uint8_t> next(raster);
                for (int i = 0; i < na; ++i)
                    for (int jm = 0; jm < nt; ++jm) {
                        if (!raster[static_cast<std::size_t>(i) * nt + jm]) continue;
                        auto on = [&](int i2, int j2) {
                            return i2 >= 0 && i2 < na && j2 >= 0 && j2 < nt &&
                                   raster[static_cast<std::size_t>(i2) * nt + j2];
                        };
                        if (!(on(i - 1, jm) && on(i + 1, jm) && on(i, jm - 1) &&
                              on(i, jm + 1)))
                            next[static_cast<std::size_t>(i) * nt + jm] = 0;
                    }
                raster.swap(next);
            }
            for (int k = 0; k < opts.max_rects; ++k) {
                const auto r = detail::max_rectangle(raster, na, nt);
                if (!r) break;
                const auto [i0, i1, m0, m1] = *r;
                if ((i1 - i0 + 1) * (m1 - m0 + 1) < 16) break;
                beam_rect br;
                br.c1_lo = a_lo + i0 * da;
                br.c1_hi = a_lo + (i1 + 1) * da;
                br.c2_lo = t_lo + m0 * dt;
                br.c2_hi = t_lo + (m1 + 1) * dt;
                bm.rects.push_back(br);
                for (int i = i0; i <= i1; ++i)
                    for (int m = m0; m <= m1; ++m)
                        raster[static_cast<std::size_t>(i) * nt + m] = 0;
            }
        }
        if (!bm.rects.empty()) co.beams.push_back(std::move(bm));
    }
    return co;
}

}  // namespace brt
