#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace brt {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/** Corner capture radius (Euclidean). Boundary hits closer than this to a
 *  vertex are treated as exact corner hits. */
inline constexpr double eps_corner = 1e-9;

/** Default arclength exclusion margin around the endpoints of the accessible
 *  boundary arcs. */
inline constexpr double default_eps_boundary = 1e-6;

/** Default radius for tagging two consecutive reflections that hug the same
 *  corner (the bow-tie configuration). */
inline constexpr double default_near_corner_pair = 1e-3;

struct point2 {
    double x1 = 0.0;
    double x2 = 0.0;
};

inline point2 operator+(point2 a, point2 b) { return {a.x1 + b.x1, a.x2 + b.x2}; }
inline point2 operator-(point2 a, point2 b) { return {a.x1 - b.x1, a.x2 - b.x2}; }
inline point2 operator*(double c, point2 a) { return {c * a.x1, c * a.x2}; }
inline double dot(point2 a, point2 b) { return a.x1 * b.x1 + a.x2 * b.x2; }
inline double norm(point2 a) { return std::hypot(a.x1, a.x2); }
inline double cross(point2 a, point2 b) { return a.x1 * b.x2 - a.x2 * b.x1; }

/** Normalize an angle to [0, 2pi). */
inline double wrap_angle(double theta) {
    double t = std::fmod(theta, two_pi);
    if (t < 0.0) t += two_pi;
    if (t >= two_pi) t = 0.0;
    return t;
}

/** Unit direction vector of an angle. */
inline point2 direction(double theta) { return {std::cos(theta), std::sin(theta)}; }

inline double angle_of(point2 d) { return wrap_angle(std::atan2(d.x2, d.x1)); }

/** Point on the unit square boundary. The arclength parameter s runs
 *  counterclockwise from (0,0): edge 0 is the bottom, 1 the right, 2 the top,
 *  3 the left, with corners at integer s. */
struct boundary_point {
    double s = 0.0;
    int edge = 0;
    bool corner = false;
    point2 p;
};

/** Cartesian point of the boundary parameter s in [0,4). */
inline point2 boundary_param(double s) {
    if (!(s >= 0.0 && s < 4.0)) throw std::domain_error("boundary_param: s outside [0,4)");
    if (s < 1.0) return {s, 0.0};
    if (s < 2.0) return {1.0, s - 1.0};
    if (s < 3.0) return {3.0 - s, 1.0};
    return {0.0, 4.0 - s};
}

/** Outward unit normal of an edge. */
inline point2 outward_normal(int edge) {
    switch (edge) {
        case 0: return {0.0, -1.0};
        case 1: return {1.0, 0.0};
        case 2: return {0.0, 1.0};
        case 3: return {-1.0, 0.0};
    }
    throw std::domain_error("outward_normal: edge outside 0..3");
}

/** Angle of the inward normal of an edge. */
inline double inward_normal_angle(int edge) {
    switch (edge) {
        case 0: return 0.5 * pi;
        case 1: return pi;
        case 2: return 1.5 * pi;
        case 3: return 0.0;
    }
    throw std::domain_error("inward_normal_angle: edge outside 0..3");
}

/** Boundary parameter of a point within 1e-9 of the boundary. */
inline boundary_point point_to_param(point2 p) {
    constexpr double tol = 1e-9;
    const bool x0 = std::abs(p.x1) <= tol, x1 = std::abs(p.x1 - 1.0) <= tol;
    const bool y0 = std::abs(p.x2) <= tol, y1 = std::abs(p.x2 - 1.0) <= tol;
    const bool in_x = p.x1 >= -tol && p.x1 <= 1.0 + tol;
    const bool in_y = p.x2 >= -tol && p.x2 <= 1.0 + tol;

    double s;
    if (y0 && in_x) s = std::clamp(p.x1, 0.0, 1.0);
    else if (x1 && in_y) s = 1.0 + std::clamp(p.x2, 0.0, 1.0);
    else if (y1 && in_x) s = 3.0 - std::clamp(p.x1, 0.0, 1.0);
    else if (x0 && in_y) s = 4.0 - std::clamp(p.x2, 0.0, 1.0);
    else throw std::domain_error("point_to_param: point not on the boundary");
    if (s >= 4.0) s -= 4.0;

    boundary_point bp;
    bp.s = s;
    bp.corner = std::abs(s - std::round(s)) < eps_corner ||
                std::abs(s - 4.0) < eps_corner;
    bp.edge = bp.corner ? static_cast<int>(std::round(s)) % 4
                        : static_cast<int>(std::floor(s)) % 4;
    bp.p = p;
    return bp;
}

/** Base point with a travel direction. Ingoing at the boundary means
 *  -nu . theta_hat > 0 for the outward normal nu. */
struct unit_tangent {
    point2 base;
    double dir = 0.0;
};

/** Open accessible subset E of the boundary, a disjoint union of open
 *  arclength arcs (a,b); b may exceed 4 to wrap past s = 0. */
struct access_set {
    std::vector<std::pair<double, double>> arcs;
    double eps_boundary = default_eps_boundary;

    static access_set full() { return {{{0.0, 1.0}, {1.0, 2.0}, {2.0, 3.0}, {3.0, 4.0}}, default_eps_boundary}; }
    /** Bottom and left edges. */
    static access_set adjacent() { return {{{0.0, 1.0}, {3.0, 4.0}}, default_eps_boundary}; }
    /** Right and left edges. */
    static access_set opposite() { return {{{1.0, 2.0}, {3.0, 4.0}}, default_eps_boundary}; }

    /** Whether s lies strictly inside some arc. */
    bool contains(double s) const {
        for (auto [a, b] : arcs) {
            if ((s > a && s < b) || (s + 4.0 > a && s + 4.0 < b)) return true;
        }
        return false;
    }

    /** Circular arclength distance from s to the nearest arc endpoint. */
    double boundary_distance(double s) const {
        double d = 4.0;
        for (auto [a, b] : arcs) {
            for (double e : {a, b}) {
                double u = std::abs(s - std::fmod(e, 4.0));
                d = std::min({d, u, 4.0 - u});
            }
        }
        return d;
    }

    /** Whether the corner with integer parameter c lies in the closure of an arc. */
    bool corner_in_closure(int c) const {
        const double sc = static_cast<double>(c % 4);
        constexpr double tol = 1e-12;
        for (auto [a, b] : arcs) {
            if ((sc >= a - tol && sc <= b + tol) || (sc + 4.0 >= a - tol && sc + 4.0 <= b + tol))
                return true;
        }
        return false;
    }

    double total_length() const {
        double L = 0.0;
        for (auto [a, b] : arcs) L += b - a;
        return L;
    }
};

/** Travel time and hit point of the ray x + t theta_hat leaving the square.
 *  Hits within eps_corner of a vertex are snapped to it and flagged. */
inline std::pair<double, boundary_point> first_exit(point2 x, double theta) {
    const point2 d = direction(theta);
    constexpr double btol = 1e-12;
    const bool bx0 = std::abs(x.x1) <= btol, bx1 = std::abs(x.x1 - 1.0) <= btol;
    const bool by0 = std::abs(x.x2) <= btol, by1 = std::abs(x.x2 - 1.0) <= btol;
    if ((bx0 && d.x1 <= btol) || (bx1 && d.x1 >= -btol) || (by0 && d.x2 <= btol) ||
        (by1 && d.x2 >= -btol)) {
        if (bx0 || bx1 || by0 || by1)
            throw std::domain_error("first_exit: direction does not enter the square");
    }
    if (x.x1 < -btol || x.x1 > 1.0 + btol || x.x2 < -btol || x.x2 > 1.0 + btol)
        throw std::domain_error("first_exit: base point outside the closed square");

    const double inf = std::numeric_limits<double>::infinity();
    const double tx = d.x1 > 0.0 ? (1.0 - x.x1) / d.x1 : (d.x1 < 0.0 ? -x.x1 / d.x1 : inf);
    const double ty = d.x2 > 0.0 ? (1.0 - x.x2) / d.x2 : (d.x2 < 0.0 ? -x.x2 / d.x2 : inf);
    const double t = std::min(tx, ty);

    point2 p{x.x1 + t * d.x1, x.x2 + t * d.x2};
    int edge;
    if (tx <= ty) {
        p.x1 = d.x1 > 0.0 ? 1.0 : 0.0;
        p.x2 = std::clamp(p.x2, 0.0, 1.0);
        edge = d.x1 > 0.0 ? 1 : 3;
    } else {
        p.x2 = d.x2 > 0.0 ? 1.0 : 0.0;
        p.x1 = std::clamp(p.x1, 0.0, 1.0);
        edge = d.x2 > 0.0 ? 2 : 0;
    }

    const double cx = std::round(p.x1), cy = std::round(p.x2);
    boundary_point bp;
    if (std::hypot(p.x1 - cx, p.x2 - cy) < eps_corner) {
        bp.p = {cx, cy};
        bp.corner = true;
        const int corner_s = (cy == 0.0) ? (cx == 0.0 ? 0 : 1) : (cx == 0.0 ? 3 : 2);
        bp.s = static_cast<double>(corner_s);
        bp.edge = corner_s;
    } else {
        bp.p = p;
        bp.corner = false;
        bp.edge = edge;
        switch (edge) {
            case 0: bp.s = p.x1; break;
            case 1: bp.s = 1.0 + p.x2; break;
            case 2: bp.s = 3.0 - p.x1; break;
            default: bp.s = 4.0 - p.x2; break;
        }
    }
    return {t, bp};
}

/** Specular reflection law: horizontal edges negate theta, vertical edges map
 *  theta to pi - theta, corners reverse the direction. */
inline double reflect_direction(double theta, const boundary_point& hit) {
    if (hit.corner) return wrap_angle(theta + pi);
    if (hit.edge == 0 || hit.edge == 2) return wrap_angle(-theta);
    return wrap_angle(pi - theta);
}

/** One step of the billiard map on ingoing boundary tangents. */
inline unit_tangent billiard_map(const unit_tangent& v) {
    auto [t, hit] = first_exit(v.base, v.dir);
    (void)t;
    return {hit.p, reflect_direction(v.dir, hit)};
}

/** Signed counts (l1, l2) of vertical and horizontal unfoldings; identifies a
 *  tile of the reflected tiling of the plane. */
struct reflection_signature {
    int l1 = 0;
    int l2 = 0;
    friend bool operator==(reflection_signature, reflection_signature) = default;
};

/** Tiles visited by an unfolded trajectory, one per segment. */
using tile_path = std::vector<reflection_signature>;

struct tolerances {
    double eps_corner = brt::eps_corner;
    double eps_boundary = default_eps_boundary;
    double near_corner_pair = default_near_corner_pair;
};

struct ray_segment {
    point2 entry;
    point2 exit;
    double dir = 0.0;
    double length = 0.0;
};

enum class termination_kind { hit_e, hit_boundary_of_e, exceeded_n_max, corner_start };

/** A traced broken ray. corner_events lists segment indices whose entry point
 *  is a corner (index 0 marks a corner start); near_corner_pairs lists pairs
 *  of consecutive reflection indices hugging one corner. */
struct broken_ray {
    unit_tangent start;
    std::vector<ray_segment> segments;
    std::vector<boundary_point> reflection_points;
    std::vector<int> corner_events;
    std::vector<std::pair<int, int>> near_corner_pairs;
    tile_path tiles;
    reflection_signature signature;
    int n_reflections = 0;
    bool regular = false;
    termination_kind termination = termination_kind::hit_e;
    double total_length = 0.0;
    boundary_point end;
};

namespace detail {

inline int sign_of(double v) { return v >= 0.0 ? 1 : -1; }

/** Core tracer shared by boundary-started and interior-started trajectories.
 *  start_corner < 0 means the trajectory did not start at a corner. */
inline broken_ray trace_from(point2 cur, double theta, const access_set& E, int n_max,
                             const tolerances& tol, int start_corner) {
    broken_ray r;
    r.start = {cur, wrap_angle(theta)};
    theta = r.start.dir;
    r.tiles.push_back({0, 0});
    if (start_corner >= 0) r.corner_events.push_back(0);

    const point2 chord_dir = direction(theta);
    int h = 0, v = 0;
    const int sx = sign_of(chord_dir.x1), sy = sign_of(chord_dir.x2);

    const auto edge_signature = [&](int edge) {
        return (edge == 1 || edge == 3) ? reflection_signature{h + sx, v}
                                        : reflection_signature{h, v + sy};
    };
    const auto tag_near_corner_pair = [&]() {
        const int k = static_cast<int>(r.reflection_points.size()) - 1;
        if (k < 1) return;
        const point2 a = r.reflection_points[k - 1].p, b = r.reflection_points[k].p;
        const point2 corner{std::round(b.x1), std::round(b.x2)};
        if (norm(a - corner) < tol.near_corner_pair && norm(b - corner) < tol.near_corner_pair &&
            std::round(a.x1) == corner.x1 && std::round(a.x2) == corner.x2) {
            r.near_corner_pairs.emplace_back(k - 1, k);
        }
    };

    while (true) {
        auto [t, hit] = first_exit(cur, theta);
        r.segments.push_back({cur, hit.p, theta, t});
        r.total_length += t;
        r.end = hit;
        const point2 d = direction(theta);

        // A hit flagged corner is a genuine corner event only when the ray
        // approaches the vertex in both coordinates; wall-hugging grazes that
        // merely land near a vertex stay ordinary edge hits.
        bool corner_event = false;
        if (hit.corner) {
            const int ax = hit.p.x1 == 1.0 ? 1 : -1, ay = hit.p.x2 == 1.0 ? 1 : -1;
            corner_event = ax * d.x1 > 0.0 && ay * d.x2 > 0.0;
        }

        if (corner_event) {
            const int c = static_cast<int>(std::round(hit.s));
            if (E.contains(hit.s)) {
                r.termination = termination_kind::hit_e;
                r.regular = true;
                r.signature = {h + sx, v + sy};
                break;
            }
            if (start_corner >= 0 && c == start_corner) {
                r.termination = termination_kind::corner_start;
                r.signature = {h + sx, v + sy};
                break;
            }
            if (r.n_reflections >= n_max) {
                r.termination = termination_kind::exceeded_n_max;
                r.signature = {h + sx, v + sy};
                break;
            }
            r.reflection_points.push_back(hit);
            r.corner_events.push_back(static_cast<int>(r.segments.size()));
            r.n_reflections += 1;
            theta = reflect_direction(theta, hit);
            h += sx;
            v += sy;
            r.tiles.push_back({h, v});
            cur = hit.p;
            continue;
        }

        int edge = hit.edge;
        if (hit.corner) {
            // Recover the wall the grazing ray actually crossed.
            const double inf = std::numeric_limits<double>::infinity();
            const point2 e = r.segments.back().entry;
            const double tx = d.x1 > 0.0 ? (1.0 - e.x1) / d.x1 : (d.x1 < 0.0 ? -e.x1 / d.x1 : inf);
            const double ty = d.x2 > 0.0 ? (1.0 - e.x2) / d.x2 : (d.x2 < 0.0 ? -e.x2 / d.x2 : inf);
            edge = tx <= ty ? (d.x1 > 0.0 ? 1 : 3) : (d.x2 > 0.0 ? 2 : 0);
        }

        if (E.boundary_distance(hit.s) < tol.eps_boundary) {
            r.termination = termination_kind::hit_boundary_of_e;
            r.signature = edge_signature(edge);
            break;
        }
        if (E.contains(hit.s)) {
            r.termination = termination_kind::hit_e;
            r.regular = true;
            r.signature = edge_signature(edge);
            break;
        }
        if (r.n_reflections >= n_max) {
            r.termination = termination_kind::exceeded_n_max;
            r.signature = edge_signature(edge);
            break;
        }

        boundary_point refl = hit;
        refl.edge = edge;
        refl.corner = false;
        r.reflection_points.push_back(refl);
        r.n_reflections += 1;
        theta = reflect_direction(theta, refl);
        if (edge == 1 || edge == 3) h += sx; else v += sy;
        r.tiles.push_back({h, v});
        tag_near_corner_pair();
        cur = hit.p;
    }
    return r;
}

}  // namespace detail

/** Trace the broken ray of an ingoing tangent based on E until it terminates
 *  on E, grazes an endpoint of E, or exhausts the reflection budget. */
inline broken_ray trace_broken_ray(const unit_tangent& v, const access_set& E, int n_max,
                                   const tolerances& tol = {}) {
    boundary_point bp = point_to_param(v.base);
    int start_corner = -1;
    point2 base = v.base;
    if (bp.corner) {
        const int c = static_cast<int>(std::round(bp.s)) % 4;
        if (!E.corner_in_closure(c))
            throw std::domain_error("trace_broken_ray: corner base not in the closure of E");
        start_corner = c;
        base = boundary_param(static_cast<double>(c));
        const point2 d = direction(v.dir);
        const double ix = base.x1 == 0.0 ? 1.0 : -1.0;
        const double iy = base.x2 == 0.0 ? 1.0 : -1.0;
        if (ix * d.x1 <= 0.0 || iy * d.x2 <= 0.0)
            throw std::domain_error("trace_broken_ray: corner base direction not ingoing");
    } else {
        if (!E.contains(bp.s) || E.boundary_distance(bp.s) < tol.eps_boundary)
            throw std::domain_error("trace_broken_ray: base point not in the interior of E");
        base = boundary_param(bp.s);
        if (-dot(outward_normal(bp.edge), direction(v.dir)) <= 0.0)
            throw std::domain_error("trace_broken_ray: base direction not ingoing");
    }
    broken_ray r = detail::trace_from(base, v.dir, E, n_max, tol, start_corner);
    r.start = {base, wrap_angle(v.dir)};
    return r;
}

/** Maximal trajectory through an interior point: traced backward to its
 *  measurement start on E, then forward to its termination. x sits at
 *  arclength x_offset on segment x_segment of ray. */
struct interior_trace {
    broken_ray ray;
    int x_segment = 0;
    double x_offset = 0.0;
    double x_arclength = 0.0;
    bool start_found = false;
};

/** Extend (x, theta) backward to the first E hit and retrace forward through x.
 *  start_found is false when the backward trajectory never reaches E regularly
 *  within the reflection budget. */
inline interior_trace trace_through(point2 x, double theta, const access_set& E, int n_max,
                                    const tolerances& tol = {}) {
    interior_trace out;
    if (!(x.x1 > 0.0 && x.x1 < 1.0 && x.x2 > 0.0 && x.x2 < 1.0))
        throw std::domain_error("trace_through: point not in the open square");
    broken_ray back = detail::trace_from(x, wrap_angle(theta + pi), E, n_max, tol, -1);
    if (back.termination != termination_kind::hit_e) {
        out.ray = std::move(back);
        return out;
    }
    const double rev = wrap_angle(back.segments.back().dir + pi);
    out.ray = detail::trace_from(back.end.p, rev, E, n_max, tol, -1);
    out.start_found = true;
    out.x_segment = static_cast<int>(back.segments.size()) - 1;
    out.x_offset = back.segments.front().length;
    out.x_arclength = back.total_length;
    return out;
}

/** Whether the maximal trajectory through (x, theta) terminates on E in both
 *  directions with at most n_max reflections in total, regularly. */
inline bool visible(point2 x, double theta, const access_set& E, int n_max,
                    const tolerances& tol = {}) {
    interior_trace it = trace_through(x, theta, E, n_max, tol);
    return it.start_found && it.ray.regular;
}

/** Intersection of the backward ray {y + t eta_hat, t <= 0} with the circle
 *  about (1/2,1/2) of radius sqrt(2)/2, taking the root with the largest t. */
inline point2 ball_last_intersection(point2 y, double eta) {
    const point2 c{0.5, 0.5};
    const point2 q = y - c;
    const double r2 = 0.5;
    if (dot(q, q) > r2 + 1e-12)
        throw std::domain_error("ball_last_intersection: point outside the circumscribed ball");
    const point2 d = direction(eta);
    const double b = dot(d, q);
    const double disc = b * b - (dot(q, q) - r2);
    const double sq = std::sqrt(std::max(disc, 0.0));
    const double t1 = -b - sq, t2 = -b + sq;
    double t;
    if (t2 <= 1e-12) t = t2;
    else t = t1;
    return y + t * d;
}

namespace detail {

/** Entry root (smaller t) of a full line a + t d_hat against the circumscribed
 *  circle; the line must meet the circle. */
inline double line_ball_entry_time(point2 a, point2 d) {
    const point2 q = a - point2{0.5, 0.5};
    const double b = dot(d, q);
    const double disc = b * b - (dot(q, q) - 0.5);
    if (disc < 0.0)
        throw std::domain_error("line_ball_entry_time: line misses the circumscribed ball");
    return -b - std::sqrt(disc);
}

}  // namespace detail

/** Tile path with each bow-tie pair collapsed to a single diagonal step, so
 *  that near-corner double reflections and exact corner reflections share one
 *  path. */
inline tile_path merged_tile_path(const broken_ray& r) {
    if (r.near_corner_pairs.empty()) return r.tiles;
    std::vector<bool> drop(r.tiles.size(), false);
    for (auto [i, j] : r.near_corner_pairs) {
        (void)i;
        if (j < static_cast<int>(r.tiles.size())) drop[j] = true;
    }
    tile_path out;
    for (std::size_t k = 0; k < r.tiles.size(); ++k)
        if (!drop[k]) out.push_back(r.tiles[k]);
    return out;
}

}  // namespace brt
