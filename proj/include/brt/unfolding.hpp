#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "brt/geometry.hpp"

namespace brt {

namespace detail {

/** (-1)^l for signed l. */
inline double par(int l) { return (l % 2 == 0) ? 1.0 : -1.0; }

}  // namespace detail

/** Image of a point of the unit square under the reflection that carries it
 *  into tile (l1, l2) of the unfolded plane. */
inline point2 unfold_point(reflection_signature sig, point2 w) {
    const double p1 = detail::par(sig.l1), p2 = detail::par(sig.l2);
    return {sig.l1 + 0.5 * (1.0 - p1) + p1 * w.x1, sig.l2 + 0.5 * (1.0 - p2) + p2 * w.x2};
}

/** Inverse of unfold_point for a known tile. */
inline point2 fold_point_in(reflection_signature sig, point2 wt) {
    const double p1 = detail::par(sig.l1), p2 = detail::par(sig.l2);
    return {-p1 * sig.l1 + 0.5 * (1.0 - p1) + p1 * wt.x1,
            -p2 * sig.l2 + 0.5 * (1.0 - p2) + p2 * wt.x2};
}

/** Direction angle in tile (l1, l2) of a trajectory with folded angle theta. */
inline double unfold_angle(reflection_signature sig, double theta) {
    return wrap_angle(detail::par(sig.l1 + sig.l2) * theta +
                      0.5 * pi * (1.0 - detail::par(sig.l1)));
}

/** Folded direction angle of a trajectory that runs at angle eta in tile
 *  (l1, l2). Inverse of unfold_angle. */
inline double fold_angle(reflection_signature sig, double eta) {
    return wrap_angle(detail::par(sig.l2) *
                      (detail::par(sig.l1) * eta + 0.5 * (1.0 - detail::par(sig.l1)) * pi));
}

/** Direction-vector form of the tile map: diag((-1)^l1, (-1)^l2). Its own
 *  inverse. */
inline point2 unfold_dir(reflection_signature sig, point2 v) {
    return {detail::par(sig.l1) * v.x1, detail::par(sig.l2) * v.x2};
}

inline point2 fold_dir(reflection_signature sig, point2 v) { return unfold_dir(sig, v); }

struct folded_point {
    point2 p;
    reflection_signature tile;
};

/** Tile containing a point of the plane (half-open [l, l+1) convention) and
 *  its preimage in the unit square. */
inline folded_point fold_point(point2 wt) {
    const reflection_signature sig{static_cast<int>(std::floor(wt.x1)),
                                   static_cast<int>(std::floor(wt.x2))};
    return {fold_point_in(sig, wt), sig};
}

/** Periodized extension of a function on the unit square to the plane, even
 *  across every lattice line. */
template <typename F>
auto extend_field(F&& f) {
    return [f = std::forward<F>(f)](point2 wt) { return f(fold_point(wt).p); };
}

/** Extension of a direction-dependent function; the angle argument folds
 *  along with the point. */
template <typename F>
auto extend_field_dir(F&& f) {
    return [f = std::forward<F>(f)](point2 wt, double eta) {
        const folded_point fp = fold_point(wt);
        return f(fp.p, fold_angle(fp.tile, eta));
    };
}

/** Straightened image of a broken ray: one line of the unfolded plane
 *  together with the tiles it traverses and the arclength at which each is
 *  entered. */
struct unfolded_ray {
    point2 start;
    double dir;
    point2 end;
    double length;
    tile_path tiles;
    std::vector<double> breaks;
};

inline unfolded_ray unfold_ray(const broken_ray& r) {
    unfolded_ray u;
    u.start = r.segments.front().entry;
    u.dir = r.segments.front().dir;
    u.tiles = r.tiles;
    u.breaks.reserve(r.segments.size());
    double acc = 0.0;
    for (const ray_segment& seg : r.segments) {
        u.breaks.push_back(acc);
        acc += seg.length;
    }
    u.length = acc;
    u.end = unfold_point(u.tiles.back(), r.end.p);
    return u;
}

/** Folded position at arclength t along an unfolded ray. */
inline point2 position_at(const unfolded_ray& u, double t) {
    const point2 d = direction(u.dir);
    return fold_point(u.start + t * d).p;
}

}  // namespace brt
