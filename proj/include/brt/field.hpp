#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "brt/geometry.hpp"
#include "brt/unfolding.hpp"

namespace brt {

constexpr double default_h_sigma = 1.0 / 512.0;
constexpr double default_margin = 0.2;

/** Scalar samples at pixel centers origin + ((ix+0.5)h, (iy+0.5)h), stored
 *  row-major as values[iy*nx + ix]. */
struct grid_function {
    int nx = 0;
    int ny = 0;
    point2 origin{0.0, 0.0};
    double spacing = 0.0;

    std::vector<double> values;

    double& at(int ix, int iy) { return values[static_cast<std::size_t>(iy) * nx + ix]; }
    double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * nx + ix]; }

    point2 center(int ix, int iy) const {
        return {origin.x1 + (ix + 0.5) * spacing, origin.x2 + (iy + 0.5) * spacing};
    }

    double pixel_area() const { return spacing * spacing; }
};

/** n-by-n grid covering the unit square. */
inline grid_function make_unit_grid(int n) {
    if (n <= 0) throw std::invalid_argument("make_unit_grid: n must be positive");
    grid_function g;
    g.nx = g.ny = n;
    g.origin = {0.0, 0.0};
    g.spacing = 1.0 / n;
    g.values.assign(static_cast<std::size_t>(n) * n, 0.0);
    return g;
}

template <typename F>
grid_function make_unit_grid(int n, F&& f) {
    grid_function g = make_unit_grid(n);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) g.at(ix, iy) = f(g.center(ix, iy));
    return g;
}

/** Interpolation stencil at p: up to four (flat index, weight) pairs. Empty
 *  outside the grid's box; weights clamp to the nearest pixel center in the
 *  half-pixel rim. Shared by sampling and its transpose so the two stay exact
 *  adjoints of each other. */
struct bilinear_stencil {
    int count = 0;
    std::size_t idx[4];
    double w[4];
};

inline bilinear_stencil stencil_at(const grid_function& g, point2 p) {
    bilinear_stencil st;
    constexpr double snap = 1e-12;
    const double w = g.nx * g.spacing, h = g.ny * g.spacing;
    double u = p.x1 - g.origin.x1, v = p.x2 - g.origin.x2;
    if (u < -snap || u > w + snap || v < -snap || v > h + snap) return st;
    u = std::clamp(u, 0.0, w);
    v = std::clamp(v, 0.0, h);
    const double fx = std::clamp(u / g.spacing - 0.5, 0.0, static_cast<double>(g.nx - 1));
    const double fy = std::clamp(v / g.spacing - 0.5, 0.0, static_cast<double>(g.ny - 1));
    const int ix = std::min(static_cast<int>(fx), g.nx >= 2 ? g.nx - 2 : 0);
    const int iy = std::min(static_cast<int>(fy), g.ny >= 2 ? g.ny - 2 : 0);
    const double ax = fx - ix, ay = fy - iy;
    const auto flat = [&g](int i, int j) { return static_cast<std::size_t>(j) * g.nx + i; };
    if (g.nx == 1 && g.ny == 1) {
        st.count = 1;
        st.idx[0] = 0;
        st.w[0] = 1.0;
        return st;
    }
    if (g.nx == 1) {
        st.count = 2;
        st.idx[0] = flat(0, iy);
        st.w[0] = 1.0 - ay;
        st.idx[1] = flat(0, iy + 1);
        st.w[1] = ay;
        return st;
    }
    if (g.ny == 1) {
        st.count = 2;
        st.idx[0] = flat(ix, 0);
        st.w[0] = 1.0 - ax;
        st.idx[1] = flat(ix + 1, 0);
        st.w[1] = ax;
        return st;
    }
    st.count = 4;
    st.idx[0] = flat(ix, iy);
    st.w[0] = (1.0 - ax) * (1.0 - ay);
    st.idx[1] = flat(ix + 1, iy);
    st.w[1] = ax * (1.0 - ay);
    st.idx[2] = flat(ix, iy + 1);
    st.w[2] = (1.0 - ax) * ay;
    st.idx[3] = flat(ix + 1, iy + 1);
    st.w[3] = ax * ay;
    return st;
}

/** Bilinear interpolation between pixel centers, constant continuation in the
 *  half-pixel rim, zero outside the grid's box. */
inline double sample(const grid_function& g, point2 p) {
    const bilinear_stencil st = stencil_at(g, p);
    double acc = 0.0;
    for (int i = 0; i < st.count; ++i) acc += st.w[i] * g.values[st.idx[i]];
    return acc;
}

namespace detail {

/** Crossing times of the segment a + t d, t in [t0, t1], with the lines
 *  c = first + k*step along one coordinate, appended to out. */
inline void axis_crossings(double a, double d, double t0, double t1, double first, double step,
                           int count, std::vector<double>& out) {
    if (d == 0.0 || count <= 0) return;
    for (int k = 0; k < count; ++k) {
        const double t = (first + k * step - a) / d;
        if (t > t0 && t < t1) out.push_back(t);
    }
}

}  // namespace detail

/** Integral of the interpolant of g along the segment [a, b]. Exact: the
 *  interpolant restricted to the segment is piecewise quadratic with breaks
 *  at pixel-center lines and at the grid box, and each piece gets Simpson. */
inline double line_integral(const grid_function& g, point2 a, point2 b) {
    const point2 diff = b - a;
    const double len = norm(diff);
    if (len == 0.0) return 0.0;
    const point2 d = (1.0 / len) * diff;

    // Clip to the grid box.
    double t0 = 0.0, t1 = len;
    const double w = g.nx * g.spacing, h = g.ny * g.spacing;
    const double lo1 = g.origin.x1, lo2 = g.origin.x2;
    for (int axis = 0; axis < 2; ++axis) {
        const double p = axis == 0 ? a.x1 : a.x2;
        const double v = axis == 0 ? d.x1 : d.x2;
        const double lo = axis == 0 ? lo1 : lo2;
        const double hi = lo + (axis == 0 ? w : h);
        if (v == 0.0) {
            if (p < lo || p > hi) return 0.0;
        } else {
            const double ta = (lo - p) / v, tb = (hi - p) / v;
            t0 = std::max(t0, std::min(ta, tb));
            t1 = std::min(t1, std::max(ta, tb));
        }
    }
    if (t1 <= t0) return 0.0;

    std::vector<double> ts;
    ts.reserve(static_cast<std::size_t>(g.nx + g.ny + 4));
    ts.push_back(t0);
    ts.push_back(t1);
    detail::axis_crossings(a.x1, d.x1, t0, t1, lo1 + 0.5 * g.spacing, g.spacing, g.nx, ts);
    detail::axis_crossings(a.x2, d.x2, t0, t1, lo2 + 0.5 * g.spacing, g.spacing, g.ny, ts);
    std::sort(ts.begin(), ts.end());

    double total = 0.0;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const double u0 = ts[i], u1 = ts[i + 1];
        if (u1 - u0 <= 1e-15) continue;
        const double um = 0.5 * (u0 + u1);
        const double f0 = sample(g, a + u0 * d);
        const double fm = sample(g, a + um * d);
        const double f1 = sample(g, a + u1 * d);
        total += (u1 - u0) / 6.0 * (f0 + 4.0 * fm + f1);
    }
    return total;
}

/** Attenuation coefficient sigma(x, theta): anisotropic in general, zero
 *  within `margin` of the boundary of the square. */
class sigma_field {
  public:
    sigma_field() = default;

    sigma_field(std::function<double(point2, double)> f, double margin)
        : fn_(std::move(f)), margin_(margin), zero_(false) {
        if (margin <= 0.0) throw std::invalid_argument("sigma_field: margin must be positive");
    }

    static sigma_field zero() { return sigma_field{}; }

    static sigma_field isotropic(std::function<double(point2)> f, double margin) {
        return sigma_field([f = std::move(f)](point2 x, double) { return f(x); }, margin);
    }

    /** Constant `value` on the closed box [lo, hi]. */
    static sigma_field box(double value, point2 lo, point2 hi) {
        const double m = std::min({lo.x1, lo.x2, 1.0 - hi.x1, 1.0 - hi.x2});
        if (m <= 0.0) throw std::invalid_argument("sigma_field: box touches the boundary");
        return sigma_field(
            [=](point2 x, double) {
                return (x.x1 >= lo.x1 && x.x1 <= hi.x1 && x.x2 >= lo.x2 && x.x2 <= hi.x2)
                           ? value
                           : 0.0;
            },
            m);
    }

    /** Bilinear grid coefficient. Rejects grids that are nonzero within
     *  `margin` of the boundary. */
    static sigma_field from_grid(grid_function g, double margin = default_margin) {
        if (margin <= 0.0) throw std::invalid_argument("sigma_field: margin must be positive");
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) {
                const point2 c = g.center(ix, iy);
                const double d =
                    std::min({c.x1, c.x2, 1.0 - c.x1, 1.0 - c.x2});
                if (d < margin && g.at(ix, iy) != 0.0)
                    throw std::invalid_argument(
                        "sigma_field: grid is nonzero inside the boundary margin");
            }
        auto shared = std::make_shared<grid_function>(std::move(g));
        return sigma_field([shared](point2 x, double) { return sample(*shared, x); }, margin);
    }

    /** ca * a + cb * b with the smaller of the two margins. */
    static sigma_field scaled_sum(sigma_field a, sigma_field b, double ca, double cb) {
        if (a.is_zero() && b.is_zero()) return zero();
        const double m = std::min(a.margin(), b.margin());
        return sigma_field(
            [a = std::move(a), b = std::move(b), ca, cb](point2 x, double th) {
                return ca * a(x, th) + cb * b(x, th);
            },
            m);
    }

    double operator()(point2 x, double theta) const { return zero_ ? 0.0 : fn_(x, theta); }

    double margin() const { return margin_; }
    bool is_zero() const { return zero_; }

  private:
    std::function<double(point2, double)> fn_;
    double margin_ = 0.5;
    bool zero_ = true;
};

/** Axis-aligned square K = [m, 1-m]^2 that must contain the supports of the
 *  unknown and of the attenuation. */
struct support_region {
    double margin_K = default_margin;

    bool contains(point2 p) const {
        return p.x1 >= margin_K && p.x1 <= 1.0 - margin_K && p.x2 >= margin_K &&
               p.x2 <= 1.0 - margin_K;
    }

    double boundary_distance() const { return margin_K; }
};

/** Accumulated attenuation A(t) along a broken ray, by the composite midpoint
 *  rule on a step-h lattice anchored at each segment entry. */
struct attenuation_profile {
    const broken_ray* ray = nullptr;
    const sigma_field* sigma = nullptr;
    double h = default_h_sigma;
    std::vector<double> seg_start;               // arclength at each segment entry
    std::vector<double> seg_base;                // A at each segment entry
    std::vector<std::vector<double>> lattice;    // per segment, A increments at k*h

    /** A at arclength t from the ray start. */
    double at(double t) const {
        if (sigma->is_zero()) return 0.0;
        std::size_t j = 0;
        while (j + 1 < seg_start.size() && seg_start[j + 1] <= t) ++j;
        const ray_segment& seg = ray->segments[j];
        const double local = std::clamp(t - seg_start[j], 0.0, seg.length);
        const auto& lat = lattice[j];
        const std::size_t k =
            std::min(static_cast<std::size_t>(local / h), lat.size() - 1);
        const double t_k = static_cast<double>(k) * h;
        const double rest = local - t_k;
        double a = seg_base[j] + lat[k];
        if (rest > 0.0) {
            const point2 mid = seg.entry + (t_k + 0.5 * rest) * direction(seg.dir);
            a += rest * (*sigma)(mid, seg.dir);
        }
        return a;
    }

    double total() const {
        return seg_base.empty() ? 0.0 : at(seg_start.back() + ray->segments.back().length);
    }
};

inline attenuation_profile make_attenuation(const broken_ray& r, const sigma_field& sigma,
                                            double h = default_h_sigma) {
    attenuation_profile p;
    p.ray = &r;
    p.sigma = &sigma;
    p.h = h;
    double start = 0.0, base = 0.0;
    for (const ray_segment& seg : r.segments) {
        p.seg_start.push_back(start);
        p.seg_base.push_back(base);
        const std::size_t m = static_cast<std::size_t>(seg.length / h);
        std::vector<double> lat(m + 1);
        lat[0] = 0.0;
        if (!sigma.is_zero()) {
            const point2 d = direction(seg.dir);
            for (std::size_t k = 0; k < m; ++k) {
                const point2 mid = seg.entry + ((k + 0.5) * h) * d;
                lat[k + 1] = lat[k] + h * sigma(mid, seg.dir);
            }
            const double t_m = static_cast<double>(m) * h;
            if (seg.length > t_m) {
                const point2 mid = seg.entry + (0.5 * (t_m + seg.length)) * d;
                base += lat[m] + (seg.length - t_m) * sigma(mid, seg.dir);
            } else {
                base += lat[m];
            }
        }
        p.lattice.push_back(std::move(lat));
        start += seg.length;
    }
    return p;
}

/** exp(-A(t)): the attenuation factor picked up between the ray start and
 *  arclength t. */
inline double weight_w(const attenuation_profile& p, double t) { return std::exp(-p.at(t)); }

namespace detail {

/** Entry and exit times of the line a + t d with the open unit square. */
inline std::pair<double, double> square_slab(point2 a, point2 d) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int axis = 0; axis < 2; ++axis) {
        const double p = axis == 0 ? a.x1 : a.x2;
        const double v = axis == 0 ? d.x1 : d.x2;
        if (v == 0.0) {
            if (p < 0.0 || p > 1.0) return {1.0, 0.0};
        } else {
            const double ta = -p / v, tb = (1.0 - p) / v;
            t0 = std::max(t0, std::min(ta, tb));
            t1 = std::min(t1, std::max(ta, tb));
        }
    }
    return {t0, t1};
}

/** Midpoint-rule integral of sigma(., theta) along a + t d for t in
 *  [t_lo, t_hi], lattice anchored at t_lo. */
inline double midpoint_sigma(const sigma_field& sigma, point2 a, point2 d, double theta,
                             double t_lo, double t_hi, double h) {
    if (t_hi <= t_lo) return 0.0;
    const std::size_t m = static_cast<std::size_t>((t_hi - t_lo) / h);
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k)
        acc += h * sigma(a + (t_lo + (k + 0.5) * h) * d, theta);
    const double t_m = t_lo + static_cast<double>(m) * h;
    if (t_hi > t_m) acc += (t_hi - t_m) * sigma(a + (0.5 * (t_m + t_hi)) * d, theta);
    return acc;
}

}  // namespace detail

/** Regularized attenuation weight at a point x of segment j, built from the
 *  straightened trajectory: each prior tile contributes the attenuation over
 *  its full crossing of the square, the current tile contributes up to x.
 *  Agrees with exp(-A) whenever sigma honors its boundary margin, but depends
 *  on the trajectory only through the tile list, so it extends smoothly off
 *  the broken ray. */
inline double weight_w_reg(const sigma_field& sigma, point2 x, double theta_fold,
                           const tile_path& tiles, std::size_t j,
                           double h = default_h_sigma) {
    if (sigma.is_zero()) return 1.0;
    if (j >= tiles.size()) throw std::invalid_argument("weight_w_reg: segment index");
    const double eta = unfold_angle(tiles[j], theta_fold);
    const point2 xt = unfold_point(tiles[j], x);
    const point2 D = direction(eta);
    double total = 0.0;
    for (std::size_t i = 0; i <= j; ++i) {
        const point2 a = fold_point_in(tiles[i], xt);
        const point2 d = fold_dir(tiles[i], D);
        const double theta_i = fold_angle(tiles[i], eta);
        const auto [t_in, t_out] = detail::square_slab(a, d);
        if (t_out <= t_in) continue;
        const double upper = i < j ? t_out : 0.0;
        total += detail::midpoint_sigma(sigma, a, d, theta_i, t_in, upper, h);
    }
    return std::exp(-total);
}

}  // namespace brt
