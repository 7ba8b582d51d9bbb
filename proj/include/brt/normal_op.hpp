#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "brt/cutoff.hpp"
#include "brt/field.hpp"
#include "brt/geometry.hpp"
#include "brt/transform.hpp"
#include "brt/unfolding.hpp"

namespace brt {

namespace detail {

/** Neumaier compensated accumulator for long inner products. */
struct neumaier {
    double s = 0.0, c = 0.0;
    void add(double x) {
        const double t = s + x;
        c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
        s = t;
    }
    double value() const { return s + c; }
};

}  // namespace detail

/** Compensated image-space inner product, weighted by the pixel area. */
inline double image_dot(const grid_function& a, const grid_function& b) {
    if (a.values.size() != b.values.size())
        throw std::invalid_argument("image_dot: incompatible grids");
    detail::neumaier acc;
    for (std::size_t i = 0; i < a.values.size(); ++i) acc.add(a.values[i] * b.values[i]);
    return acc.value() * a.pixel_area();
}

/** Compensated fan-space inner product over unmasked cells, weighted by the
 *  quadrature weights cos(phi) ds dphi. A cell masked in either operand is
 *  skipped. */
inline double sinogram_dot(const sinogram_grid& a, const sinogram_grid& b) {
    if (a.values.size() != b.values.size() || a.n_phi != b.n_phi)
        throw std::invalid_argument("sinogram_dot: incompatible grids");
    detail::neumaier acc;
    for (int is = 0; is < a.n_s(); ++is)
        for (int m = 0; m < a.n_phi; ++m) {
            const std::size_t c = a.cell(is, m);
            if (a.mask[c] || b.mask[c]) continue;
            acc.add(a.values[c] * b.values[c] * a.weight(is, m));
        }
    return acc.value();
}

/** Bilinear interpolation of the sinogram at an ingoing tangent. Indices
 *  clamp at arc and angular edges; masked cells read as zero. */
inline double sinogram_interp(const sinogram_grid& sg, unit_tangent v) {
    boundary_point bp;
    try {
        bp = point_to_param(v.base);
    } catch (const std::domain_error&) {
        return 0.0;
    }
    const double phi = detail::wrap_pm(v.dir - inward_normal_angle(bp.edge));
    if (std::abs(phi) >= 0.5 * pi) return 0.0;
    int arc = -1;
    double s = bp.s;
    for (std::size_t a = 0; a < sg.E.arcs.size(); ++a) {
        const double lo = sg.E.arcs[a].first, hi = sg.E.arcs[a].second;
        if (s >= lo && s <= hi) arc = static_cast<int>(a);
        if (s + 4.0 >= lo && s + 4.0 <= hi) {
            arc = static_cast<int>(a);
            s += 4.0;
        }
        if (arc >= 0) break;
    }
    if (arc < 0) return 0.0;
    const auto lo_it = std::lower_bound(sg.arc_of.begin(), sg.arc_of.end(), arc);
    const auto hi_it = std::upper_bound(sg.arc_of.begin(), sg.arc_of.end(), arc);
    const int first = static_cast<int>(lo_it - sg.arc_of.begin());
    const int count = static_cast<int>(hi_it - lo_it);
    if (count == 0) return 0.0;

    const double su = (s - sg.E.arcs[arc].first) / sg.ds[first] - 0.5;
    const int i0 = static_cast<int>(std::floor(su));
    const double fs = su - i0;
    const double pu = (phi + 0.5 * pi) / sg.dphi() - 0.5;
    const int m0 = static_cast<int>(std::floor(pu));
    const double fp = pu - m0;

    auto at = [&](int i, int m) {
        i = std::clamp(i, 0, count - 1);
        m = std::clamp(m, 0, sg.n_phi - 1);
        const std::size_t c = sg.cell(first + i, m);
        return sg.mask[c] ? 0.0 : sg.values[c];
    };
    return (1.0 - fs) * (1.0 - fp) * at(i0, m0) + fs * (1.0 - fp) * at(i0 + 1, m0) +
           (1.0 - fs) * fp * at(i0, m0 + 1) + fs * fp * at(i0 + 1, m0 + 1);
}

/** Transpose of the transform against the fan and pixel inner products:
 *  every unmasked cell scatters weight(v) * value * cos(phi) ds dphi times
 *  the trapezoid node coefficients back through the bilinear stencil. Sharing
 *  the node walker with the forward pass makes the pairing
 *  <I f, g>_fan = <f, B g>_image exact up to roundoff. */
template <class WeightFn>
inline grid_function backproject_discrete(const sinogram_grid& sg, int nx,
                                          const sigma_field& sigma, WeightFn&& weight_of,
                                          double h_sigma = default_h_sigma,
                                          int n_threads = 1, const tolerances& tol = {}) {
    grid_function out = make_unit_grid(nx);
    const double inv_area = 1.0 / out.pixel_area();
    const int rows = sg.n_s();

    auto run = [&](int is_begin, int is_end, grid_function& acc) {
        std::vector<double> ts;
        for (int is = is_begin; is < is_end; ++is)
            for (int m = 0; m < sg.n_phi; ++m) {
                const std::size_t c = sg.cell(is, m);
                if (sg.mask[c]) continue;
                const unit_tangent v = sg.ray(is, m);
                const double factor =
                    sg.weight(is, m) * weight_of(v) * sg.values[c] * inv_area;
                if (factor == 0.0) continue;
                broken_ray r;
                try {
                    r = trace_broken_ray(v, sg.E, sg.n_max, tol);
                } catch (const std::domain_error&) {
                    continue;
                }
                if (!r.regular) continue;
                const attenuation_profile prof = make_attenuation(r, sigma, h_sigma);
                detail::for_each_ray_node(
                    acc, r, prof, h_sigma, ts, [&](point2 p, double cw, std::size_t) {
                        const bilinear_stencil st = stencil_at(acc, p);
                        for (int k = 0; k < st.count; ++k)
                            acc.values[st.idx[k]] += factor * cw * st.w[k];
                    });
            }
    };

    if (n_threads <= 1) {
        run(0, rows, out);
        return out;
    }
    const int workers = std::min(n_threads, std::max(1, rows));
    std::vector<grid_function> partial(workers, make_unit_grid(nx));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        const int b = rows * w / workers, e = rows * (w + 1) / workers;
        pool.emplace_back([&, b, e, w] { run(b, e, partial[w]); });
    }
    for (std::thread& t : pool) t.join();
    for (int w = 0; w < workers; ++w)
        for (std::size_t i = 0; i < out.values.size(); ++i)
            out.values[i] += partial[w].values[i];
    return out;
}

/** Backprojection in its angular form: at each pixel center x, average over
 *  n_dir directions of weight * alpha * g at the measurement coordinates of
 *  the trajectory through (x, theta), times dtheta = 2 pi / n_dir.
 *  Irregular or unreachable trajectories contribute zero. */
template <class WeightFn>
inline grid_function backproject_analytic(const sinogram_grid& sg, int nx,
                                          const sigma_field& sigma, WeightFn&& weight_of,
                                          int n_dir = 360,
                                          double h_sigma = default_h_sigma,
                                          const tolerances& tol = {}) {
    grid_function out = make_unit_grid(nx);
    const double dth = two_pi / n_dir;
    for (int iy = 0; iy < out.ny; ++iy)
        for (int ix = 0; ix < out.nx; ++ix) {
            const point2 x = out.center(ix, iy);
            double acc = 0.0;
            for (int i = 0; i < n_dir; ++i) {
                const double theta = (i + 0.5) * dth;
                interior_trace it;
                try {
                    it = trace_through(x, theta, sg.E, sg.n_max, tol);
                } catch (const std::domain_error&) {
                    continue;
                }
                if (!it.start_found || !it.ray.regular) continue;
                const unit_tangent v{it.ray.segments.front().entry,
                                     it.ray.segments.front().dir};
                const double g = sinogram_interp(sg, v);
                if (g == 0.0) continue;
                const attenuation_profile prof = make_attenuation(it.ray, sigma, h_sigma);
                acc += weight_w(prof, it.x_arclength) * weight_of(v) * g;
            }
            out.at(ix, iy) = acc * dth;
        }
    return out;
}

/** Discrete normal operator: forward transform, fan-space multiplication by
 *  weight_of (typically alpha squared), discrete backprojection. */
template <class WeightFn>
inline grid_function normal_apply(const grid_function& f, const sigma_field& sigma,
                                  sinogram_grid sg, WeightFn&& weight_of,
                                  double h_sigma = default_h_sigma, int n_threads = 1,
                                  const tolerances& tol = {}) {
    forward_all(f, sigma, sg, h_sigma, n_threads, tol);
    return backproject_discrete(sg, f.nx, sigma, weight_of, h_sigma, n_threads, tol);
}

struct normal_parts {
    grid_function total, ballistic, reflect;
};

/** Normal operator with its cross-segment structure split out: the ballistic
 *  part pairs each trajectory segment with itself, the reflect part pairs
 *  distinct segments. ballistic + reflect reproduces the total exactly. */
template <class WeightFn>
inline normal_parts normal_split(const grid_function& f, const sigma_field& sigma,
                                 const sinogram_grid& sg, WeightFn&& weight_of,
                                 double h_sigma = default_h_sigma, int n_threads = 1,
                                 const tolerances& tol = {}) {
    const int nx = f.nx;
    normal_parts out{make_unit_grid(nx), make_unit_grid(nx), make_unit_grid(nx)};
    const double inv_area = 1.0 / out.total.pixel_area();
    const int rows = sg.n_s();

    auto run = [&](int is_begin, int is_end, normal_parts& acc) {
        std::vector<double> ts;
        std::vector<double> partials;
        for (int is = is_begin; is < is_end; ++is)
            for (int m = 0; m < sg.n_phi; ++m) {
                const unit_tangent v = sg.ray(is, m);
                broken_ray r;
                try {
                    r = trace_broken_ray(v, sg.E, sg.n_max, tol);
                } catch (const std::domain_error&) {
                    continue;
                }
                if (!r.regular) continue;
                const double base = sg.weight(is, m) * weight_of(v) * inv_area;
                if (base == 0.0) continue;
                const attenuation_profile prof = make_attenuation(r, sigma, h_sigma);
                partials.assign(r.segments.size(), 0.0);
                detail::for_each_ray_node(f, r, prof, h_sigma, ts,
                                          [&](point2 p, double cw, std::size_t j) {
                                              partials[j] += cw * sample(f, p);
                                          });
                double total = 0.0;
                for (double a : partials) total += a;
                detail::for_each_ray_node(
                    f, r, prof, h_sigma, ts, [&](point2 p, double cw, std::size_t j) {
                        const bilinear_stencil st = stencil_at(acc.total, p);
                        const double bput = base * cw * partials[j];
                        const double tput = base * cw * total;
                        for (int k = 0; k < st.count; ++k) {
                            acc.total.values[st.idx[k]] += tput * st.w[k];
                            acc.ballistic.values[st.idx[k]] += bput * st.w[k];
                            acc.reflect.values[st.idx[k]] += (tput - bput) * st.w[k];
                        }
                    });
            }
    };

    if (n_threads <= 1) {
        run(0, rows, out);
        return out;
    }
    const int workers = std::min(n_threads, std::max(1, rows));
    std::vector<normal_parts> partial;
    partial.reserve(workers);
    for (int w = 0; w < workers; ++w)
        partial.push_back({make_unit_grid(nx), make_unit_grid(nx), make_unit_grid(nx)});
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        const int b = rows * w / workers, e = rows * (w + 1) / workers;
        pool.emplace_back([&, b, e, w] { run(b, e, partial[w]); });
    }
    for (std::thread& t : pool) t.join();
    for (int w = 0; w < workers; ++w)
        for (std::size_t i = 0; i < out.total.values.size(); ++i) {
            out.total.values[i] += partial[w].total.values[i];
            out.ballistic.values[i] += partial[w].ballistic.values[i];
            out.reflect.values[i] += partial[w].reflect.values[i];
        }
    return out;
}

/** Schwartz kernel of the reflect part: for every beam and every ordered pair
 *  of distinct segments (j1, j2) of its pattern, unfold x through tile j1 and
 *  y through tile j2; the pair contributes
 *      alpha^2 * w_j1(x, theta) * w_j2(y, eta) / |y~ - x~|,
 *  where theta and eta are the folded travel directions of the straightened
 *  line through the two copies and |y~ - x~| is the Jacobian of the change
 *  from (direction, arclength) to the area element at y. */
inline double reflect_kernel(const cutoff& co, const sigma_field& sigma, point2 x,
                             point2 y, double h_sigma = default_h_sigma) {
    double acc = 0.0;
    for (const beam& b : co.beams) {
        const std::size_t n = b.tiles.size();
        for (std::size_t j1 = 0; j1 < n; ++j1)
            for (std::size_t j2 = 0; j2 < n; ++j2) {
                if (j1 == j2) continue;
                const point2 xt = unfold_point(b.tiles[j1], x);
                const point2 yt = unfold_point(b.tiles[j2], y);
                const point2 dv = yt - xt;
                const double dist = std::sqrt(dot(dv, dv));
                if (dist < 1e-14) continue;
                // Travel runs from the earlier segment to the later one.
                const double th_unf =
                    j1 < j2 ? std::atan2(dv.x2, dv.x1) : std::atan2(-dv.x2, -dv.x1);
                const double theta_x = fold_angle(b.tiles[j1], th_unf);
                const double eta_y = fold_angle(b.tiles[j2], th_unf);
                const double a = alpha_pullback(b, x, theta_x, j1);
                if (a == 0.0) continue;
                acc += a * a * weight_w_reg(sigma, x, theta_x, b.tiles, j1, h_sigma) *
                       weight_w_reg(sigma, y, eta_y, b.tiles, j2, h_sigma) / dist;
            }
    }
    return acc;
}

struct symbol_value {
    double raw = 0.0;         // angular sum, 2 pi sum over directions and segments
    double normalized = 0.0;  // raw / |xi|
};

/** Principal symbol of the cutoff normal operator at (x, xi): the two unit
 *  directions normal to xi are pulled back through every beam segment and
 *  weighted by alpha^2 w^2. With full data, no attenuation, and alpha = 1
 *  the raw value is 4 pi. */
inline symbol_value principal_symbol(const cutoff& co, const sigma_field& sigma, point2 x,
                                     point2 xi, double h_sigma = default_h_sigma) {
    const double nxi = std::sqrt(dot(xi, xi));
    if (nxi <= 0.0) throw std::invalid_argument("principal_symbol: zero covector");
    const double base = std::atan2(xi.x1, -xi.x2);  // direction of xi rotated by +pi/2
    double acc = 0.0;
    for (double theta : {base, base + pi}) {
        theta = wrap_angle(theta);
        for (const beam& b : co.beams)
            for (std::size_t j = 0; j < b.tiles.size(); ++j) {
                const double a = alpha_pullback(b, x, theta, j);
                if (a == 0.0) continue;
                const double w = weight_w_reg(sigma, x, theta, b.tiles, j, h_sigma);
                acc += a * a * w * w;
            }
    }
    symbol_value out;
    out.raw = two_pi * acc;
    out.normalized = out.raw / nxi;
    return out;
}

/** Binary map of the points all of whose directions lead to regular measured
 *  trajectories: out(ix, iy) = 1 when every one of n_dir equispaced
 *  directions through the pixel center is visible. */
inline grid_function visible_set_map(const access_set& E, int n_max, int n,
                                     int n_dir = 360, const tolerances& tol = {}) {
    grid_function out = make_unit_grid(n);
    const double dth = two_pi / n_dir;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const point2 x = out.center(ix, iy);
            bool all = true;
            for (int i = 0; i < n_dir && all; ++i) {
                try {
                    all = visible(x, (i + 0.5) * dth, E, n_max, tol);
                } catch (const std::domain_error&) {
                    all = false;
                }
            }
            out.at(ix, iy) = all ? 1.0 : 0.0;
        }
    return out;
}

}  // namespace brt
