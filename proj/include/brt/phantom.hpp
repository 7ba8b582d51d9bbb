#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "brt/field.hpp"
#include "brt/rng.hpp"

namespace brt {

/** Squared-cosine window: 1 on the box [margin + ramp, 1 - margin - ramp]^2,
 *  0 outside [margin, 1 - margin]^2, C^1 in between. */
inline double smooth_window(point2 p, double margin, double ramp = 0.1) {
    auto one_dim = [&](double t) {
        const double lo = margin, hi = 1.0 - margin;
        if (t <= lo || t >= hi) return 0.0;
        const double d = std::min(t - lo, hi - t);
        if (d >= ramp) return 1.0;
        const double c = std::cos(0.5 * pi * (1.0 - d / ramp));
        return c * c;
    };
    return one_dim(p.x1) * one_dim(p.x2);
}

/** Disk indicator sampled on pixel centers, antialiased with an 8x8
 *  supersample per pixel so the discrete mass tracks the disk area. */
inline grid_function disk_phantom(int n, point2 center, double radius, double value = 1.0) {
    grid_function g = make_unit_grid(n);
    const double r2 = radius * radius;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const point2 c = g.center(ix, iy);
            int inside = 0;
            for (int sy = 0; sy < 8; ++sy)
                for (int sx = 0; sx < 8; ++sx) {
                    const point2 q{c.x1 + (sx - 3.5) * g.spacing / 8.0,
                                   c.x2 + (sy - 3.5) * g.spacing / 8.0};
                    const point2 d{q.x1 - center.x1, q.x2 - center.x2};
                    if (d.x1 * d.x1 + d.x2 * d.x2 <= r2) ++inside;
                }
            g.at(ix, iy) = value * static_cast<double>(inside) / 64.0;
        }
    return g;
}

/** Sum of k seeded Gaussian bumps, windowed to vanish outside the margin
 *  box. The same seed and grid size give bit-identical values. */
inline grid_function gaussian_bumps(int n, int k, std::uint64_t seed, double margin = 0.15) {
    rng r(seed);
    struct bump_spec {
        point2 c;
        double amp, w2;
    };
    std::vector<bump_spec> bumps;
    for (int i = 0; i < k; ++i) {
        bump_spec b;
        b.c = {r.uniform(margin + 0.1, 0.9 - margin), r.uniform(margin + 0.1, 0.9 - margin)};
        b.amp = r.uniform(0.4, 1.0);
        b.w2 = r.uniform(0.004, 0.02);
        bumps.push_back(b);
    }
    grid_function g = make_unit_grid(n);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const point2 p = g.center(ix, iy);
            double v = 0.0;
            for (const bump_spec& b : bumps) {
                const point2 d{p.x1 - b.c.x1, p.x2 - b.c.x2};
                v += b.amp * std::exp(-(d.x1 * d.x1 + d.x2 * d.x2) / b.w2);
            }
            g.at(ix, iy) = v * smooth_window(p, margin);
        }
    return g;
}

/** Alternating 0/1 blocks, cells x cells of them over the window box,
 *  zero outside it. */
inline grid_function checker_phantom(int n, int cells, double margin = 0.15) {
    grid_function g = make_unit_grid(n);
    const double lo = margin, span = 1.0 - 2.0 * margin;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const point2 p = g.center(ix, iy);
            if (p.x1 < lo || p.x1 > 1.0 - margin || p.x2 < lo || p.x2 > 1.0 - margin)
                continue;
            const int cx = std::min(cells - 1, static_cast<int>((p.x1 - lo) / span * cells));
            const int cy = std::min(cells - 1, static_cast<int>((p.x2 - lo) / span * cells));
            g.at(ix, iy) = static_cast<double>((cx + cy) % 2);
        }
    return g;
}

/** 0/1 pixel mask of the closed window box [margin, 1 - margin]^2. */
inline std::vector<std::uint8_t> window_support(int n, double margin) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 0);
    grid_function g = make_unit_grid(n);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const point2 p = g.center(ix, iy);
            if (p.x1 >= margin && p.x1 <= 1.0 - margin && p.x2 >= margin &&
                p.x2 <= 1.0 - margin)
                mask[static_cast<std::size_t>(iy) * n + ix] = 1;
        }
    return mask;
}

}  // namespace brt
