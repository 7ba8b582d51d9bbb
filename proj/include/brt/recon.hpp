#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "brt/cutoff.hpp"
#include "brt/field.hpp"
#include "brt/normal_op.hpp"
#include "brt/rng.hpp"
#include "brt/transform.hpp"

namespace brt {

/** Discrete H1 norm: L2 of the values plus L2 of forward-difference
 *  gradients, one-sided on the last row and column. */
inline double h1_norm(const grid_function& g) {
    if (g.nx < 2 || g.ny < 2) throw std::invalid_argument("h1_norm: grid too small");
    const double inv_h = 1.0 / g.spacing;
    detail::neumaier acc;
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const double v = g.at(ix, iy);
            const double gx = (ix + 1 < g.nx ? g.at(ix + 1, iy) - v : v - g.at(ix - 1, iy)) * inv_h;
            const double gy = (iy + 1 < g.ny ? g.at(ix, iy + 1) - v : v - g.at(ix, iy - 1)) * inv_h;
            acc.add(v * v + gx * gx + gy * gy);
        }
    return std::sqrt(acc.value() * g.pixel_area());
}

namespace detail {

/** The measurement operator K = alpha * I restricted to a pixel support,
 *  with its transpose. Forward and transpose share the cell mask and the
 *  per-cell cutoff values, so the pair is exactly adjoint for the fan and
 *  pixel inner products. */
struct cutoff_system {
    const sigma_field* sigma;
    const cutoff* co;
    sinogram_grid shape;                // geometry plus the union cell mask
    std::vector<double> alpha;          // cutoff at each unmasked cell
    std::vector<std::uint8_t> support;  // empty means the whole square
    int nx;
    double h_sigma;
    int n_threads;
    tolerances tol;

    cutoff_system(const sinogram_grid& data, int nx_, const sigma_field& sig, const cutoff& c,
                  std::vector<std::uint8_t> support_, double h, int threads,
                  const tolerances& tol_)
        : sigma(&sig), co(&c), shape(data), support(std::move(support_)), nx(nx_),
          h_sigma(h), n_threads(threads), tol(tol_) {
        if (data.n_max != c.n_max || data.E.arcs != c.E.arcs)
            throw std::domain_error("cutoff_system: sinogram and cutoff geometry disagree");
        if (!support.empty() && support.size() != static_cast<std::size_t>(nx) * nx)
            throw std::invalid_argument("cutoff_system: support size");
        const grid_function zero = make_unit_grid(nx);
        forward_all(zero, *sigma, shape, h_sigma, n_threads, tol);
        for (std::size_t cell = 0; cell < shape.values.size(); ++cell)
            if (data.mask[cell]) shape.mask[cell] = 1;
        alpha.assign(shape.values.size(), 0.0);
        for (int is = 0; is < shape.n_s(); ++is)
            for (int m = 0; m < shape.n_phi; ++m) {
                const std::size_t cell = shape.cell(is, m);
                if (!shape.mask[cell]) alpha[cell] = co->alpha(shape.ray(is, m));
            }
    }

    void project(grid_function& g) const {
        if (support.empty()) return;
        for (std::size_t i = 0; i < g.values.size(); ++i)
            if (!support[i]) g.values[i] = 0.0;
    }

    void forward(const grid_function& f, sinogram_grid& out) const {
        forward_all(f, *sigma, out, h_sigma, n_threads, tol);
        out.mask = shape.mask;
        for (std::size_t cell = 0; cell < out.values.size(); ++cell)
            out.values[cell] = out.mask[cell] ? 0.0 : out.values[cell] * alpha[cell];
    }

    grid_function transpose(const sinogram_grid& r) const {
        grid_function g = backproject_discrete(
            r, nx, *sigma, [&](unit_tangent v) { return co->alpha(v); }, h_sigma,
            n_threads, tol);
        project(g);
        return g;
    }
};

}  // namespace detail

enum class solver_kind { cgls, landweber };

struct recon_options {
    int max_iters = 200;
    double tol = 1e-10;     // stop when the residual falls below tol * initial
    double abs_tol = 0.0;   // or below this absolute fan norm
    solver_kind solver = solver_kind::cgls;
    double step = 1.0;      // Landweber relaxation
    std::uint64_t seed = 0;  // reserved; both solvers start from zero
    double h_sigma = default_h_sigma;
    int n_threads = 1;
    tolerances trace_tol{};
    std::vector<std::uint8_t> support;  // 0/1 per pixel, row major; empty = all
};

struct recon_result {
    grid_function image;
    std::vector<double> residuals;  // fan residual norms, front() is the data norm
    int iterations = 0;
};

/** Least squares inversion of the cutoff transform. Data cells that are
 *  masked, either in the input or by the tracer, are excluded; image updates
 *  stay inside the support. CGLS residual norms decrease monotonically;
 *  Landweber needs step below 2 over the largest squared singular value. */
inline recon_result reconstruct(const sinogram_grid& data, int nx, const sigma_field& sigma,
                                const cutoff& co, const recon_options& opts = {}) {
    detail::cutoff_system sys(data, nx, sigma, co, opts.support, opts.h_sigma,
                              opts.n_threads, opts.trace_tol);

    recon_result out;
    out.image = make_unit_grid(nx);

    sinogram_grid r = sys.shape;
    for (std::size_t c = 0; c < r.values.size(); ++c)
        r.values[c] = r.mask[c] ? 0.0 : data.values[c];
    sinogram_grid kp = sys.shape;

    out.residuals.push_back(std::sqrt(sinogram_dot(r, r)));
    const double target = std::max(opts.tol * out.residuals.front(), opts.abs_tol);

    if (opts.solver == solver_kind::landweber) {
        for (int it = 0; it < opts.max_iters; ++it) {
            if (out.residuals.back() <= target) break;
            const grid_function s = sys.transpose(r);
            for (std::size_t i = 0; i < out.image.values.size(); ++i)
                out.image.values[i] += opts.step * s.values[i];
            sys.forward(out.image, kp);
            for (std::size_t c = 0; c < r.values.size(); ++c)
                r.values[c] = r.mask[c] ? 0.0 : data.values[c] - kp.values[c];
            out.residuals.push_back(std::sqrt(sinogram_dot(r, r)));
            ++out.iterations;
        }
        return out;
    }

    grid_function s = sys.transpose(r);
    grid_function p = s;
    double gamma = image_dot(s, s);

    for (int it = 0; it < opts.max_iters && gamma > 0.0; ++it) {
        sys.forward(p, kp);
        const double denom = sinogram_dot(kp, kp);
        if (!(denom > 0.0)) break;
        const double step = gamma / denom;
        for (std::size_t i = 0; i < out.image.values.size(); ++i)
            out.image.values[i] += step * p.values[i];
        for (std::size_t c = 0; c < r.values.size(); ++c)
            if (!r.mask[c]) r.values[c] -= step * kp.values[c];
        out.residuals.push_back(std::sqrt(sinogram_dot(r, r)));
        ++out.iterations;
        if (out.residuals.back() <= target) break;
        s = sys.transpose(r);
        const double gamma_next = image_dot(s, s);
        const double beta = gamma_next / gamma;
        for (std::size_t i = 0; i < p.values.size(); ++i)
            p.values[i] = s.values[i] + beta * p.values[i];
        gamma = gamma_next;
    }
    sys.project(out.image);
    return out;
}

struct stability_options {
    std::vector<double> deltas{0.1, 0.03, 0.01, 0.003};
    double c_delta = 0.05;  // perturbation size for the constant comparison
    double h_sigma = default_h_sigma;
    int n_threads = 1;
};

struct stability_report {
    std::vector<double> deltas;
    std::vector<double> response_norms;  // ensemble mean of |(N' - N)f|_H1 / |f|_L2
    double fitted_slope = 0.0;
    double empirical_c = 0.0;            // max |f|_L2 / |Nf|_H1 over the ensemble
    double empirical_c_perturbed = 0.0;  // same constant at sigma0 + c_delta * eta
};

/** Response of the normal operator to attenuation perturbations along eta:
 *  for each delta, the ensemble mean of |(N_{sigma0 + delta eta} - N_sigma0)
 *  f|_H1 / |f|_L2, with the log-log slope of that response, plus the
 *  empirical stability constant at sigma0 and at the c_delta perturbation. */
inline stability_report stability_experiment(const sigma_field& sigma0, const sigma_field& eta,
                                             const std::vector<grid_function>& f_ensemble,
                                             const cutoff& co, sinogram_grid sg,
                                             const stability_options& opts = {}) {
    if (f_ensemble.empty()) throw std::invalid_argument("stability_experiment: empty ensemble");
    const auto alpha_sq = [&](unit_tangent v) {
        const double a = co.alpha(v);
        return a * a;
    };
    auto apply_n = [&](const sigma_field& s, const grid_function& f) {
        return normal_apply(f, s, sg, alpha_sq, opts.h_sigma, opts.n_threads);
    };

    std::vector<grid_function> base;
    std::vector<double> f_norm;
    for (const grid_function& f : f_ensemble) {
        base.push_back(apply_n(sigma0, f));
        f_norm.push_back(std::sqrt(image_dot(f, f)));
    }

    stability_report rep;
    for (double delta : opts.deltas) {
        const sigma_field pert = sigma_field::scaled_sum(sigma0, eta, 1.0, delta);
        double mean = 0.0;
        for (std::size_t i = 0; i < f_ensemble.size(); ++i) {
            grid_function diff = apply_n(pert, f_ensemble[i]);
            for (std::size_t k = 0; k < diff.values.size(); ++k)
                diff.values[k] -= base[i].values[k];
            mean += h1_norm(diff) / f_norm[i];
        }
        rep.deltas.push_back(delta);
        rep.response_norms.push_back(mean / static_cast<double>(f_ensemble.size()));
    }

    const std::size_t n = rep.deltas.size();
    if (n >= 2) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += std::log(rep.deltas[i]);
            my += std::log(rep.response_norms[i]);
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dx = std::log(rep.deltas[i]) - mx;
            sxy += dx * (std::log(rep.response_norms[i]) - my);
            sxx += dx * dx;
        }
        rep.fitted_slope = sxy / sxx;
    }

    const sigma_field pert_c = sigma_field::scaled_sum(sigma0, eta, 1.0, opts.c_delta);
    double c0 = 0.0, c1 = 0.0;
    for (std::size_t i = 0; i < f_ensemble.size(); ++i) {
        c0 = std::max(c0, f_norm[i] / h1_norm(base[i]));
        c1 = std::max(c1, f_norm[i] / h1_norm(apply_n(pert_c, f_ensemble[i])));
    }
    rep.empirical_c = c0;
    rep.empirical_c_perturbed = c1;
    return rep;
}

struct probe_options {
    int power_iters = 30;
    int inverse_iters = 6;
    int inner_iters = 200;
    double h_sigma = default_h_sigma;
    int n_threads = 1;
    std::uint64_t seed = 7;
};

struct probe_result {
    double sigma_max = 0.0;
    double sigma_min = 0.0;
};

/** Extreme singular values of the supported measurement operator: power
 *  iteration for the largest, inverse iteration with an inner conjugate
 *  gradient solve for the smallest. */
inline probe_result injectivity_probe(int nx, const sigma_field& sigma, const cutoff& co,
                                      const sinogram_grid& sg,
                                      const std::vector<std::uint8_t>& support,
                                      const probe_options& opts = {}) {
    detail::cutoff_system sys(sg, nx, sigma, co, support, opts.h_sigma, opts.n_threads,
                              tolerances{});
    sinogram_grid work = sys.shape;

    auto norm_img = [](const grid_function& g) { return std::sqrt(image_dot(g, g)); };
    auto scale_img = [](grid_function& g, double a) {
        for (double& v : g.values) v *= a;
    };
    auto random_unit = [&](rng& r) {
        grid_function v = make_unit_grid(nx);
        for (double& x : v.values) x = r.normal();
        sys.project(v);
        const double n = norm_img(v);
        if (n > 0.0) scale_img(v, 1.0 / n);
        return v;
    };
    // Rayleigh quotient of the normal operator at a unit vector.
    auto rayleigh = [&](const grid_function& v) {
        sys.forward(v, work);
        return sinogram_dot(work, work);
    };
    auto normal_op = [&](const grid_function& v) {
        sys.forward(v, work);
        return sys.transpose(work);
    };

    rng r(opts.seed);
    probe_result res;

    grid_function v = random_unit(r);
    double lam = 0.0;
    for (int it = 0; it < opts.power_iters; ++it) {
        grid_function u = normal_op(v);
        const double n = norm_img(u);
        if (!(n > 0.0)) break;
        scale_img(u, 1.0 / n);
        v = u;
        lam = rayleigh(v);
    }
    res.sigma_max = std::sqrt(std::max(lam, 0.0));

    grid_function w = random_unit(r);
    for (int outer = 0; outer < opts.inverse_iters; ++outer) {
        // Conjugate gradient solve of (K^T K) z = w.
        grid_function z = make_unit_grid(nx);
        grid_function rr = w;
        grid_function pp = rr;
        double rho = image_dot(rr, rr);
        const double rho0 = rho;
        for (int inner = 0; inner < opts.inner_iters && rho > 1e-28 * rho0; ++inner) {
            const grid_function ap = normal_op(pp);
            const double denom = image_dot(pp, ap);
            if (!(denom > 0.0)) break;
            const double step = rho / denom;
            for (std::size_t i = 0; i < z.values.size(); ++i) {
                z.values[i] += step * pp.values[i];
                rr.values[i] -= step * ap.values[i];
            }
            const double rho_next = image_dot(rr, rr);
            const double beta = rho_next / rho;
            for (std::size_t i = 0; i < pp.values.size(); ++i)
                pp.values[i] = rr.values[i] + beta * pp.values[i];
            rho = rho_next;
        }
        const double n = norm_img(z);
        if (!(n > 0.0)) break;
        scale_img(z, 1.0 / n);
        w = z;
    }
    res.sigma_min = std::sqrt(std::max(rayleigh(w), 0.0));
    return res;
}

}  // namespace brt
