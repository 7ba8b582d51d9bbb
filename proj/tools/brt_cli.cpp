#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "brt/cutoff.hpp"
#include "brt/field.hpp"
#include "brt/geometry.hpp"
#include "brt/io.hpp"
#include "brt/normal_op.hpp"
#include "brt/phantom.hpp"
#include "brt/recon.hpp"
#include "brt/rng.hpp"
#include "brt/transform.hpp"
#include "brt/unfolding.hpp"

namespace {

using namespace brt;
using nlohmann::json;

struct run_config {
    double margin = 0.15;
    tolerances tol;
    double h_sigma = default_h_sigma;
    access_set E = access_set::adjacent();
    int n_max = 2;
    int grid_n = 64;
    int s_per_unit = 32;
    int n_phi = 64;
    recon_options solver;
    std::uint64_t seed = 7;
    bool bit_reproducible = false;
    json phantom = json::object();
    int n_dir = 360;
    std::vector<double> stab_deltas{0.1, 0.03, 0.01, 0.003};
    double stab_c_delta = 0.05;
    int stab_ensemble = 10;
    int stab_bumps = 3;
    double stab_sigma_amp = 0.5;
    double stab_eta_amp = 1.0;
};

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
    for (const auto& [key, val] : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known) throw std::runtime_error("config: unknown key \"" + key + "\" in " + where);
    }
}

double positive(const json& j, const char* name, double dflt) {
    const double v = j.contains(name) ? j.at(name).get<double>() : dflt;
    if (!(v > 0.0))
        throw std::runtime_error(std::string("config: ") + name + " must be positive");
    return v;
}

access_set parse_access(const json& je, double eps_boundary) {
    access_set E;
    if (je.is_string()) {
        const std::string name = je.get<std::string>();
        if (name == "full")
            E = access_set::full();
        else if (name == "adjacent")
            E = access_set::adjacent();
        else if (name == "opposite")
            E = access_set::opposite();
        else
            throw std::runtime_error("config: unknown E preset \"" + name + "\"");
    } else {
        check_keys(je, "E", {"arcs"});
        for (const auto& arc : je.at("arcs")) {
            const double lo = arc.at(0).get<double>(), hi = arc.at(1).get<double>();
            if (!(lo >= 0.0 && lo < hi && hi <= 4.0))
                throw std::runtime_error("config: arcs must satisfy 0 <= lo < hi <= 4");
            E.arcs.emplace_back(lo, hi);
        }
        if (E.arcs.empty()) throw std::runtime_error("config: E needs at least one arc");
    }
    E.eps_boundary = eps_boundary;
    return E;
}

run_config load_config(const std::string& path) {
    run_config cfg;
    if (path.empty()) return cfg;
    const json j = detail::read_json(path);
    check_keys(j, "top level",
               {"domain", "E", "n_max", "grids", "sinogram", "solver", "seed",
                "bit_reproducible", "phantom", "visible", "stability"});

    if (j.contains("domain")) {
        const json& jd = j.at("domain");
        check_keys(jd, "domain",
                   {"margin", "eps_boundary", "eps_corner", "near_corner_pair", "h_sigma"});
        cfg.margin = positive(jd, "margin", cfg.margin);
        cfg.tol.eps_boundary = positive(jd, "eps_boundary", cfg.tol.eps_boundary);
        cfg.tol.eps_corner = positive(jd, "eps_corner", cfg.tol.eps_corner);
        cfg.tol.near_corner_pair = positive(jd, "near_corner_pair", cfg.tol.near_corner_pair);
        cfg.h_sigma = positive(jd, "h_sigma", cfg.h_sigma);
        if (cfg.margin >= 0.5) throw std::runtime_error("config: margin must be below 0.5");
    }
    cfg.E = j.contains("E") ? parse_access(j.at("E"), cfg.tol.eps_boundary)
                            : access_set{cfg.E.arcs, cfg.tol.eps_boundary};

    if (j.contains("n_max")) {
        cfg.n_max = j.at("n_max").get<int>();
        if (cfg.n_max < 0) throw std::runtime_error("config: n_max must be nonnegative");
    }
    if (j.contains("grids")) {
        check_keys(j.at("grids"), "grids", {"n"});
        cfg.grid_n = j.at("grids").value("n", cfg.grid_n);
        if (cfg.grid_n < 2) throw std::runtime_error("config: grids.n must be at least 2");
    }
    if (j.contains("sinogram")) {
        const json& js = j.at("sinogram");
        check_keys(js, "sinogram", {"s_per_unit", "n_phi"});
        cfg.s_per_unit = js.value("s_per_unit", cfg.s_per_unit);
        cfg.n_phi = js.value("n_phi", cfg.n_phi);
        if (cfg.s_per_unit < 1 || cfg.n_phi < 1)
            throw std::runtime_error("config: sinogram resolutions must be at least 1");
    }
    if (j.contains("solver")) {
        const json& js = j.at("solver");
        check_keys(js, "solver", {"method", "max_iters", "tol", "step"});
        const std::string method = js.value("method", std::string("cgls"));
        if (method == "cgls")
            cfg.solver.solver = solver_kind::cgls;
        else if (method == "landweber")
            cfg.solver.solver = solver_kind::landweber;
        else
            throw std::runtime_error("config: unknown solver method \"" + method + "\"");
        cfg.solver.max_iters = js.value("max_iters", cfg.solver.max_iters);
        if (cfg.solver.max_iters < 1)
            throw std::runtime_error("config: solver.max_iters must be at least 1");
        cfg.solver.tol = positive(js, "tol", cfg.solver.tol);
        cfg.solver.step = positive(js, "step", cfg.solver.step);
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("bit_reproducible")) cfg.bit_reproducible = j.at("bit_reproducible").get<bool>();
    if (j.contains("phantom")) {
        cfg.phantom = j.at("phantom");
        check_keys(cfg.phantom, "phantom", {"kind", "center", "radius", "value", "k", "cells", "field"});
    }
    if (j.contains("visible")) {
        check_keys(j.at("visible"), "visible", {"n_dir"});
        cfg.n_dir = j.at("visible").value("n_dir", cfg.n_dir);
        if (cfg.n_dir < 4) throw std::runtime_error("config: visible.n_dir must be at least 4");
    }
    if (j.contains("stability")) {
        const json& js = j.at("stability");
        check_keys(js, "stability",
                   {"deltas", "c_delta", "ensemble", "bumps", "sigma_amp", "eta_amp"});
        if (js.contains("deltas")) {
            cfg.stab_deltas.clear();
            for (const auto& d : js.at("deltas")) {
                const double v = d.get<double>();
                if (!(v > 0.0)) throw std::runtime_error("config: deltas must be positive");
                cfg.stab_deltas.push_back(v);
            }
            if (cfg.stab_deltas.empty())
                throw std::runtime_error("config: deltas must be nonempty");
        }
        cfg.stab_c_delta = positive(js, "c_delta", cfg.stab_c_delta);
        cfg.stab_ensemble = js.value("ensemble", cfg.stab_ensemble);
        cfg.stab_bumps = js.value("bumps", cfg.stab_bumps);
        if (cfg.stab_ensemble < 1 || cfg.stab_bumps < 1)
            throw std::runtime_error("config: stability ensemble and bumps must be at least 1");
        cfg.stab_sigma_amp = positive(js, "sigma_amp", cfg.stab_sigma_amp);
        cfg.stab_eta_amp = positive(js, "eta_amp", cfg.stab_eta_amp);
    }
    return cfg;
}

sigma_field smooth_bump_sigma(double amp, point2 c, double margin) {
    return sigma_field::isotropic(
        [=](point2 x) {
            const point2 d{x.x1 - c.x1, x.x2 - c.x2};
            return amp * std::exp(-(d.x1 * d.x1 + d.x2 * d.x2) / 0.02) *
                   smooth_window(x, margin);
        },
        margin);
}

sigma_field sigma_from_flag(const std::string& sigma_path) {
    if (sigma_path.empty()) return sigma_field::zero();
    const grid_file gf = read_grid(sigma_path);
    if (gf.field != "sigma")
        throw std::runtime_error("--sigma expects a grid written with field \"sigma\"");
    return sigma_field::from_grid(gf.grid, gf.margin);
}

int run_phantom(const run_config& cfg, const std::string& out) {
    const json& jp = cfg.phantom;
    const std::string kind = jp.value("kind", std::string("disk"));
    const std::string field = jp.value("field", std::string("f"));
    if (field != "f" && field != "sigma")
        throw std::runtime_error("phantom: field must be \"f\" or \"sigma\"");

    grid_function g;
    if (kind == "disk") {
        point2 c{0.5, 0.5};
        if (jp.contains("center"))
            c = {jp.at("center").at(0).get<double>(), jp.at("center").at(1).get<double>()};
        const double radius = jp.value("radius", 0.15);
        if (!(radius > 0.0)) throw std::runtime_error("phantom: radius must be positive");
        const bool inside = c.x1 - radius > cfg.margin && c.x1 + radius < 1.0 - cfg.margin &&
                            c.x2 - radius > cfg.margin && c.x2 + radius < 1.0 - cfg.margin;
        if (!inside) throw std::runtime_error("phantom: disk touches the support margin");
        g = disk_phantom(cfg.grid_n, c, radius, jp.value("value", 1.0));
    } else if (kind == "gaussians") {
        const int k = jp.value("k", 3);
        if (k < 1) throw std::runtime_error("phantom: k must be at least 1");
        g = gaussian_bumps(cfg.grid_n, k, cfg.seed, cfg.margin);
    } else if (kind == "checker") {
        const int cells = jp.value("cells", 4);
        if (cells < 1) throw std::runtime_error("phantom: cells must be at least 1");
        g = checker_phantom(cfg.grid_n, cells, cfg.margin);
    } else {
        throw std::runtime_error("phantom: unknown kind \"" + kind + "\"");
    }
    write_grid(out, g, field, field == "sigma" ? cfg.margin : 0.0);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_forward(const run_config& cfg, const std::string& in, const std::string& sigma_path,
                const std::string& beams_path, const std::string& out, int threads) {
    const grid_file f = read_grid(in);
    const sigma_field sigma = sigma_from_flag(sigma_path);
    sinogram_grid sg = make_sinogram(cfg.E, cfg.s_per_unit, cfg.n_phi, cfg.n_max);
    forward_all(f.grid, sigma, sg, cfg.h_sigma, threads, cfg.tol);
    if (!beams_path.empty()) {
        const cutoff co = read_cutoff(beams_path);
        if (co.E.arcs != sg.E.arcs || co.n_max != sg.n_max)
            throw std::runtime_error("forward: cutoff geometry disagrees with the config");
        apply_cutoff(sg, [&](unit_tangent v) { return co.alpha(v); });
    }
    write_sinogram(out, sg);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_adjoint(const run_config& cfg, const std::string& in, const std::string& sigma_path,
                const std::string& out, int threads) {
    const sinogram_grid sg = read_sinogram(in);
    const sigma_field sigma = sigma_from_flag(sigma_path);
    const grid_function img = backproject_discrete(
        sg, cfg.grid_n, sigma, [](unit_tangent) { return 1.0; }, cfg.h_sigma, threads, cfg.tol);
    write_grid(out, img);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_normal(const run_config& cfg, const std::string& in, const std::string& sigma_path,
               const std::string& beams_path, const std::string& out, bool split, int threads) {
    const grid_file f = read_grid(in);
    const sigma_field sigma = sigma_from_flag(sigma_path);
    const sinogram_grid sg = make_sinogram(cfg.E, cfg.s_per_unit, cfg.n_phi, cfg.n_max);

    cutoff co;
    const bool weighted = !beams_path.empty();
    if (weighted) {
        co = read_cutoff(beams_path);
        if (co.E.arcs != sg.E.arcs || co.n_max != sg.n_max)
            throw std::runtime_error("normal: cutoff geometry disagrees with the config");
    }
    auto weight = [&](unit_tangent v) {
        if (!weighted) return 1.0;
        const double a = co.alpha(v);
        return a * a;
    };

    if (split) {
        const normal_parts parts = normal_split(f.grid, sigma, sg, weight, cfg.h_sigma,
                                                threads, cfg.tol);
        write_grid(out, parts.total);
        write_grid(out + ".ballistic", parts.ballistic);
        write_grid(out + ".reflect", parts.reflect);
        std::cout << "wrote " << out << " " << out << ".ballistic " << out << ".reflect\n";
    } else {
        const grid_function img =
            normal_apply(f.grid, sigma, sg, weight, cfg.h_sigma, threads, cfg.tol);
        write_grid(out, img);
        std::cout << "wrote " << out << "\n";
    }
    return 0;
}

int run_beams(const run_config& cfg, const std::string& out) {
    const cutoff co = classify_beams(cfg.E, cfg.n_max);
    write_cutoff(out, co);
    std::cout << "wrote " << out << " (" << co.beams.size() << " beams)\n";
    return 0;
}

int run_visible(const run_config& cfg, const std::string& out) {
    const grid_function map = visible_set_map(cfg.E, cfg.n_max, cfg.grid_n, cfg.n_dir, cfg.tol);
    write_grid(out, map);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_recon(const run_config& cfg, const std::string& in, const std::string& sigma_path,
              const std::string& beams_path, const std::string& truth_path,
              const std::string& out, int threads) {
    const sinogram_grid data = read_sinogram(in);
    const sigma_field sigma = sigma_from_flag(sigma_path);
    const cutoff co =
        beams_path.empty() ? classify_beams(data.E, data.n_max) : read_cutoff(beams_path);

    recon_options opts = cfg.solver;
    opts.h_sigma = cfg.h_sigma;
    opts.n_threads = threads;
    opts.trace_tol = cfg.tol;
    opts.seed = cfg.seed;
    opts.support = window_support(cfg.grid_n, cfg.margin);

    const recon_result res = reconstruct(data, cfg.grid_n, sigma, co, opts);
    write_grid(out, res.image);

    json report{{"kind", "recon_report"},
                {"iterations", res.iterations},
                {"residual_initial", res.residuals.front()},
                {"residual_final", res.residuals.back()}};
    if (!truth_path.empty()) {
        const grid_file truth = read_grid(truth_path);
        if (truth.grid.values.size() != res.image.values.size())
            throw std::runtime_error("recon: truth grid size disagrees with grids.n");
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < truth.grid.values.size(); ++i) {
            const double d = res.image.values[i] - truth.grid.values[i];
            num += d * d;
            den += truth.grid.values[i] * truth.grid.values[i];
        }
        const double rel = std::sqrt(num / den);
        report["relative_error"] = rel;
        std::cout << "recon relative_error " << rel << "\n";
    }
    detail::write_json(out + ".report.json", report);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_stability(const run_config& cfg, const std::string& out, int threads) {
    const sigma_field sigma0 = smooth_bump_sigma(cfg.stab_sigma_amp, {0.45, 0.5}, cfg.margin);
    const sigma_field eta = smooth_bump_sigma(cfg.stab_eta_amp, {0.55, 0.45}, cfg.margin);
    const cutoff co = classify_beams(cfg.E, cfg.n_max);
    const sinogram_grid sg = make_sinogram(cfg.E, cfg.s_per_unit, cfg.n_phi, cfg.n_max);

    std::vector<grid_function> ensemble;
    for (int i = 0; i < cfg.stab_ensemble; ++i)
        ensemble.push_back(gaussian_bumps(cfg.grid_n, cfg.stab_bumps, cfg.seed + i, cfg.margin));

    stability_options opts;
    opts.deltas = cfg.stab_deltas;
    opts.c_delta = cfg.stab_c_delta;
    opts.h_sigma = cfg.h_sigma;
    opts.n_threads = threads;

    const stability_report rep = stability_experiment(sigma0, eta, ensemble, co, sg, opts);
    detail::write_json(out, json{{"kind", "stability_report"},
                                 {"deltas", rep.deltas},
                                 {"response_norms", rep.response_norms},
                                 {"fitted_slope", rep.fitted_slope},
                                 {"empirical_c", rep.empirical_c},
                                 {"empirical_c_perturbed", rep.empirical_c_perturbed}});
    std::cout << "wrote " << out << " (slope " << rep.fitted_slope << ")\n";
    return 0;
}

bool report_check(const char* name, double value, double bound) {
    const bool pass = value <= bound;
    std::cout << "selftest " << name << (pass ? ": PASS (" : ": FAIL (") << value << " vs "
              << bound << ")\n";
    return pass;
}

bool selftest_adjoint(int threads) {
    const sinogram_grid shape = make_sinogram(access_set::adjacent(), 24, 24, 2);
    const sigma_field sigma = smooth_bump_sigma(0.6, {0.5, 0.45}, 0.15);
    const double h = 1.0 / 128.0;
    rng r(101);
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        grid_function f = make_unit_grid(32);
        for (double& v : f.values) v = r.normal();
        sinogram_grid fwd = shape;
        forward_all(f, sigma, fwd, h, threads);
        sinogram_grid g = fwd;
        for (std::size_t c = 0; c < g.values.size(); ++c)
            g.values[c] = g.mask[c] ? 0.0 : r.normal();
        const grid_function back = backproject_discrete(
            g, 32, sigma, [](unit_tangent) { return 1.0; }, h, threads);
        const double lhs = sinogram_dot(fwd, g);
        const double rhs = image_dot(f, back);
        const double fn = std::sqrt(image_dot(f, f));
        const double gn = std::sqrt(sinogram_dot(g, g));
        worst = std::max(worst, std::abs(lhs - rhs) / (fn * gn));
    }
    return report_check("adjoint_identity", worst, 1e-12);
}

bool selftest_split(int threads) {
    const grid_function f = gaussian_bumps(24, 3, 5);
    const sigma_field sigma = smooth_bump_sigma(0.4, {0.45, 0.55}, 0.15);
    const sinogram_grid sg = make_sinogram(access_set::adjacent(), 16, 16, 2);
    auto one = [](unit_tangent) { return 1.0; };
    const double h = 1.0 / 128.0;
    const normal_parts parts = normal_split(f, sigma, sg, one, h, threads);
    const grid_function total = normal_apply(f, sigma, sg, one, h, threads);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < total.values.size(); ++i) {
        const double sum = parts.ballistic.values[i] + parts.reflect.values[i];
        worst = std::max({worst, std::abs(sum - parts.total.values[i]),
                          std::abs(parts.total.values[i] - total.values[i])});
        scale = std::max(scale, std::abs(total.values[i]));
    }
    return report_check("split_exactness", worst / scale, 1e-12);
}

bool selftest_unfold() {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> us(0.0, 4.0);
    std::uniform_real_distribution<double> uphi(-1.5, 1.5);
    const access_set E = access_set::adjacent();
    double worst_round = 0.0, worst_colin = 0.0;
    int done = 0;
    while (done < 2000) {
        const double s = us(gen);
        if (!E.contains(s) || E.boundary_distance(s) < 1e-6) continue;
        const boundary_point bp = point_to_param(boundary_param(s));
        const double theta = wrap_angle(inward_normal_angle(bp.edge) + uphi(gen));
        broken_ray ray;
        try {
            ray = trace_broken_ray({bp.p, theta}, E, 4);
        } catch (const std::domain_error&) {
            continue;
        }
        if (!ray.regular) continue;
        ++done;
        const unfolded_ray u = unfold_ray(ray);
        const point2 d = direction(u.dir);
        for (std::size_t jj = 0; jj < ray.segments.size(); ++jj) {
            const point2 w = ray.segments[jj].entry;
            const point2 back = fold_point_in(u.tiles[jj], unfold_point(u.tiles[jj], w));
            worst_round = std::max(
                {worst_round, std::abs(back.x1 - w.x1), std::abs(back.x2 - w.x2)});
            const point2 a = unfold_point(u.tiles[jj], ray.segments[jj].entry) - u.start;
            const point2 b = unfold_point(u.tiles[jj], ray.segments[jj].exit) - u.start;
            worst_colin = std::max({worst_colin, std::abs(cross(a, d)), std::abs(cross(b, d))});
        }
    }
    const bool p1 = report_check("unfold_round_trip", worst_round, 1e-12);
    const bool p2 = report_check("unfold_colinearity", worst_colin, 1e-9);
    return p1 && p2;
}

bool selftest_measure() {
    const int ns = 800, nphi = 500, bins = 8;
    std::mt19937_64 gen(23);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<double> count(static_cast<std::size_t>(bins) * bins, 0.0);
    long kept = 0;
    for (int i = 0; i < ns; ++i)
        for (int jj = 0; jj < nphi; ++jj) {
            const double s = 4.0 * (i + u01(gen)) / ns;
            const double phi = std::asin(2.0 * (jj + u01(gen)) / nphi - 1.0);
            const boundary_point bp = point_to_param(boundary_param(s));
            if (bp.corner) continue;
            const double theta = wrap_angle(inward_normal_angle(bp.edge) + phi);
            unit_tangent w;
            boundary_point wb;
            try {
                w = billiard_map({bp.p, theta});
                wb = point_to_param(w.base);
            } catch (const std::domain_error&) {
                continue;
            }
            if (wb.corner) continue;
            const double phi_out = detail::wrap_pm(w.dir - inward_normal_angle(wb.edge));
            if (!(std::abs(phi_out) < 0.5 * pi)) continue;
            const int cs = std::min(bins - 1, static_cast<int>(wb.s / 4.0 * bins));
            const int cp =
                std::min(bins - 1, static_cast<int>((std::sin(phi_out) + 1.0) / 2.0 * bins));
            count[static_cast<std::size_t>(cp) * bins + cs] += 1.0;
            ++kept;
        }
    const double expected = static_cast<double>(kept) / (bins * bins);
    double worst = 0.0;
    for (double c : count) worst = std::max(worst, std::abs(c - expected) / expected);
    return report_check("measure_preservation", worst, 0.05);
}

int run_selftest(int threads) {
    bool ok = true;
    ok &= selftest_adjoint(threads);
    ok &= selftest_split(threads);
    ok &= selftest_unfold();
    ok &= selftest_measure();
    if (!ok) {
        std::cerr << "selftest failed\n";
        return 2;
    }
    std::cout << "selftest ok\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attenuated broken ray transform toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_path = "out", in_path, sigma_path, beams_path, truth_path;
    int threads = 1;
    bool bit_repro = false, split = false;
    std::uint64_t seed_flag = 0;

    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--out", out_path, "output path");
    app.add_option("--threads", threads, "worker thread count");
    app.add_flag("--bit-reproducible", bit_repro, "single threaded, bit stable outputs");
    app.add_option("--seed", seed_flag, "override the config seed");

    CLI::App* c_phantom = app.add_subcommand("phantom", "write a phantom grid");
    CLI::App* c_forward = app.add_subcommand("forward", "transform a grid into a sinogram");
    c_forward->add_option("--in", in_path, "input grid")->required();
    c_forward->add_option("--sigma", sigma_path, "attenuation grid");
    c_forward->add_option("--beams", beams_path, "cutoff file; data are weighted by its alpha");
    CLI::App* c_adjoint = app.add_subcommand("adjoint", "backproject a sinogram");
    c_adjoint->add_option("--in", in_path, "input sinogram")->required();
    c_adjoint->add_option("--sigma", sigma_path, "attenuation grid");
    CLI::App* c_normal = app.add_subcommand("normal", "apply the normal operator");
    c_normal->add_option("--in", in_path, "input grid")->required();
    c_normal->add_option("--sigma", sigma_path, "attenuation grid");
    c_normal->add_option("--beams", beams_path, "cutoff file for the squared weight");
    c_normal->add_flag("--split", split, "also write the ballistic and reflect parts");
    CLI::App* c_beams = app.add_subcommand("beams", "classify beams and write the cutoff");
    CLI::App* c_visible = app.add_subcommand("visible", "write the visible set map");
    CLI::App* c_recon = app.add_subcommand("recon", "reconstruct from a sinogram");
    c_recon->add_option("--in", in_path, "input sinogram")->required();
    c_recon->add_option("--sigma", sigma_path, "attenuation grid");
    c_recon->add_option("--beams", beams_path, "cutoff file; classified on the fly if absent");
    c_recon->add_option("--truth", truth_path, "reference grid for the reported error");
    CLI::App* c_stability = app.add_subcommand("stability", "attenuation perturbation response");
    CLI::App* c_selftest = app.add_subcommand("selftest", "run the numerical self checks");

    CLI11_PARSE(app, argc, argv);

    try {
        run_config cfg = load_config(config_path);
        if (app.count("--seed") > 0) cfg.seed = seed_flag;
        if (bit_repro) cfg.bit_reproducible = true;
        if (cfg.bit_reproducible) threads = 1;
        if (threads < 1) throw std::runtime_error("threads must be at least 1");

        if (*c_phantom) return run_phantom(cfg, out_path);
        if (*c_forward)
            return run_forward(cfg, in_path, sigma_path, beams_path, out_path, threads);
        if (*c_adjoint) return run_adjoint(cfg, in_path, sigma_path, out_path, threads);
        if (*c_normal)
            return run_normal(cfg, in_path, sigma_path, beams_path, out_path, split, threads);
        if (*c_beams) return run_beams(cfg, out_path);
        if (*c_visible) return run_visible(cfg, out_path);
        if (*c_recon)
            return run_recon(cfg, in_path, sigma_path, beams_path, truth_path, out_path, threads);
        if (*c_stability) return run_stability(cfg, out_path, threads);
        if (*c_selftest) return run_selftest(threads);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
