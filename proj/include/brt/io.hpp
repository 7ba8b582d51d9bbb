#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "brt/cutoff.hpp"
#include "brt/field.hpp"
#include "brt/transform.hpp"

namespace brt {

static_assert(std::endian::native == std::endian::little,
              "file formats are little endian");

namespace detail {

inline void write_doubles(const std::string& path, const std::vector<double>& v) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::vector<double> read_doubles(const std::string& path, std::size_t count) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::vector<double> v(count);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(is.gcount()) != count * sizeof(double))
        throw std::runtime_error("short read: " + path);
    char extra;
    if (is.read(&extra, 1)) throw std::runtime_error("trailing bytes: " + path);
    return v;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::json read_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j;
    is >> j;
    return j;
}

inline nlohmann::json arcs_to_json(const access_set& E) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [lo, hi] : E.arcs) a.push_back({lo, hi});
    return a;
}

inline access_set arcs_from_json(const nlohmann::json& j, double eps_boundary) {
    access_set E;
    E.eps_boundary = eps_boundary;
    for (const auto& arc : j)
        E.arcs.emplace_back(arc.at(0).get<double>(), arc.at(1).get<double>());
    return E;
}

/** Run lengths of a 0/1 mask, alternating and starting with zeros. */
inline nlohmann::json mask_to_rle(const std::vector<std::uint8_t>& mask) {
    nlohmann::json runs = nlohmann::json::array();
    std::uint8_t cur = 0;
    std::size_t len = 0;
    for (std::uint8_t m : mask) {
        const std::uint8_t b = m ? 1 : 0;
        if (b == cur) {
            ++len;
        } else {
            runs.push_back(len);
            cur = b;
            len = 1;
        }
    }
    runs.push_back(len);
    return runs;
}

inline std::vector<std::uint8_t> mask_from_rle(const nlohmann::json& runs, std::size_t total) {
    std::vector<std::uint8_t> mask;
    mask.reserve(total);
    std::uint8_t cur = 0;
    for (const auto& r : runs) {
        mask.insert(mask.end(), r.get<std::size_t>(), cur);
        cur = cur ? 0 : 1;
    }
    if (mask.size() != total) throw std::runtime_error("mask run lengths do not match");
    return mask;
}

}  // namespace detail

struct grid_file {
    grid_function grid;
    std::string field = "f";  // "f" or "sigma"
    double margin = 0.0;      // only meaningful for sigma grids
};

/** Raw little-endian doubles at `path`, row major, with a JSON sidecar at
 *  `path`.json describing the layout. */
inline void write_grid(const std::string& path, const grid_function& g,
                       const std::string& field = "f", double margin = 0.0) {
    detail::write_doubles(path, g.values);
    nlohmann::json j{{"kind", "grid"},
                     {"nx", g.nx},
                     {"ny", g.ny},
                     {"origin", {g.origin.x1, g.origin.x2}},
                     {"spacing", g.spacing},
                     {"field", field}};
    if (field == "sigma") j["margin"] = margin;
    detail::write_json(path + ".json", j);
}

inline grid_file read_grid(const std::string& path) {
    const nlohmann::json j = detail::read_json(path + ".json");
    if (j.at("kind") != "grid") throw std::runtime_error("not a grid file: " + path);
    grid_file out;
    out.grid.nx = j.at("nx").get<int>();
    out.grid.ny = j.at("ny").get<int>();
    if (out.grid.nx <= 0 || out.grid.ny <= 0)
        throw std::runtime_error("bad grid shape: " + path);
    out.grid.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
    out.grid.spacing = j.at("spacing").get<double>();
    out.field = j.value("field", "f");
    out.margin = j.value("margin", 0.0);
    out.grid.values = detail::read_doubles(
        path, static_cast<std::size_t>(out.grid.nx) * out.grid.ny);
    return out;
}

/** Sinogram values as raw doubles plus a sidecar carrying the fan geometry
 *  and the mask as run lengths. The reader rebuilds the node layout and
 *  refuses a value count that does not match. */
inline void write_sinogram(const std::string& path, const sinogram_grid& sg) {
    detail::write_doubles(path, sg.values);
    const double arc0 = sg.E.arcs.at(0).second - sg.E.arcs.at(0).first;
    int n0 = 0;
    for (int a : sg.arc_of)
        if (a == 0) ++n0;
    const int s_per_unit = static_cast<int>(std::lround(n0 / arc0));
    nlohmann::json j{{"kind", "sinogram"},
                     {"arcs", detail::arcs_to_json(sg.E)},
                     {"eps_boundary", sg.E.eps_boundary},
                     {"s_per_unit", s_per_unit},
                     {"n_phi", sg.n_phi},
                     {"n_max", sg.n_max},
                     {"mask_rle", detail::mask_to_rle(sg.mask)}};
    detail::write_json(path + ".json", j);
}

inline sinogram_grid read_sinogram(const std::string& path) {
    const nlohmann::json j = detail::read_json(path + ".json");
    if (j.at("kind") != "sinogram") throw std::runtime_error("not a sinogram file: " + path);
    const access_set E = detail::arcs_from_json(j.at("arcs"), j.at("eps_boundary").get<double>());
    sinogram_grid sg = make_sinogram(E, j.at("s_per_unit").get<int>(), j.at("n_phi").get<int>(),
                                     j.at("n_max").get<int>());
    sg.values = detail::read_doubles(path, sg.values.size());
    sg.mask = detail::mask_from_rle(j.at("mask_rle"), sg.values.size());
    return sg;
}

/** Beam decomposition as a standalone JSON document. */
inline void write_cutoff(const std::string& path, const cutoff& co) {
    nlohmann::json beams = nlohmann::json::array();
    for (const beam& b : co.beams) {
        nlohmann::json tiles = nlohmann::json::array();
        for (const reflection_signature& t : b.tiles) tiles.push_back({t.l1, t.l2});
        nlohmann::json rects = nlohmann::json::array();
        for (const beam_rect& r : b.rects)
            rects.push_back({{"c1_lo", r.c1_lo},
                             {"c1_hi", r.c1_hi},
                             {"c2_lo", r.c2_lo},
                             {"c2_hi", r.c2_hi}});
        beams.push_back({{"class", static_cast<int>(b.cls)},
                         {"line_coords", b.line_coords},
                         {"corner", b.corner},
                         {"n_pairs", b.n_pairs},
                         {"tiles", tiles},
                         {"terminal", {b.terminal.l1, b.terminal.l2}},
                         {"rects", rects},
                         {"ref2", b.ref2}});
    }
    detail::write_json(path, nlohmann::json{{"kind", "cutoff"},
                                            {"arcs", detail::arcs_to_json(co.E)},
                                            {"eps_boundary", co.E.eps_boundary},
                                            {"n_max", co.n_max},
                                            {"beams", beams}});
}

inline cutoff read_cutoff(const std::string& path) {
    const nlohmann::json j = detail::read_json(path);
    if (j.at("kind") != "cutoff") throw std::runtime_error("not a cutoff file: " + path);
    cutoff co;
    co.E = detail::arcs_from_json(j.at("arcs"), j.at("eps_boundary").get<double>());
    co.n_max = j.at("n_max").get<int>();
    for (const auto& jb : j.at("beams")) {
        beam b;
        b.cls = static_cast<beam_class>(jb.at("class").get<int>());
        b.line_coords = jb.at("line_coords").get<bool>();
        b.corner = jb.at("corner").get<int>();
        b.n_pairs = jb.at("n_pairs").get<int>();
        for (const auto& t : jb.at("tiles"))
            b.tiles.push_back({t.at(0).get<int>(), t.at(1).get<int>()});
        b.terminal = {jb.at("terminal").at(0).get<int>(), jb.at("terminal").at(1).get<int>()};
        for (const auto& r : jb.at("rects")) {
            beam_rect br;
            br.c1_lo = r.at("c1_lo").get<double>();
            br.c1_hi = r.at("c1_hi").get<double>();
            br.c2_lo = r.at("c2_lo").get<double>();
            br.c2_hi = r.at("c2_hi").get<double>();
            b.rects.push_back(br);
        }
        b.ref2 = jb.at("ref2").get<double>();
        co.beams.push_back(std::move(b));
    }
    return co;
}

}  // namespace brt
