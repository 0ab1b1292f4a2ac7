#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vpatch/analysis.hpp"
#include "vpatch/classes.hpp"
#include "vpatch/errors.hpp"
#include "vpatch/grid.hpp"

namespace vpatch {

/// Fixed-width scientific notation with 17 significant digits (round-trips
/// every double).
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "% .16e", v);
    return buf;
}

/// Writes `content` to `path` through a temporary sibling and a rename, so a
/// reader never sees a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw ConfigError("short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

using NamedField = std::pair<std::string, const ScalarField*>;

/// `# seed <n>`, `GRID nx ny x0 y0 h`, ny mask rows of nx 0/1 digits, then
/// per field `FIELD <name>` and ny rows of nx values. Rows run from iy = 0.
inline std::string grid_dump(const Grid& g, const std::vector<NamedField>& fields, std::uint64_t seed) {
    std::ostringstream out;
    out << "# seed " << seed << '\n';
    out << "GRID " << g.nx() << ' ' << g.ny() << ' ' << format_real(g.x0()) << ' ' << format_real(g.y0()) << ' '
        << format_real(g.h()) << '\n';
    for (int j = 0; j < g.ny(); ++j) {
        for (int i = 0; i < g.nx(); ++i) out << (i ? " " : "") << (g.interior(i, j) ? '1' : '0');
        out << '\n';
    }
    for (const auto& [name, field] : fields) {
        out << "FIELD " << name << '\n';
        for (int j = 0; j < g.ny(); ++j) {
            for (int i = 0; i < g.nx(); ++i) out << (i ? " " : "") << format_real((*field)[g.index(i, j)]);
            out << '\n';
        }
    }
    return out.str();
}

struct GridDump {
    int nx = 0, ny = 0;
    double x0 = 0.0, y0 = 0.0, h = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::uint8_t> mask;
    std::map<std::string, std::vector<double>> fields;
};

inline GridDump read_grid_dump(const std::string& text) {
    std::istringstream in(text);
    GridDump d;
    std::string tag;
    auto fail = [](const std::string& why) { throw ConfigError("malformed grid dump: " + why); };
    while (in >> tag) {
        if (tag == "#") {
            std::string key;
            in >> key;
            if (key == "seed") in >> d.seed;
            std::getline(in, tag);
        } else if (tag == "GRID") {
            if (!(in >> d.nx >> d.ny >> d.x0 >> d.y0 >> d.h) || d.nx <= 0 || d.ny <= 0) fail("bad GRID header");
            d.mask.resize(static_cast<std::size_t>(d.nx) * d.ny);
            for (auto& m : d.mask) {
                int v = 0;
                if (!(in >> v) || (v != 0 && v != 1)) fail("bad mask entry");
                m = static_cast<std::uint8_t>(v);
            }
        } else if (tag == "FIELD") {
            std::string name;
            if (!(in >> name) || d.nx == 0) fail("FIELD before GRID");
            std::vector<double>& vals = d.fields[name];
            vals.resize(d.mask.size());
            for (double& v : vals)
                if (!(in >> v)) fail("short FIELD " + name);
        } else {
            fail("unexpected token '" + tag + "'");
        }
    }
    if (d.nx == 0) fail("missing GRID header");
    return d;
}

/// Binary PGM (P5); 255 marks patch cells, 0 everything else. The first image
/// row is the top of the domain (largest iy).
inline std::string pgm_mask(const Grid& g, const std::vector<int>& cells) {
    std::string out = "P5\n" + std::to_string(g.nx()) + " " + std::to_string(g.ny()) + "\n255\n";
    std::vector<std::uint8_t> pix(g.size(), 0);
    for (int c : cells) pix[static_cast<std::size_t>(c)] = 255;
    for (int j = g.ny() - 1; j >= 0; --j)
        for (int i = 0; i < g.nx(); ++i) out.push_back(static_cast<char>(pix[static_cast<std::size_t>(g.index(i, j))]));
    return out;
}

/// `PATCH m` followed by one `ix iy` line per cell.
inline std::string patch_list(const Patch& patch) {
    const Grid& g = *patch.spec.grid;
    std::string out = "PATCH " + std::to_string(patch.cells.size()) + "\n";
    for (int c : patch.cells) out += std::to_string(g.ix(c)) + " " + std::to_string(g.iy(c)) + "\n";
    return out;
}

inline std::vector<std::pair<int, int>> read_patch_list(const std::string& text) {
    std::istringstream in(text);
    std::string tag;
    std::size_t m = 0;
    if (!(in >> tag >> m) || tag != "PATCH") throw ConfigError("malformed patch list header");
    std::vector<std::pair<int, int>> cells(m);
    for (auto& [i, j] : cells)
        if (!(in >> i >> j)) throw ConfigError("patch list is shorter than its header");
    return cells;
}

inline std::string sweep_csv(const SweepResult& sweep, std::uint64_t seed) {
    std::ostringstream out;
    out << "# seed " << seed << '\n';
    out << "lambda,energy,mu_lo,mu_hi,q_patch_min,q_patch_max,centroid_x,centroid_y,supdist,residual_max\n";
    for (const SweepRow& r : sweep.rows) {
        const double vals[] = {r.lambda,      r.energy,      r.mu_lo,      r.mu_hi,    r.q_patch_min,
                               r.q_patch_max, r.centroid.x, r.centroid.y, r.supdist, r.residual_max};
        bool first = true;
        for (double v : vals) {
            out << (first ? "" : ",") << format_real(v);
            first = false;
        }
        out << '\n';
    }
    for (const ExponentFit& f : sweep.fits)
        out << "# fit " << f.name << " slope=" << format_real(f.slope) << " r2=" << format_real(f.r2) << '\n';
    return out.str();
}

/// Per-iteration duality gap and energy of the mixed iterate.
inline std::string trace_csv(const std::vector<double>& gaps, const std::vector<double>& energies,
                             std::uint64_t seed) {
    std::ostringstream out;
    out << "# seed " << seed << '\n' << "iteration,gap,energy\n";
    for (std::size_t k = 0; k < gaps.size(); ++k)
        out << k << ',' << format_real(gaps[k]) << ',' << format_real(k < energies.size() ? energies[k] : 0.0)
            << '\n';
    return out.str();
}

}  // namespace vpatch
