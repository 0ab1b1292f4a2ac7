#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "vpatch/classes.hpp"
#include "vpatch/elliptic.hpp"
#include "vpatch/errors.hpp"
#include "vpatch/grid.hpp"
#include "vpatch/multipatch.hpp"
#include "vpatch/solver.hpp"

namespace vpatch {

// Run configuration: a line-oriented `key = value` file with `[section]`
// headers and repeatable `[[patch]]` blocks. `#` starts a comment.
//
//   [domain]      kind = disk | rectangle, radius, center_x, center_y,
//                 width, height, origin_x, origin_y, resolution
//   [background]  kind = linear | quadratic, a, b, c, scale
//   [[patch]]     sign, kappa, lambda, center_x, center_y, delta0
//   [solver]      mode = minimize | maximize, gap_tol, max_iters,
//                 init = zero_potential | random | explicit, init_cells, seed, polish
//   [output]      directory, fields, masks, csv, velocity
//   [sweep]       lambdas, test_seed, parallel

struct DomainBlock {
    enum class Kind { disk, rectangle } kind = Kind::disk;
    double radius = 1.0;
    Point center{};
    double width = 1.0;
    double height = 1.0;
    Point origin{};
    int resolution = 128;
};

struct BackgroundBlock {
    enum class Kind { linear, quadratic } kind = Kind::linear;
    double a = 1.0, b = 0.0, c = 0.0;
    double scale = 1.0;
};

struct PatchBlock {
    int line = 0;  // line of the `[[patch]]` header
    int sign = +1;
    double kappa = 1.0;
    double lambda = 0.0;
    bool has_lambda = false;
    std::optional<Point> center;
    std::optional<double> delta0;

    std::string where() const { return "[[patch]] block at line " + std::to_string(line); }
};

struct OutputBlock {
    std::string directory = "out";
    bool fields = true;
    bool masks = true;
    bool csv = true;
    bool velocity = false;
};

struct SweepBlock {
    std::vector<double> lambdas;
    std::uint64_t test_seed = 0;
    bool parallel = true;
};

struct RunConfig {
    DomainBlock domain;
    BackgroundBlock background;
    std::vector<PatchBlock> patches;
    Objective objective = Objective::minimize;
    SolverOptions solver;
    OutputBlock output;
    SweepBlock sweep;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::optional<double> to_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<long long> to_integer(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<bool> to_bool(std::string_view s) {
    s = trim(s);
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    return std::nullopt;
}

inline std::optional<std::vector<double>> to_double_list(std::string_view s) {
    std::vector<double> out;
    while (true) {
        const auto comma = s.find(',');
        const auto v = to_double(s.substr(0, comma));
        if (!v) return std::nullopt;
        out.push_back(*v);
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

inline std::optional<std::vector<int>> to_int_list(std::string_view s) {
    std::vector<int> out;
    while (true) {
        const auto comma = s.find(',');
        const auto v = to_integer(s.substr(0, comma));
        if (!v || *v < 0 || *v > std::numeric_limits<int>::max()) return std::nullopt;
        out.push_back(static_cast<int>(*v));
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

[[noreturn]] inline void throw_errors(const std::vector<std::string>& errors) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
}

}  // namespace detail

/// Parses and range-checks a configuration. Every problem is collected and
/// reported together as one ConfigError, one "line N: ..." entry per problem.
inline RunConfig parse_config(std::string_view text) {
    RunConfig cfg;
    std::vector<std::string> errors;
    std::string section;
    std::vector<std::string> seen_sections;
    std::vector<std::string> seen_keys;
    bool explicit_center_x = false, explicit_center_y = false;
    int line_no = 0;

    auto finish_patch = [&] {
        if (section != "patch" || cfg.patches.empty()) return;
        PatchBlock& p = cfg.patches.back();
        if (explicit_center_x != explicit_center_y)
            errors.push_back("line " + std::to_string(p.line) + ": " + p.where() +
                             " needs both center_x and center_y");
        if (p.center.has_value() != p.delta0.has_value())
            errors.push_back("line " + std::to_string(p.line) + ": " + p.where() +
                             " needs center_x, center_y and delta0 together");
    };

    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string at = "line " + std::to_string(line_no) + ": ";

        if (line.front() == '[') {
            finish_patch();
            seen_keys.clear();
            if (line == "[[patch]]") {
                section = "patch";
                cfg.patches.push_back(PatchBlock{});
                cfg.patches.back().line = line_no;
                explicit_center_x = explicit_center_y = false;
                continue;
            }
            if (line.size() < 3 || line.back() != ']' || line[1] == '[') {
                errors.push_back(at + "malformed section header '" + std::string(line) + "'");
                section = "?";
                continue;
            }
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            static const std::vector<std::string> known = {"domain", "background", "solver", "output", "sweep"};
            if (std::find(known.begin(), known.end(), section) == known.end()) {
                errors.push_back(at + "unknown section [" + section + "]");
                section = "?";
            } else if (std::find(seen_sections.begin(), seen_sections.end(), section) != seen_sections.end()) {
                errors.push_back(at + "duplicate section [" + section + "]");
            } else {
                seen_sections.push_back(section);
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            errors.push_back(at + "expected 'key = value'");
            continue;
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        if (section.empty()) {
            errors.push_back(at + "key '" + key + "' outside any section");
            continue;
        }
        if (section == "?") continue;
        if (std::find(seen_keys.begin(), seen_keys.end(), key) != seen_keys.end()) {
            errors.push_back(at + "duplicate key '" + key + "'");
            continue;
        }
        seen_keys.push_back(key);

        auto unknown = [&] { errors.push_back(at + "unknown key '" + key + "' in [" + section + "]"); };
        auto bad = [&](const char* what) {
            errors.push_back(at + key + ": expected " + what + ", got '" + std::string(value) + "'");
        };
        auto real = [&](double& dst, bool positive = false) {
            const auto v = detail::to_double(value);
            if (!v) return bad("a number");
            if (positive && !(*v > 0.0)) return bad("a positive number");
            dst = *v;
        };
        auto integer = [&](auto& dst, long long lo) {
            const auto v = detail::to_integer(value);
            if (!v || *v < lo) return bad(lo > 0 ? "a positive integer" : "a non-negative integer");
            dst = static_cast<std::remove_reference_t<decltype(dst)>>(*v);
        };
        auto boolean = [&](bool& dst) {
            const auto v = detail::to_bool(value);
            if (!v) return bad("true or false");
            dst = *v;
        };

        if (section == "domain") {
            DomainBlock& d = cfg.domain;
            if (key == "kind") {
                if (value == "disk") d.kind = DomainBlock::Kind::disk;
                else if (value == "rectangle") d.kind = DomainBlock::Kind::rectangle;
                else bad("disk or rectangle");
            } else if (key == "radius") real(d.radius, true);
            else if (key == "center_x") real(d.center.x);
            else if (key == "center_y") real(d.center.y);
            else if (key == "width") real(d.width, true);
            else if (key == "height") real(d.height, true);
            else if (key == "origin_x") real(d.origin.x);
            else if (key == "origin_y") real(d.origin.y);
            else if (key == "resolution") {
                integer(d.resolution, 1);
                if (d.resolution < 4) bad("a resolution of at least 4");
            } else unknown();
        } else if (section == "background") {
            BackgroundBlock& b = cfg.background;
            if (key == "kind") {
                if (value == "linear") b.kind = BackgroundBlock::Kind::linear;
                else if (value == "quadratic") b.kind = BackgroundBlock::Kind::quadratic;
                else bad("linear or quadratic");
            } else if (key == "a") real(b.a);
            else if (key == "b") real(b.b);
            else if (key == "c") real(b.c);
            else if (key == "scale") real(b.scale);
            else unknown();
        } else if (section == "patch") {
            PatchBlock& p = cfg.patches.back();
            if (key == "sign") {
                const auto v = detail::to_integer(value);
                if (!v || (*v != 1 && *v != -1)) bad("+1 or -1");
                else p.sign = static_cast<int>(*v);
            } else if (key == "kappa") real(p.kappa, true);
            else if (key == "lambda") {
                real(p.lambda, true);
                p.has_lambda = true;
            } else if (key == "center_x" || key == "center_y") {
                double v = 0.0;
                real(v);
                if (!p.center) p.center = Point{};
                (key == "center_x" ? p.center->x : p.center->y) = v;
                (key == "center_x" ? explicit_center_x : explicit_center_y) = true;
            } else if (key == "delta0") {
                double v = 0.0;
                real(v, true);
                p.delta0 = v;
            } else unknown();
        } else if (section == "solver") {
            SolverOptions& s = cfg.solver;
            if (key == "mode") {
                if (value == "minimize") cfg.objective = Objective::minimize;
                else if (value == "maximize") cfg.objective = Objective::maximize;
                else bad("minimize or maximize");
            } else if (key == "gap_tol") real(s.gap_tol, true);
            else if (key == "max_iters") integer(s.max_iters, 1);
            else if (key == "init") {
                if (value == "zero_potential") s.init = InitKind::zero_potential;
                else if (value == "random") s.init = InitKind::random;
                else if (value == "explicit") s.init = InitKind::explicit_cells;
                else bad("zero_potential, random or explicit");
            } else if (key == "init_cells") {
                const auto v = detail::to_int_list(value);
                if (!v) bad("a comma-separated list of cell indices");
                else s.explicit_cells = *v;
            } else if (key == "seed") integer(s.seed, 0);
            else if (key == "polish") boolean(s.polish);
            else unknown();
        } else if (section == "output") {
            OutputBlock& o = cfg.output;
            if (key == "directory") {
                if (value.empty()) bad("a path");
                else o.directory = std::string(value);
            } else if (key == "fields") boolean(o.fields);
            else if (key == "masks") boolean(o.masks);
            else if (key == "csv") boolean(o.csv);
            else if (key == "velocity") boolean(o.velocity);
            else unknown();
        } else if (section == "sweep") {
            if (key == "lambdas") {
                const auto v = detail::to_double_list(value);
                if (!v) bad("a comma-separated list of numbers");
                else cfg.sweep.lambdas = *v;
            } else if (key == "test_seed") integer(cfg.sweep.test_seed, 0);
            else if (key == "parallel") boolean(cfg.sweep.parallel);
            else unknown();
        }
    }
    finish_patch();
    if (cfg.solver.init == InitKind::explicit_cells && cfg.solver.explicit_cells.empty())
        errors.push_back("line " + std::to_string(line_no) + ": init = explicit needs init_cells");
    if (!errors.empty()) detail::throw_errors(errors);
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

inline GridPtr make_grid(const DomainBlock& d) {
    if (d.kind == DomainBlock::Kind::disk) return build_grid(Disk{d.center, d.radius}, d.resolution);
    return build_grid(Rectangle{d.width, d.height, d.origin}, d.resolution);
}

inline HarmonicBackground make_background(const BackgroundBlock& b, const GridPtr& grid) {
    if (b.kind == BackgroundBlock::Kind::quadratic) return HarmonicBackground::quadratic(grid, b.scale);
    return HarmonicBackground::linear(grid, b.a, b.b, b.c, b.scale);
}

inline ClassSpec make_spec(const PatchBlock& p, const GridPtr& grid) {
    ClassSpec s{p.kappa, p.lambda, p.sign, std::nullopt, grid};
    if (p.center) s.region = Ball{*p.center, *p.delta0};
    return s;
}

/// The discretized problem described by a config, checked against every
/// class and multi-patch invariant. No solver state is allocated.
struct Problem {
    GridPtr grid;
    std::vector<ClassSpec> components;
};

/// Builds the grid and checks each patch block (feasibility) and each pair of
/// region balls (disjointness inside the domain). Errors name the blocks.
inline Problem build_problem(const RunConfig& cfg) {
    if (cfg.patches.empty()) throw ConfigError("config has no [[patch]] block");
    Problem prob;
    prob.grid = make_grid(cfg.domain);
    std::vector<std::string> errors;
    for (const PatchBlock& p : cfg.patches) {
        const ClassSpec s = make_spec(p, prob.grid);
        if (!p.has_lambda) {
            errors.push_back("line " + std::to_string(p.line) + ": " + p.where() + " has no lambda");
            prob.components.push_back(s);
            continue;
        }
        try {
            s.validate();
        } catch (const InfeasibleError& e) {
            errors.push_back("line " + std::to_string(p.line) + ": " + p.where() + " is infeasible: " + e.what());
        }
        prob.components.push_back(s);
    }
    const Grid& g = *prob.grid;
    for (std::size_t a = 0; a < cfg.patches.size(); ++a) {
        for (std::size_t b = a + 1; b < cfg.patches.size(); ++b) {
            const auto& ra = prob.components[a].region;
            const auto& rb = prob.components[b].region;
            if (!ra || !rb) {
                errors.push_back("line " + std::to_string(cfg.patches[ra ? b : a].line) + ": " +
                                 cfg.patches[ra ? b : a].where() + " needs a region ball when several patches are given");
                continue;
            }
            const double slack = 0.5 * g.h();
            for (int idx : g.interior_cells()) {
                const Point c = g.center(idx);
                if (distance(c, ra->center) <= ra->radius + slack && distance(c, rb->center) <= rb->radius + slack) {
                    errors.push_back("lines " + std::to_string(cfg.patches[a].line) + " and " +
                                     std::to_string(cfg.patches[b].line) + ": region balls of " +
                                     cfg.patches[a].where() + " and " + cfg.patches[b].where() +
                                     " overlap inside the domain");
                    break;
                }
            }
        }
    }
    if (!errors.empty()) detail::throw_errors(errors);
    return prob;
}

}  // namespace vpatch
