#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dwelldos/analysis.hpp"
#include "dwelldos/error.hpp"
#include "dwelldos/model.hpp"

namespace dwelldos::cli {

using json = nlohmann::json;

enum ExitCode : int { exit_ok = 0, exit_verification_failed = 1, exit_usage = 2 };

struct RunConfig {
    std::string backend;                 // "stack" or "lattice"
    std::optional<LayerStack> stack;
    std::optional<LatticeSystem> lattice;
    std::optional<LatticeRegion> region;
    EnergyGrid grid{0.0, 1.0, 2};
    Methods methods;
    double tolerance = 1e-8;
    std::optional<double> dv;
    double min_prominence = default_min_prominence;
    unsigned workers = 0;
    std::string output;
};

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& message) {
    throw Error(ErrorKind::config, (path.empty() ? "/" : path) + ": " + message);
}

/// Typed access to one JSON object with path-qualified errors and a check
/// for unknown fields.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    bool has(const std::string& key) const {
        seen_.push_back(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    std::string where(const std::string& key) const { return path_ + "/" + key; }

    const json& at(const std::string& key) const {
        if (!has(key)) fail(where(key), "required field is missing");
        return j_.at(key);
    }

    double number(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_number()) fail(where(key), "expected a number");
        double x = v.get<double>();
        if (!std::isfinite(x)) fail(where(key), "expected a finite number");
        return x;
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::int64_t integer(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_number_integer()) fail(where(key), "expected an integer");
        return v.get<std::int64_t>();
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) const { return has(key) ? integer(key) : fallback; }

    std::string string(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_string()) fail(where(key), "expected a string");
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& fallback) const { return has(key) ? string(key) : fallback; }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) fail(where(key), "expected true or false");
        return v.get<bool>();
    }

    void reject_unknown() const {
        for (const auto& [key, value] : j_.items())
            if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) fail(where(key), "unknown field");
    }

private:
    const json& j_;
    std::string path_;
    mutable std::vector<std::string> seen_;
};

inline std::pair<double, double> range(const Fields& f, const std::string& key, std::pair<double, double> fallback) {
    if (!f.has(key)) return fallback;
    const auto& v = f.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        fail(f.where(key), "expected [low, high]");
    return {v[0].get<double>(), v[1].get<double>()};
}

inline LayerStack parse_stack(const json& j, const std::string& path) {
    Fields f(j, path);
    const double v_left = f.number("v_left", 0.0);
    const double v_right = f.number("v_right", 0.0);
    int sources = f.has("layers") + f.has("random") + f.has("double_barrier");
    if (sources != 1) fail(path, "give exactly one of layers, random, double_barrier");
    try {
        if (f.has("layers")) {
            const auto& arr = f.at("layers");
            if (!arr.is_array()) fail(f.where("layers"), "expected an array of {d, V}");
            std::vector<Layer> layers;
            for (std::size_t i = 0; i < arr.size(); ++i) {
                Fields l(arr[i], f.where("layers") + "/" + std::to_string(i));
                layers.push_back({l.number("d"), l.number("V")});
                l.reject_unknown();
            }
            f.reject_unknown();
            return LayerStack(v_left, std::move(layers), v_right);
        }
        if (f.has("random")) {
            Fields r(f.at("random"), f.where("random"));
            RandomStackParams p;
            auto seed = r.integer("seed", 42);
            auto count = r.integer("layers", 5);
            if (seed < 0) fail(r.where("seed"), "expected a non-negative integer");
            if (count < 1) fail(r.where("layers"), "expected at least one layer");
            p.seed = static_cast<std::uint64_t>(seed);
            p.layers = static_cast<std::size_t>(count);
            std::tie(p.v_min, p.v_max) = range(r, "v_range", {p.v_min, p.v_max});
            std::tie(p.d_min, p.d_max) = range(r, "d_range", {p.d_min, p.d_max});
            p.v_left = v_left;
            p.v_right = v_right;
            bool symmetric = r.boolean("symmetric", false);
            r.reject_unknown();
            f.reject_unknown();
            return symmetric ? random_symmetric_stack(p) : random_stack(p);
        }
        Fields d(f.at("double_barrier"), f.where("double_barrier"));
        auto stack = double_barrier(d.number("barrier_thickness"), d.number("barrier_height"), d.number("well_width"),
                                    d.number("well_potential", 0.0));
        d.reject_unknown();
        f.reject_unknown();
        return stack;
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::config) throw;
        fail(path, e.what());
    }
}

inline LatticeSystem parse_lattice(const json& j, const std::string& path, std::optional<LatticeRegion>& region) {
    Fields f(j, path);
    auto width = f.integer("width");
    auto length = f.integer("length");
    if (width < 1 || width > 4096) fail(f.where("width"), "expected an integer in [1, 4096]");
    if (length < 1 || length > 1000000) fail(f.where("length"), "expected an integer in [1, 1000000]");
    const int w = static_cast<int>(width), lx = static_cast<int>(length);
    if (f.has("onsite") && f.has("disorder")) fail(path, "give at most one of onsite, disorder");

    std::optional<LatticeSystem> sys;
    if (f.has("onsite")) {
        const auto& cols = f.at("onsite");
        if (!cols.is_array() || cols.size() != static_cast<std::size_t>(lx))
            fail(f.where("onsite"), "expected one array of " + std::to_string(w) + " values per column");
        std::vector<double> onsite;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto& col = cols[c];
            if (!col.is_array() || col.size() != static_cast<std::size_t>(w))
                fail(f.where("onsite") + "/" + std::to_string(c), "expected " + std::to_string(w) + " numbers");
            for (std::size_t r = 0; r < col.size(); ++r) {
                if (!col[r].is_number()) fail(f.where("onsite") + "/" + std::to_string(c) + "/" + std::to_string(r), "expected a number");
                onsite.push_back(col[r].get<double>());
            }
        }
        sys = LatticeSystem(w, lx, std::move(onsite));
    } else if (f.has("disorder")) {
        Fields d(f.at("disorder"), f.where("disorder"));
        auto seed = d.integer("seed");
        if (seed < 0) fail(d.where("seed"), "expected a non-negative integer");
        double amp = d.number("amplitude");
        if (amp < 0.0) fail(d.where("amplitude"), "expected a non-negative number");
        d.reject_unknown();
        sys = LatticeSystem::disordered(w, lx, static_cast<std::uint64_t>(seed), amp);
    } else {
        sys = LatticeSystem::clean(w, lx);
    }

    if (f.has("region")) {
        Fields r(f.at("region"), f.where("region"));
        LatticeRegion reg{static_cast<int>(r.integer("col_begin", 0)), static_cast<int>(r.integer("col_end", lx)),
                          static_cast<int>(r.integer("row_begin", 0)), static_cast<int>(r.integer("row_end", w))};
        r.reject_unknown();
        try {
            sys->validate(reg);
        } catch (const Error& e) {
            fail(f.where("region"), e.what());
        }
        region = reg;
    }
    f.reject_unknown();
    return *sys;
}

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace detail

/// Parses a run configuration. Errors carry a line/column for malformed JSON
/// and a JSON-pointer path for invalid fields.
inline RunConfig parse_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        auto [line, col] = detail::line_column(text, e.byte);
        std::string what = e.what();
        auto pos = what.find(": ", what.find("column"));
        throw Error(ErrorKind::config, "line " + std::to_string(line) + ", column " + std::to_string(col) +
                                           ": malformed JSON" + (pos == std::string::npos ? "" : what.substr(pos)));
    }
    detail::Fields f(j, "");
    RunConfig cfg;
    cfg.backend = f.string("backend");
    if (cfg.backend == "stack") {
        cfg.stack = detail::parse_stack(f.at("stack"), "/stack");
        cfg.tolerance = 1e-8;
    } else if (cfg.backend == "lattice") {
        cfg.lattice = detail::parse_lattice(f.at("lattice"), "/lattice", cfg.region);
        cfg.tolerance = 1e-9;
    } else {
        detail::fail("/backend", "expected \"stack\" or \"lattice\"");
    }

    {
        detail::Fields g(f.at("grid"), "/grid");
        const double e_min = g.number("e_min"), e_max = g.number("e_max");
        const auto count = g.integer("count");
        const double margin = g.number("threshold_margin", default_threshold_margin);
        if (count < 1 || count > 10000000) detail::fail("/grid/count", "expected an integer in [1, 10000000]");
        if (!(margin >= 0.0)) detail::fail("/grid/threshold_margin", "expected a non-negative number");
        g.reject_unknown();
        try {
            cfg.grid = EnergyGrid(e_min, e_max, static_cast<std::size_t>(count), margin);
        } catch (const Error& e) {
            detail::fail("/grid", e.what());
        }
    }

    if (f.has("methods")) {
        const auto& m = f.at("methods");
        if (!m.is_array() || m.empty()) detail::fail("/methods", "expected a non-empty array");
        cfg.methods = {false, false, false};
        for (std::size_t i = 0; i < m.size(); ++i) {
            std::string name = m[i].is_string() ? m[i].get<std::string>() : "";
            if (name == "direct") cfg.methods.direct = true;
            else if (name == "vderiv") cfg.methods.vderiv = true;
            else if (name == "green") cfg.methods.green = true;
            else detail::fail("/methods/" + std::to_string(i), "expected one of direct, vderiv, green");
        }
    }
    cfg.tolerance = f.number("tolerance", cfg.tolerance);
    if (!(cfg.tolerance > 0.0)) detail::fail("/tolerance", "expected a positive number");
    if (f.has("dv")) {
        cfg.dv = f.number("dv");
        if (!(*cfg.dv > 0.0)) detail::fail("/dv", "expected a positive number");
    }
    cfg.min_prominence = f.number("min_prominence", cfg.min_prominence);
    if (!(cfg.min_prominence >= 0.0 && cfg.min_prominence <= 1.0)) detail::fail("/min_prominence", "expected a fraction in [0, 1]");
    auto workers = f.integer("workers", 0);
    if (workers < 0 || workers > 4096) detail::fail("/workers", "expected an integer in [0, 4096]");
    cfg.workers = static_cast<unsigned>(workers);
    cfg.output = f.string("output", "");
    f.reject_unknown();
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::config, "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Running and serialization
// ---------------------------------------------------------------------------

inline IdentityRun run_identity(const RunConfig& cfg) {
    VerifyOptions opt{cfg.methods, cfg.dv, cfg.workers};
    if (cfg.stack) return verify_identity(StackBackend(*cfg.stack, cfg.grid.threshold_margin()), cfg.grid, opt);
    const auto& sys = *cfg.lattice;
    return verify_identity(LatticeBackend(sys, cfg.region.value_or(sys.full_region()), cfg.grid.threshold_margin()), cfg.grid,
                           opt);
}

/// %.17g, or an empty field for NaN.
inline std::string format_number(double x) {
    if (std::isnan(x)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline std::string scan_csv(const IdentityRun& run) {
    struct Row {
        double energy;
        std::string channel;
        std::string line;
    };
    std::vector<Row> rows;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : run.reports) {
        const std::string e = format_number(r.energy);
        const std::string skipped = r.skipped ? "true" : "false";
        double tau_sum = r.channels.empty() ? nan : 0.0, vderiv_sum = r.channels.empty() ? nan : 0.0;
        for (const auto& c : r.channels) {
            tau_sum += c.tau_direct;
            vderiv_sum = c.tau_vderiv ? vderiv_sum + *c.tau_vderiv : nan;
            rows.push_back({r.energy, c.id,
                            e + "," + c.id + "," + format_number(c.tau_direct) + "," +
                                format_number(c.tau_vderiv.value_or(nan)) + ",,,," + skipped});
        }
        rows.push_back({r.energy, "ALL",
                        e + ",ALL," + format_number(tau_sum) + "," + format_number(vderiv_sum) + "," +
                            format_number(r.dos_green) + "," + format_number(r.dos_sum) + "," + format_number(r.residual_rel) +
                            "," + skipped});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.energy != b.energy ? a.energy < b.energy : a.channel < b.channel;
    });
    std::string out = "energy,channel,tau_direct,tau_vderiv,dos_green,dos_sum,residual_rel,skipped\n";
    for (const auto& row : rows) out += row.line + "\n";
    return out;
}

inline json summary_json(const IdentityRun& run, const RunConfig& cfg) {
    json j;
    j["backend"] = cfg.backend;
    j["points"] = run.summary.points;
    j["evaluated"] = run.summary.points - run.summary.skipped;
    j["skipped"] = run.summary.skipped;
    j["max_residual_rel"] = run.summary.max_residual_rel;
    j["tolerance"] = cfg.tolerance;
    json worst = json::array();
    for (const auto& [e, res] : run.summary.worst) worst.push_back({{"energy", e}, {"residual_rel", res}});
    j["worst"] = worst;
    if (run.summary.palindromic) {
        j["palindromic"] = true;
        j["max_symmetric_deviation"] = run.summary.max_symmetric_deviation;
        j["max_tau_asymmetry"] = run.summary.max_tau_asymmetry;
    }
    json warnings = json::array();
    if (run.summary.points > 0 && run.summary.skipped == run.summary.points)
        warnings.push_back("every grid energy was skipped; no identity check was performed");
    json skipped = json::array();
    for (const auto& r : run.reports)
        if (r.skipped) skipped.push_back({{"energy", r.energy}, {"reason", r.note}});
    j["skipped_points"] = skipped;
    j["warnings"] = warnings;
    return j;
}

inline std::string resonance_csv(const ResonanceTable& t) {
    struct Row {
        double energy;
        int kind;
        std::string channel;
        std::string line;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < t.dos_peaks.size(); ++i) {
        const auto& p = t.dos_peaks[i];
        const auto& m = t.matches[i];
        rows.push_back({p.energy, 0, m.channel,
                        format_number(p.energy) + ",dos," + m.channel + "," + format_number(p.height) + "," +
                            format_number(p.width) + "," + (std::isfinite(m.distance) ? format_number(m.distance) : "")});
    }
    for (const auto& p : t.dwell_peaks) {
        double nearest = std::numeric_limits<double>::infinity();
        for (const auto& d : t.dos_peaks) nearest = std::min(nearest, std::abs(d.energy - p.energy));
        rows.push_back({p.energy, 1, p.channel,
                        format_number(p.energy) + ",dwell," + p.channel + "," + format_number(p.height) + "," +
                            format_number(p.width) + "," + (std::isfinite(nearest) ? format_number(nearest) : "")});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.energy != b.energy) return a.energy < b.energy;
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.channel < b.channel;
    });
    std::string out = "E_peak,kind,channel,height,width,match_distance\n";
    for (const auto& r : rows) out += r.line + "\n";
    return out;
}

namespace detail {

inline std::filesystem::path prepare_output(const std::string& dir) {
    std::filesystem::path p = dir.empty() ? std::filesystem::path(".") : std::filesystem::path(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec || !std::filesystem::is_directory(p))
        throw Error(ErrorKind::config, "output directory " + p.string() + " cannot be created");
    return p;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    out.close();
    if (!out) throw Error(ErrorKind::config, "cannot write " + path.string());
}

}  // namespace detail

/// Writes scan.csv and summary.json into the output directory.
inline int cmd_scan(const RunConfig& cfg, std::ostream& log) {
    auto dir = detail::prepare_output(cfg.output);
    auto run = run_identity(cfg);
    auto summary = summary_json(run, cfg);
    detail::write_file(dir / "scan.csv", scan_csv(run));
    detail::write_file(dir / "summary.json", summary.dump(2) + "\n");
    for (const auto& w : summary["warnings"]) log << "warning: " << w.get<std::string>() << "\n";
    log << "scan: " << run.summary.points << " energies, " << run.summary.skipped << " skipped, max residual_rel "
        << format_number(run.summary.max_residual_rel) << "\n";
    return exit_ok;
}

/// Exit 0 iff at least one energy was evaluated and every residual is below
/// the tolerance. The JSON report goes to `out`.
inline int cmd_verify(RunConfig cfg, std::optional<double> tolerance, std::ostream& out) {
    if (tolerance) {
        if (!(*tolerance > 0.0)) throw Error(ErrorKind::config, "--tol: expected a positive number");
        cfg.tolerance = *tolerance;
    }
    if (!cfg.methods.direct || !cfg.methods.green)
        throw Error(ErrorKind::config, "/methods: verify needs both direct and green");
    auto run = run_identity(cfg);
    auto report = summary_json(run, cfg);
    const bool evaluated = run.summary.points > run.summary.skipped;
    const bool pass = evaluated && run.summary.max_residual_rel < cfg.tolerance;
    report["pass"] = pass;
    out << report.dump(2) << "\n";
    if (!cfg.output.empty()) detail::write_file(detail::prepare_output(cfg.output) / "verify.json", report.dump(2) + "\n");
    return pass ? exit_ok : exit_verification_failed;
}

/// Writes resonances.csv into the output directory.
inline int cmd_resonances(RunConfig cfg, std::ostream& log) {
    if (cfg.grid.count() < 4)
        throw Error(ErrorKind::insufficient_data, "resonance search needs at least 4 grid energies, got " +
                                                      std::to_string(cfg.grid.count()));
    auto dir = detail::prepare_output(cfg.output);
    cfg.methods.direct = cfg.methods.green = true;
    auto run = run_identity(cfg);
    auto table = find_resonances(run.reports, cfg.min_prominence);
    detail::write_file(dir / "resonances.csv", resonance_csv(table));
    log << "resonances: " << table.dos_peaks.size() << " dos peaks, " << table.dwell_peaks.size() << " dwell peaks, "
        << table.unmatched() << " unmatched\n";
    return exit_ok;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dwell times and region densities of states for 1D stacks and tight-binding strips"};
    app.require_subcommand(1);
    std::string config, out_dir;
    std::optional<double> tol;

    auto* scan = app.add_subcommand("scan", "Evaluate every estimator on the energy grid");
    scan->add_option("--config", config, "JSON run configuration")->required();
    scan->add_option("--out", out_dir, "Output directory (overrides the config)");
    auto* verify = app.add_subcommand("verify", "Check the DOS / dwell-time identity against a tolerance");
    verify->add_option("--config", config, "JSON run configuration")->required();
    verify->add_option("--tol", tol, "Relative tolerance (overrides the config)");
    verify->add_option("--out", out_dir, "Also write verify.json here");
    auto* res = app.add_subcommand("resonances", "Find and match DOS and dwell-time peaks");
    res->add_option("--config", config, "JSON run configuration")->required();
    res->add_option("--out", out_dir, "Output directory (overrides the config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return exit_usage;
    }

    try {
        auto cfg = load_config(config);
        if (!out_dir.empty()) cfg.output = out_dir;
        if (*scan) return cmd_scan(cfg, err);
        if (*verify) return cmd_verify(cfg, tol, out);
        return cmd_resonances(cfg, err);
    } catch (const Error& e) {
        err << "error: " << config << ": " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
}

}  // namespace dwelldos::cli
