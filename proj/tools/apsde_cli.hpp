#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "apsde/analysis.hpp"
#include "apsde/montecarlo.hpp"

namespace apsde::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// A configuration problem attributable to one key.
class KeyError : public ConfigError {
public:
    KeyError(const std::string& key, const std::string& what)
        : ConfigError("--" + key + ": " + what), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes `content` to `path` through a temporary file in the same directory.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw KeyError("output", "cannot open '" + tmp.string() + "' for writing");
        }
        out << content;
        if (!out.flush()) {
            throw KeyError("output", "write to '" + tmp.string() + "' failed");
        }
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Settings: preset < config file < flags. Values are kept as strings and
// converted on use so every error can name its key.

class Settings {
public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double number(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : parse_number(key, it->second);
    }

    long long integer(const std::string& key, long long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        const double v = parse_number(key, it->second);
        if (v != std::floor(v) || std::fabs(v) > 9e15) {
            throw KeyError(key, "expected an integer, got '" + it->second + "'");
        }
        return static_cast<long long>(v);
    }

    std::vector<std::string> list(const std::string& key) const {
        std::vector<std::string> out;
        auto it = values_.find(key);
        if (it == values_.end()) {
            return out;
        }
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(" \t");
            const auto e = item.find_last_not_of(" \t");
            if (b != std::string::npos) {
                out.push_back(item.substr(b, e - b + 1));
            }
        }
        return out;
    }

    /// Comma list of positive numbers, strictly descending. "2^-k" terms and
    /// "2^-a..2^-b" dyadic ranges are accepted.
    std::vector<double> grid(const std::string& key, const std::vector<double>& fallback) const {
        if (!has(key)) {
            return fallback;
        }
        std::vector<double> out;
        for (const auto& item : list(key)) {
            const auto dots = item.find("..");
            if (dots != std::string::npos) {
                const int a = dyadic_exponent(key, item.substr(0, dots));
                const int b = dyadic_exponent(key, item.substr(dots + 2));
                const int step = a <= b ? 1 : -1;
                for (int k = a;; k += step) {
                    out.push_back(std::ldexp(1.0, k));
                    if (k == b) {
                        break;
                    }
                }
            } else {
                out.push_back(parse_number(key, item));
            }
        }
        if (out.empty()) {
            throw KeyError(key, "grid is empty");
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!(out[i] > 0.0) || !std::isfinite(out[i])) {
                throw KeyError(key, "grid values must be positive, got " + format_double(out[i]));
            }
            if (i > 0 && !(out[i] < out[i - 1])) {
                throw KeyError(key, "grid must be sorted strictly descending");
            }
        }
        return out;
    }

    static double parse_number(const std::string& key, const std::string& text) {
        const auto caret = text.find('^');
        try {
            if (caret != std::string::npos) {
                std::size_t used = 0;
                const double base = std::stod(text.substr(0, caret), &used);
                std::size_t used_exp = 0;
                const double ex = std::stod(text.substr(caret + 1), &used_exp);
                if (used != caret || used_exp != text.size() - caret - 1) {
                    throw std::invalid_argument(text);
                }
                return std::pow(base, ex);
            }
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) {
                throw std::invalid_argument(text);
            }
            return v;
        } catch (const std::logic_error&) {
            throw KeyError(key, "expected a number, got '" + text + "'");
        }
    }

private:
    static int dyadic_exponent(const std::string& key, const std::string& term) {
        const double v = parse_number(key, term);
        const double e = std::log2(v);
        if (!(v > 0.0) || e != std::round(e)) {
            throw KeyError(key, "range bounds must be powers of two, got '" + term + "'");
        }
        return static_cast<int>(e);
    }

    std::map<std::string, std::string> values_;
};

inline const std::vector<std::string>& setting_keys() {
    static const std::vector<std::string> keys = {
        "model", "scheme", "dt", "dt-grid", "eps", "eps-grid", "theta", "theta2", "T",
        "samples", "seed", "observable", "output", "every", "preset"};
    return keys;
}

inline void load_config_file(const std::string& path, Settings& settings, std::string& command) {
    std::ifstream in(path);
    if (!in) {
        throw KeyError("config", "cannot read '" + path + "'");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw KeyError("config", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw KeyError("config", "top level must be an object");
    }
    for (const auto& [key, value] : doc.items()) {
        if (key == "command") {
            if (!value.is_string()) {
                throw KeyError("command", "must be a string");
            }
            if (command.empty()) {
                command = value.get<std::string>();
            }
            continue;
        }
        if (std::find(setting_keys().begin(), setting_keys().end(), key) == setting_keys().end()) {
            throw KeyError(key, "unknown key in config file");
        }
        auto scalar = [&key](const nlohmann::json& v) -> std::string {
            if (v.is_string()) {
                return v.get<std::string>();
            }
            if (v.is_number_integer()) {
                return std::to_string(v.get<long long>());
            }
            if (v.is_number()) {
                return format_double(v.get<double>());
            }
            throw KeyError(key, "expected a string or number");
        };
        if (value.is_array()) {
            std::string joined;
            for (const auto& item : value) {
                joined += (joined.empty() ? "" : ",") + scalar(item);
            }
            settings.set(key, joined);
        } else {
            settings.set(key, scalar(value));
        }
    }
}

// ---------------------------------------------------------------------------
// Presets: the parameter sets behind the published trajectory figures.

struct Run {
    SchemeId scheme;
    double theta = 1.0;
    std::optional<double> theta2;
    std::string label;
};

struct Preset {
    std::string model;
    double dt;
    double eps;
    std::vector<Run> runs;
};

inline const std::map<std::string, Preset>& presets() {
    static const std::map<std::string, Preset> table = {
        {"fig-av1",
         {"avg-ex", 0.004, 0.001,
          {{SchemeId::ApAvg, 1.0, {}, "ap-avg"},
           {SchemeId::LimitAvg, 1.0, {}, "limit-avg"},
           {SchemeId::CrudeAvg, 1.0, {}, "crude-avg"},
           {SchemeId::RefAvg, 1.0, {}, "ref-avg"}}}},
        {"fig-diff1",
         {"diff-ex1", 0.004, 0.01,
          {{SchemeId::ApDiff, 1.0, {}, "ap-diff"},
           {SchemeId::CrudeDiff, 1.0, {}, "crude-diff"},
           {SchemeId::RefDiff, 1.0, {}, "ref-diff"}}}},
        {"fig-diff1x",
         {"diff-ex1-line", 0.004, 0.01,
          {{SchemeId::ExpEx1bis, 1.0, {}, "exp-ex1bis"},
           {SchemeId::ApDiff, 1.0, {}, "ap-diff"},
           {SchemeId::ExpEx1bis, 1.0, 0.5, "exp-ex1bis-theta2-0.5"},
           {SchemeId::RefDiff, 1.0, {}, "ref-diff"}}}},
        {"fig-diff2",
         {"diff-ex2", 0.004, 0.01,
          {{SchemeId::ApDiff, 1.0, {}, "ap-diff"},
           {SchemeId::CrudeDiff, 1.0, {}, "crude-diff"},
           {SchemeId::RefDiff, 1.0, {}, "ref-diff"}}}},
    };
    return table;
}

// ---------------------------------------------------------------------------
// Commands

struct Context {
    std::string command;
    Settings settings;
    std::optional<Preset> preset;
    std::ostream* out = &std::cout;
    std::ostream* err = &std::cerr;
};

inline const ModelEntry& model_of(const Context& ctx) {
    const std::string name = ctx.settings.str("model", ctx.preset ? ctx.preset->model : "avg-ex");
    try {
        return find_model(name);
    } catch (const ConfigError&) {
        throw KeyError("model", "unknown model '" + name + "'");
    }
}

inline std::vector<SchemeId> schemes_of(const Context& ctx) {
    std::vector<SchemeId> out;
    for (const auto& name : ctx.settings.list("scheme")) {
        try {
            out.push_back(parse_scheme(name));
        } catch (const ConfigError&) {
            throw KeyError("scheme", "unknown scheme '" + name + "'");
        }
    }
    return out;
}

inline Observable observable_of(const Context& ctx) {
    const std::string name = ctx.settings.str("observable", "sin2pix");
    try {
        return find_observable(name);
    } catch (const ConfigError&) {
        throw KeyError("observable", "unknown observable '" + name + "'");
    }
}

inline double theta_of(const Context& ctx) { return ctx.settings.number("theta", 1.0); }

inline std::optional<double> theta2_of(const Context& ctx) {
    if (!ctx.settings.has("theta2")) {
        return std::nullopt;
    }
    return ctx.settings.number("theta2", 1.0);
}

inline std::uint64_t seed_of(const Context& ctx) {
    const long long s = ctx.settings.integer("seed", 0);
    if (s < 0) {
        throw KeyError("seed", "must be >= 0");
    }
    return static_cast<std::uint64_t>(s);
}

inline std::int64_t samples_of(const Context& ctx, std::int64_t fallback) {
    const long long m = ctx.settings.integer("samples", fallback);
    if (m < 1) {
        throw KeyError("samples", "must be >= 1");
    }
    return m;
}

inline int steps_of(const Context& ctx, double dt) {
    const double t = ctx.settings.number("T", 1.0);
    try {
        return steps_for(t, dt);
    } catch (const ParameterError& e) {
        throw KeyError("T", e.what());
    }
}

inline std::vector<double> default_dt_grid() {
    std::vector<double> g;
    for (int k = 4; k <= 10; ++k) {
        g.push_back(std::ldexp(1.0, -k));
    }
    return g;
}

inline std::vector<double> default_eps_grid() {
    std::vector<double> g;
    for (int k = 0; k <= 10; ++k) {
        g.push_back(std::ldexp(1.0, -k));
    }
    return g;
}

/// Emits to --output if given, otherwise to the context stream.
inline void emit(const Context& ctx, const std::string& path, const std::string& content) {
    if (path.empty()) {
        *ctx.out << content;
    } else {
        write_atomically(path, content);
    }
}

inline std::string with_suffix(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    std::filesystem::path stem = p.parent_path() / p.stem();
    return stem.string() + "-" + suffix + p.extension().string();
}

inline SchemeParams checked_params(double dt, double eps, double theta, std::optional<double> theta2,
                                   int steps) {
    SchemeParams p;
    p.dt = dt;
    p.eps = eps;
    p.theta = theta;
    p.theta2 = theta2;
    p.steps = steps;
    try {
        p.validate();
    } catch (const ParameterError& e) {
        const std::string what = e.what();
        const std::string key = what.rfind("dt", 0) == 0      ? "dt"
                                : what.rfind("eps", 0) == 0   ? "eps"
                                : what.rfind("theta2", 0) == 0 ? "theta2"
                                : what.rfind("theta", 0) == 0  ? "theta"
                                                               : "T";
        throw KeyError(key, what);
    }
    return p;
}

inline int run_trajectory(const Context& ctx) {
    const ModelEntry& entry = model_of(ctx);
    std::vector<Run> runs;
    const auto schemes = schemes_of(ctx);
    if (!schemes.empty()) {
        for (SchemeId id : schemes) {
            runs.push_back({id, theta_of(ctx), theta2_of(ctx), std::string(to_string(id))});
        }
    } else if (ctx.preset) {
        runs = ctx.preset->runs;
    } else {
        throw KeyError("scheme", "required for trajectory");
    }
    const double dt = ctx.settings.number("dt", ctx.preset ? ctx.preset->dt : 0.004);
    const double eps = ctx.settings.number("eps", ctx.preset ? ctx.preset->eps : 0.01);
    const int steps = steps_of(ctx, dt);
    const long long every = ctx.settings.integer("every", 1);
    if (every < 1) {
        throw KeyError("every", "must be >= 1");
    }
    const std::uint64_t seed = seed_of(ctx);
    const std::int64_t band_samples = samples_of(ctx, 1);
    const std::string output = ctx.settings.str("output", "");
    if (runs.size() > 1 && output.empty()) {
        throw KeyError("output", "required when several schemes are run");
    }
    const int dim = model_dim(entry.model);

    for (const Run& run : runs) {
        const SchemeParams p = checked_params(dt, eps, run.theta, run.theta2, steps);
        Integrator integrator(run.scheme, entry.model, p);
        GaussianStream stream(seed, 0);
        std::ostringstream csv;
        csv << "t";
        for (int i = 0; i < dim; ++i) {
            csv << ",x_" << i;
        }
        csv << ",m\n";
        SystemState state{entry.x0, entry.m0};
        auto row = [&](int n) {
            csv << format_double(n * dt);
            for (int i = 0; i < dim; ++i) {
                csv << ',' << format_double(state.x(i));
            }
            csv << ',' << format_double(state.m) << '\n';
        };
        row(0);
        for (int n = 1; n <= steps; ++n) {
            integrator.step(state, stream);
            if (n % every == 0 || n == steps) {
                row(n);
            }
        }
        const std::string path = runs.size() > 1 ? with_suffix(output, run.label) : output;
        emit(ctx, path, csv.str());

        if (band_samples > 1) {
            if (output.empty()) {
                throw KeyError("output", "required for the mean band (--samples > 1)");
            }
            const Observable phi = observable_of(ctx);
            std::vector<RunningStats> stats(static_cast<std::size_t>(steps) + 1);
            for (std::int64_t id = 0; id < band_samples; ++id) {
                GaussianStream s(seed, static_cast<std::uint64_t>(id));
                SystemState st{entry.x0, entry.m0};
                stats[0].add(phi.eval(st.x));
                for (int n = 1; n <= steps; ++n) {
                    integrator.step(st, s);
                    stats[static_cast<std::size_t>(n)].add(phi.eval(st.x));
                }
            }
            std::ostringstream band;
            band << "t,mean,std_error\n";
            for (int n = 0; n <= steps; ++n) {
                if (n % every == 0 || n == steps) {
                    const auto& s = stats[static_cast<std::size_t>(n)];
                    band << format_double(n * dt) << ',' << format_double(s.mean) << ','
                         << format_double(s.std_error()) << '\n';
                }
            }
            emit(ctx, with_suffix(path, "band"), band.str());
        }
    }
    return kExitOk;
}

inline nlohmann::json fit_json(const WeakErrorTable& rows, Axis axis = Axis::Dt) {
    try {
        const OrderFit f = fit_order(rows, axis);
        return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"used", f.used},
                {"excluded", f.excluded}};
    } catch (const InsufficientDataError& e) {
        return {{"slope", nullptr}, {"reason", e.what()}};
    }
}

inline int run_weak_error(const Context& ctx, bool sweep) {
    const ModelEntry& entry = model_of(ctx);
    auto schemes = schemes_of(ctx);
    if (schemes.empty()) {
        throw KeyError("scheme", "required");
    }
    if (!sweep && schemes.size() > 1) {
        throw KeyError("scheme", "weak-error takes one scheme; use sweep for several");
    }
    const auto dt_grid = ctx.settings.grid("dt-grid", ctx.settings.has("dt")
                                                          ? std::vector<double>{ctx.settings.number("dt", 0.0)}
                                                          : default_dt_grid());
    const auto eps_grid = ctx.settings.grid("eps-grid", ctx.settings.has("eps")
                                                            ? std::vector<double>{ctx.settings.number("eps", 0.0)}
                                                            : default_eps_grid());
    WeakErrorConfig config;
    config.final_time = ctx.settings.number("T", 1.0);
    config.theta = theta_of(ctx);
    config.theta2 = theta2_of(ctx);
    config.samples = samples_of(ctx, 100000);
    config.seed = seed_of(ctx);
    if (config.samples < kMinTableSamples) {
        throw KeyError("samples", "need at least 100 samples per cell");
    }
    for (double dt : dt_grid) {
        steps_of(ctx, dt);
        checked_params(dt, eps_grid.front(), config.theta, config.theta2, 1);
    }
    checked_params(dt_grid.front(), eps_grid.front(), config.theta, config.theta2, 1);
    const Observable phi = observable_of(ctx);

    std::ostringstream csv;
    csv << "dt,eps,scheme,estimate,std_error,error,error_std,samples\n";
    nlohmann::json summary;
    summary["command"] = sweep ? "sweep" : "weak-error";
    summary["model"] = entry.name;
    summary["observable"] = phi.name;
    summary["samples"] = config.samples;
    summary["seed"] = config.seed;
    summary["final_time"] = config.final_time;
    summary["schemes"] = nlohmann::json::array();
    for (SchemeId id : schemes) {
        const WeakErrorTable table = weak_error_table(id, {}, entry, phi, dt_grid, eps_grid, config);
        for (const auto& r : table) {
            csv << format_double(r.dt) << ',' << format_double(r.eps) << ',' << to_string(r.scheme) << ','
                << format_double(r.estimate) << ',' << format_double(r.std_error) << ','
                << format_double(r.error) << ',' << format_double(r.error_std) << ',' << r.samples << '\n';
        }
        nlohmann::json s;
        s["scheme"] = std::string(to_string(id));
        s["reference"] = {{"scheme", std::string(to_string(table.front().reference_scheme))},
                          {"dt", table.front().reference_dt},
                          {"paired", table.front().paired}};
        s["sup_over_eps"] = fit_json(sup_over_eps(table));
        nlohmann::json per_eps = nlohmann::json::array();
        for (double eps : eps_grid) {
            nlohmann::json e = fit_json(rows_at_eps(table, eps));
            e["eps"] = eps;
            per_eps.push_back(e);
        }
        s["per_eps"] = per_eps;
        summary["schemes"].push_back(s);
    }
    const std::string output = ctx.settings.str("output", "");
    emit(ctx, output, csv.str());
    if (!output.empty()) {
        write_atomically(output + ".summary.json", summary.dump(2) + "\n");
    } else {
        *ctx.err << summary.dump(2) << '\n';
    }
    return kExitOk;
}

inline SchemeId default_limit(SchemeId id) {
    switch (id) {
    case SchemeId::ApAvg:
    case SchemeId::CrudeAvg:
        return SchemeId::LimitAvg;
    case SchemeId::ApDiff:
    case SchemeId::CrudeDiff:
        return SchemeId::LimitDiff;
    case SchemeId::ExpEx1bis:
        return SchemeId::LimitEx1bis;
    default:
        throw KeyError("scheme", "no default limiting scheme for '" + std::string(to_string(id)) +
                                     "'; pass two schemes");
    }
}

inline int run_limit_gap(const Context& ctx) {
    const ModelEntry& entry = model_of(ctx);
    const auto schemes = schemes_of(ctx);
    if (schemes.empty() || schemes.size() > 2) {
        throw KeyError("scheme", "expects 'scheme' or 'scheme,limiting-scheme'");
    }
    const SchemeId limit = schemes.size() == 2 ? schemes[1] : default_limit(schemes[0]);
    const double dt = ctx.settings.number("dt", 1.0 / 64);
    std::vector<double> eps_default;
    for (int k = 4; k <= 10; ++k) {
        eps_default.push_back(std::ldexp(1.0, -k));
    }
    const auto eps_grid = ctx.settings.grid("eps-grid", eps_default);
    const SchemeParams p = checked_params(dt, eps_grid.front(), theta_of(ctx), theta2_of(ctx), steps_of(ctx, dt));
    for (double eps : eps_grid) {
        checked_params(dt, eps, p.theta, p.theta2, p.steps);
    }
    try {
        Integrator(schemes[0], entry.model, p);
        Integrator(limit, entry.model, p);
    } catch (const ConfigError& e) {
        throw KeyError("scheme", e.what());
    }
    const auto gaps = coupled_limit_gap(schemes[0], limit, entry, p, eps_grid, samples_of(ctx, 1000),
                                        seed_of(ctx));
    std::ostringstream csv;
    csv << "eps,gap,gap_std\n";
    for (const auto& g : gaps) {
        csv << format_double(g.eps) << ',' << format_double(g.gap) << ',' << format_double(g.gap_std) << '\n';
    }
    emit(ctx, ctx.settings.str("output", ""), csv.str());
    return kExitOk;
}

inline int run_generator_gap(const Context& ctx) {
    const ModelEntry& entry = model_of(ctx);
    const auto* model = std::get_if<DiffusionModel>(&entry.model);
    if (!model) {
        throw KeyError("model", "generator-gap needs a diffusion-regime model");
    }
    const std::string fn = ctx.settings.str("observable", "sin2pix");
    TestFunction phi;
    try {
        phi = find_test_function(fn);
    } catch (const ConfigError&) {
        throw KeyError("observable", "unknown test function '" + fn + "'");
    }
    std::vector<double> eps_default;
    for (int k = 1; k <= 10; ++k) {
        eps_default.push_back(std::ldexp(1.0, -k));
    }
    const auto eps_grid = ctx.settings.grid("eps-grid", eps_default);
    std::vector<double> xs;
    for (int i = 0; i < 64; ++i) {
        const double u = i / 64.0;
        xs.push_back(model->domain == Domain::Torus ? u : 4.0 * u - 2.0);
    }
    std::vector<double> ms;
    for (int j = 0; j <= 32; ++j) {
        ms.push_back(-4.0 + 0.25 * j);
    }
    const auto gaps = generator_gap(*model, phi, xs, ms, eps_grid);
    std::ostringstream csv;
    csv << "eps,max_normalized_gap\n";
    for (const auto& g : gaps) {
        csv << format_double(g.eps) << ',' << format_double(g.max_normalized_gap) << '\n';
    }
    emit(ctx, ctx.settings.str("output", ""), csv.str());
    return kExitOk;
}

/// Parses argv, runs the command and maps failures to exit codes.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Asymptotic-preserving integrators for slow-fast SDEs", "apsde"};
    app.require_subcommand(1);
    app.fallthrough();

    std::map<std::string, std::string> flags;
    std::string config_path;
    for (const auto& key : setting_keys()) {
        app.add_option_function<std::string>(
            "--" + key, [&flags, key](const std::string& v) { flags[key] = v; });
    }
    app.add_option("--config", config_path, "JSON file mirroring the flags");

    std::string command;
    for (const char* name : {"trajectory", "weak-error", "sweep", "limit-gap", "generator-gap"}) {
        app.add_subcommand(name)->callback([&command, name] { command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitConfig;
    }

    Context ctx;
    ctx.out = &out;
    ctx.err = &err;
    ctx.command = command;
    try {
        Settings merged;
        std::string preset_name;
        if (auto it = flags.find("preset"); it != flags.end()) {
            preset_name = it->second;
        }
        Settings file;
        std::string file_command;
        if (!config_path.empty()) {
            load_config_file(config_path, file, file_command);
            if (preset_name.empty() && file.has("preset")) {
                preset_name = file.str("preset", "");
            }
        }
        if (!preset_name.empty()) {
            auto it = presets().find(preset_name);
            if (it == presets().end()) {
                throw KeyError("preset", "unknown preset '" + preset_name + "'");
            }
            ctx.preset = it->second;
        }
        for (const auto& key : setting_keys()) {
            if (file.has(key)) {
                merged.set(key, file.str(key, ""));
            }
            if (auto it = flags.find(key); it != flags.end()) {
                merged.set(key, it->second);
            }
        }
        ctx.settings = merged;

        if (command == "trajectory") {
            return run_trajectory(ctx);
        }
        if (command == "weak-error") {
            return run_weak_error(ctx, false);
        }
        if (command == "sweep") {
            return run_weak_error(ctx, true);
        }
        if (command == "limit-gap") {
            return run_limit_gap(ctx);
        }
        return run_generator_gap(ctx);
    } catch (const NumericalFailureError& e) {
        err << "apsde: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ModelViolationError& e) {
        err << "apsde: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const InvalidStateError& e) {
        err << "apsde: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        err << "apsde: configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "apsde: configuration error: --output: " << e.what() << '\n';
        return kExitConfig;
    }
}

} // namespace apsde::cli
