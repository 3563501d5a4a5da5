#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "magtomo/magtomo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace magtomo;

namespace {

// Exit-code contract.
constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numerical = 3;
constexpr int exit_io = 4;

std::string stage;  // pipeline stage named in error reports

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> cutoff;
};

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::config: return exit_config;
        case ErrorKind::numerical: return exit_numerical;
        case ErrorKind::io: return exit_io;
    }
    return exit_numerical;
}

const char* kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::config: return "config";
        case ErrorKind::numerical: return "numerical";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

int report_error(const std::string& code, ErrorKind kind, const std::string& message) {
    json e = {{"error", code}, {"kind", kind_name(kind)}, {"message", message}};
    if (!stage.empty()) e["stage"] = stage;
    std::cerr << e.dump() << '\n';
    return exit_code(kind);
}

json load_config(const std::string& path) {
    if (!fs::is_regular_file(path)) throw IoError("config not found: " + path);
    return read_json(path);
}

fs::path prepare_out(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out);
    return out;
}

template <class T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::type_error& e) {
        throw ConfigError(where + ": field \"" + key + "\": " + e.what());
    }
}

std::uint64_t count_field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field \"" + key + "\"");
    if (!j.at(key).is_number_unsigned()) throw ConfigError(where + ": \"" + key + "\" must be a non-negative integer");
    return j.at(key).get<std::uint64_t>();
}

std::uint64_t seed_of(const json& j, const Options& o) {
    if (o.seed) return *o.seed;
    return count_field(j, "seed", "config");
}

FockCutoff cutoff_of(const json& j, const Options& o) {
    if (o.cutoff) return FockCutoff(*o.cutoff);
    if (!j.contains("cutoff")) return FockCutoff(40);
    return FockCutoff(static_cast<int>(count_field(j, "cutoff", "config")));
}

PhiMode phi_mode_of(const json& j) {
    if (!j.contains("phi_mode")) return PhiMode::uniform;
    const auto s = field<std::string>(j, "phi_mode", "config");
    if (s == "uniform") return PhiMode::uniform;
    if (s == "stratified") return PhiMode::stratified;
    throw ConfigError("config: unknown phi_mode \"" + s + "\"");
}

// {"tol", "max_iter", "stop": "tolerance"|"iterations", "likelihood_log_every", "povm": "spectral"|"projected"}
ReconstructionConfig reconstruction_of(const json& j, FockCutoff cutoff) {
    ReconstructionConfig cfg;
    cfg.cutoff = cutoff;
    if (!j.contains("reconstruction")) return cfg;
    const auto& r = j.at("reconstruction");
    const std::string where = "reconstruction";
    detail::require_keys(r, {"tol", "max_iter", "stop", "likelihood_log_every", "povm"}, where);
    if (r.contains("tol")) cfg.tol = detail::get_number(r, "tol", where);
    if (r.contains("max_iter")) cfg.max_iter = static_cast<int>(count_field(r, "max_iter", where));
    if (r.contains("likelihood_log_every"))
        cfg.likelihood_log_every = static_cast<int>(count_field(r, "likelihood_log_every", where));
    if (r.contains("stop")) {
        const auto s = field<std::string>(r, "stop", where);
        if (s == "tolerance") cfg.stop = StopMode::tolerance;
        else if (s == "iterations") cfg.stop = StopMode::iterations;
        else throw ConfigError(where + ": unknown stop mode \"" + s + "\"");
    }
    if (r.contains("povm")) {
        const auto s = field<std::string>(r, "povm", where);
        if (s == "spectral") cfg.povm = PovmRepresentation::spectral;
        else if (s == "projected") cfg.povm = PovmRepresentation::projected;
        else throw ConfigError(where + ": unknown povm representation \"" + s + "\"");
    }
    cfg.validate();
    return cfg;
}

json reconstruction_json(const ReconstructionConfig& c) {
    return {{"cutoff", c.cutoff.dim()},
            {"tol", c.tol},
            {"max_iter", c.max_iter},
            {"stop", c.stop == StopMode::tolerance ? "tolerance" : "iterations"},
            {"likelihood_log_every", c.likelihood_log_every},
            {"povm", representation_name(c.povm)}};
}

GridSpec grid_of(const json& j) {
    GridSpec g;
    if (!j.contains("wigner")) return g;
    const auto& w = j.at("wigner");
    const std::string where = "wigner";
    detail::require_keys(w, {"x_min", "x_max", "nx", "p_min", "p_max", "np"}, where);
    if (w.contains("x_min")) g.x_min = detail::get_number(w, "x_min", where);
    if (w.contains("x_max")) g.x_max = detail::get_number(w, "x_max", where);
    if (w.contains("p_min")) g.p_min = detail::get_number(w, "p_min", where);
    if (w.contains("p_max")) g.p_max = detail::get_number(w, "p_max", where);
    if (w.contains("nx")) g.nx = static_cast<int>(count_field(w, "nx", where));
    if (w.contains("np")) g.np = static_cast<int>(count_field(w, "np", where));
    if (g.nx < 1 || g.np < 1 || !(g.x_max >= g.x_min) || !(g.p_max >= g.p_min))
        throw ConfigError(where + ": grid needs nx, np >= 1 and max >= min");
    return g;
}

template <class T>
T parse_block(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError("config: missing block \"" + std::string(key) + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(key) + ": " + e.what());
    }
}

// Report with metrics for a known target; also writes wigner_target.csv.
// Returns the minimum of the predicted Wigner grid.
double finish_report(const ReconstructionReport& rep, const std::optional<TargetStateSpec>& target, const GridSpec& grid,
                     const fs::path& out, const json& run) {
    json r = report_to_json(rep);
    r["run"] = run;
    const auto w = wigner(rep.rho_pred, grid);
    write_wigner_csv(w, (out / "wigner_pred.csv").string());
    if (target) {
        stage = "metrics";
        const auto m = reconstruction_metrics(*target, rep.rho_pred);
        r["metrics"] = m;
        write_wigner_csv(wigner(realize_density(*target, FockCutoff(rep.rho_pred.dim())), grid),
                         (out / "wigner_target.csv").string());
    }
    write_json(r, out / "report.json");
    return w.values.minCoeff();
}

struct ReconstructionRun {
    ReconstructionReport report;
    double wigner_min_pred = 0.0;
};

// Runs reconstruct; on NotConverged the report is still written before the error propagates.
ReconstructionRun run_reconstruction(const HomodyneDataset& ds, const SignalModel& sig, const NoiseModel& noise,
                                        const ReconstructionConfig& cfg, const std::optional<TargetStateSpec>& target,
                                        const GridSpec& grid, const fs::path& out, const json& run) {
    stage = "reconstruct";
    try {
        auto rep = reconstruct(ds, sig, noise, cfg);
        stage = "write";
        const double wmin = finish_report(rep, target, grid, out, run);
        return {std::move(rep), wmin};
    } catch (const NotConverged& e) {
        stage = "write";
        finish_report(e.report(), target, grid, out, run);
        stage = "reconstruct";
        throw;
    }
}

const std::initializer_list<const char*> simulate_keys{"target", "signal", "noise", "n", "seed", "phi_mode"};

HomodyneDataset simulate_from(const json& j, const Options& o) {
    const auto target = parse_block<TargetStateSpec>(j, "target");
    const auto sig = parse_block<SignalModel>(j, "signal");
    const auto noise = parse_block<NoiseModel>(j, "noise");
    const auto n = count_field(j, "n", "config");
    if (n == 0) throw ConfigError("config: n must be >= 1");
    return sample_dataset(target, sig, noise, n, seed_of(j, o), phi_mode_of(j));
}

int cmd_simulate(const Options& o) {
    const json j = load_config(o.config);
    detail::require_keys(j, simulate_keys, "config");
    const auto ds = simulate_from(j, o);
    const auto out = prepare_out(o.out);
    write_dataset(ds, out / "dataset.csv");
    return exit_ok;
}

int cmd_reconstruct(const Options& o) {
    const json j = load_config(o.config);
    detail::require_keys(j, {"dataset", "signal", "noise", "target", "cutoff", "reconstruction", "wigner"}, "config");
    fs::path data = field<std::string>(j, "dataset", "config");
    if (data.is_relative()) data = fs::path(o.config).parent_path() / data;
    const auto cfg = reconstruction_of(j, cutoff_of(j, o));
    const auto grid = grid_of(j);
    std::optional<TargetStateSpec> target;
    if (j.contains("target")) target = parse_block<TargetStateSpec>(j, "target");
    const auto ds = read_dataset(data);
    const auto sig = j.contains("signal") ? parse_block<SignalModel>(j, "signal") : ds.meta.signal;
    const auto noise = j.contains("noise") ? parse_block<NoiseModel>(j, "noise") : ds.meta.noise;
    const auto out = prepare_out(o.out);
    const json run = {{"dataset", ds.meta}, {"signal", sig}, {"noise", noise}, {"reconstruction", reconstruction_json(cfg)}};
    run_reconstruction(ds, sig, noise, cfg, target, grid, out, run);
    return exit_ok;
}

int cmd_evaluate(const Options& o) {
    const json j = load_config(o.config);
    if (!j.contains("target"))
        throw ConfigError("evaluate needs a \"target\" block to compute fidelities; use `magtomo reconstruct` for data "
                          "without a known target");
    detail::require_keys(j, {"target", "signal", "noise", "n", "seed", "phi_mode", "cutoff", "reconstruction", "wigner"},
                         "config");
    const auto cfg = reconstruction_of(j, cutoff_of(j, o));
    const auto grid = grid_of(j);
    const auto target = parse_block<TargetStateSpec>(j, "target");
    stage = "simulate";
    const auto ds = simulate_from(j, o);
    const auto out = prepare_out(o.out);
    write_dataset(ds, out / "dataset.csv");
    const json run = {{"dataset", ds.meta}, {"signal", ds.meta.signal}, {"noise", ds.meta.noise},
                      {"reconstruction", reconstruction_json(cfg)}};
    const auto [rep, wmin] = run_reconstruction(ds, ds.meta.signal, ds.meta.noise, cfg, target, grid, out, run);
    stage = "metrics";
    json m = reconstruction_metrics(target, rep.rho_pred);
    m["wigner_min_pred"] = wmin;
    m["iterations"] = rep.iterations;
    m["stop_reason"] = rep.stop_reason;
    stage = "write";
    write_json(m, out / "metrics.json");
    return exit_ok;
}

// {"material": "yig_infrared" | "yig_visible" | {...}, "wavelength_nm", "f_m_GHz",
//  "l_grid_um": {"min", "max", "count"}, "r_in"}
int cmd_snr(const Options& o) {
    const json j = load_config(o.config);
    const std::string where = "config";
    detail::require_keys(j, {"material", "wavelength_nm", "f_m_GHz", "l_grid_um", "r_in"}, where);
    if (!j.contains("material")) throw ConfigError(where + ": missing field \"material\"");
    MaterialParams mat;
    std::optional<double> wavelength, omega_m;
    std::string preset;
    if (j.at("material").is_string()) {
        preset = j.at("material").get<std::string>();
        YigPreset p;
        if (preset == "yig_infrared") p = yig_preset(YigBand::infrared);
        else if (preset == "yig_visible") p = yig_preset(YigBand::visible);
        else throw ConfigError(where + ": unknown material preset \"" + preset + "\"");
        mat = p.material;
        wavelength = p.wavelength;
        omega_m = p.omega_m;
    } else {
        mat = parse_block<MaterialParams>(j, "material");
    }
    if (j.contains("wavelength_nm")) wavelength = 1e-9 * detail::get_number(j, "wavelength_nm", where);
    if (j.contains("f_m_GHz")) omega_m = 2.0 * pi * 1e9 * detail::get_number(j, "f_m_GHz", where);
    if (!wavelength || !omega_m) throw ConfigError(where + ": custom materials need \"wavelength_nm\" and \"f_m_GHz\"");
    if (!(*wavelength > 0.0) || !(*omega_m > 0.0)) throw ConfigError(where + ": wavelength and f_m must be > 0");
    const double r_in = j.contains("r_in") ? detail::get_number(j, "r_in", where) : 0.0;
    if (!(r_in >= 0.0)) throw ConfigError(where + ": r_in must be >= 0");
    std::vector<double> lengths;
    if (j.contains("l_grid_um")) {
        const auto& g = j.at("l_grid_um");
        detail::require_keys(g, {"min", "max", "count"}, "l_grid_um");
        const auto count = count_field(g, "count", "l_grid_um");
        if (count > 0)
            lengths = log_grid(units::um_to_m(detail::get_number(g, "min", "l_grid_um")),
                               units::um_to_m(detail::get_number(g, "max", "l_grid_um")), static_cast<int>(count));
    }
    mat.validate();
    const double omega_in = units::wavelength_to_omega(*wavelength);
    const auto rows = snr_sweep(mat, omega_in, *omega_m, lengths, r_in);
    const double theta_off = theta_off_resonance(mat, omega_in);
    const auto out = prepare_out(o.out);
    {
        std::ofstream csv(out / "snr.csv", std::ios::binary);
        if (!csv) throw IoError("cannot open " + (out / "snr.csv").string());
        csv << "l,rho_opt,theta,sigma_s,sigma_b\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.l, r.rho_opt, r.theta, r.sigma_s, r.sigma_b);
            csv << buf;
        }
        if (!csv) throw IoError("write failed: " + (out / "snr.csv").string());
    }
    json summary = {{"theta_off", theta_off},
                    {"material", mat},
                    {"wavelength_m", *wavelength},
                    {"omega_in_rad_per_s", omega_in},
                    {"omega_m_rad_per_s", *omega_m},
                    {"r_in", r_in},
                    {"rows", rows.size()}};
    if (!preset.empty()) summary["preset"] = preset;
    write_json(summary, out / "snr_summary.json");
    return exit_ok;
}

void add_common(CLI::App* sub, Options& o, bool seed, bool cutoff) {
    sub->add_option("--config", o.config, "JSON config")->required();
    sub->add_option("--out", o.out, "output directory")->required();
    if (seed) sub->add_option("--seed", o.seed, "override the config seed");
    if (cutoff) sub->add_option("--cutoff", o.cutoff, "override the Fock cutoff");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"magnon state tomography from simulated homodyne data"};
    app.require_subcommand(1);
    Options o;
    auto* sim = app.add_subcommand("simulate", "sample a homodyne dataset from a target state");
    auto* rec = app.add_subcommand("reconstruct", "maximum-likelihood reconstruction of a dataset");
    auto* snr = app.add_subcommand("snr", "signal mixing angle and noise over a length sweep");
    auto* eva = app.add_subcommand("evaluate", "simulate, reconstruct and score against the target");
    add_common(sim, o, true, false);
    add_common(rec, o, false, true);
    add_common(snr, o, false, false);
    add_common(eva, o, true, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return report_error("UsageError", ErrorKind::config, e.what());
    }

    ScopedWarningHandler warnings([](const Warning& w) {
        std::cerr << json{{"warning", w.code}, {"message", w.message}}.dump() << '\n';
    });
    try {
        if (*sim) return cmd_simulate(o);
        if (*rec) return cmd_reconstruct(o);
        if (*snr) return cmd_snr(o);
        return cmd_evaluate(o);
    } catch (const Error& e) {
        return report_error(e.code(), e.kind(), e.what());
    } catch (const json::exception& e) {
        return report_error("SchemaViolation", ErrorKind::config, e.what());
    } catch (const fs::filesystem_error& e) {
        return report_error("IoError", ErrorKind::io, e.what());
    } catch (const std::exception& e) {
        return report_error("InternalError", ErrorKind::numerical, e.what());
    }
}
