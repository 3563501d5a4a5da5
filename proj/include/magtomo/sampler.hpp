#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "distributions.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "philox.hpp"
#include "states.hpp"

namespace magtomo {

enum class PhiMode { uniform, stratified };

struct QuadratureSample {
    double a = 0.0;
    double phi = 0.0;  // [0, pi)
    bool operator==(const QuadratureSample&) const = default;
};

struct DatasetMeta {
    TargetStateSpec spec;
    SignalModel signal;
    NoiseModel noise;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    PhiMode phi_mode = PhiMode::uniform;
    int tabulation_nodes = 4096;
};

struct HomodyneDataset {
    std::vector<QuadratureSample> samples;
    DatasetMeta meta;
};

// Tabulated CDF of p_a(., phi) with monotone cubic Hermite interpolation.
class OutputCdf {
public:
    OutputCdf(const TargetStateSpec& spec, const SignalModel& sig, const NoiseModel& noise, double phi,
              int nodes = 4096) {
        if (nodes < 3) throw InvalidArgument("OutputCdf: need at least 3 nodes");
        const auto [lo, hi] = p_a_support(spec, sig, noise, phi);
        const int k = nodes;
        x_.resize(k);
        c_.resize(k);
        d_.resize(k);
        const double h = (hi - lo) / (k - 1);
        const OutputDensity pdf(spec, sig, noise, phi);
        for (int i = 0; i < k; ++i) {
            x_[i] = lo + h * i;
            d_[i] = pdf(x_[i]);
        }
        c_[0] = 0.0;
        for (int i = 0; i + 1 < k; ++i) {
            const double mid = pdf(x_[i] + 0.5 * h);
            c_[i + 1] = c_[i] + h / 6.0 * (d_[i] + 4.0 * mid + d_[i + 1]);
        }
        const double total = c_.back();
        if (!(total > 0.0) || !std::isfinite(total))
            throw ZeroProbabilitySample("OutputCdf: p_a has no mass on its support");
        for (int i = 0; i < k; ++i) {
            c_[i] /= total;
            d_[i] = std::max(d_[i], 0.0) / total;
        }
        c_.back() = 1.0;
        // Fritsch-Carlson limiting keeps each cell monotone.
        for (int i = 0; i + 1 < k; ++i) {
            const double delta = (c_[i + 1] - c_[i]) / h;
            if (delta <= 0.0) {
                d_[i] = d_[i + 1] = 0.0;
                continue;
            }
            const double al = d_[i] / delta, be = d_[i + 1] / delta;
            const double r = al * al + be * be;
            if (r > 9.0) {
                const double t = 3.0 / std::sqrt(r);
                d_[i] = t * al * delta;
                d_[i + 1] = t * be * delta;
            }
        }
    }

    double lo() const { return x_.front(); }
    double hi() const { return x_.back(); }

    double cdf(double x) const {
        if (x <= x_.front()) return 0.0;
        if (x >= x_.back()) return 1.0;
        const auto i = cell(x);
        return hermite(i, x);
    }

    // Inverse CDF: cell by binary search, then bisection on the cubic.
    double quantile(double u) const {
        if (u <= 0.0) return x_.front();
        if (u >= 1.0) return x_.back();
        const auto it = std::upper_bound(c_.begin(), c_.end(), u);
        const std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - c_.begin() - 1, 0));
        if (i + 1 >= x_.size()) return x_.back();
        double a = x_[i], b = x_[i + 1];
        for (int it2 = 0; it2 < 60 && b - a > 0.0; ++it2) {
            const double m = 0.5 * (a + b);
            if (m <= a || m >= b) break;
            (hermite(i, m) < u ? a : b) = m;
        }
        return 0.5 * (a + b);
    }

private:
    std::vector<double> x_, c_, d_;

    std::size_t cell(double x) const {
        const double h = x_[1] - x_[0];
        auto i = static_cast<std::size_t>((x - x_[0]) / h);
        return std::min(i, x_.size() - 2);
    }

    double hermite(std::size_t i, double x) const {
        const double h = x_[i + 1] - x_[i];
        const double t = (x - x_[i]) / h, t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * c_[i] + (t3 - 2 * t2 + t) * h * d_[i] + (-2 * t3 + 3 * t2) * c_[i + 1] +
               (t3 - t2) * h * d_[i + 1];
    }
};

namespace detail {

inline constexpr std::size_t sample_block = 1024;

inline double clamp_phase(double phi) { return phi < pi ? phi : std::nextafter(pi, 0.0); }

// Philox block for sample i on a stream: counter (i lo, i hi, stream, 0), key = seed halves.
inline Philox4x32::Counter draw(std::uint64_t seed, std::uint64_t i, std::uint32_t stream) {
    return Philox4x32::block({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32), stream, 0u},
                             Philox4x32::key_from_seed(seed));
}

}  // namespace detail

// n samples: phi uniform on [0, pi) (or stratified with jitter), a by inverse CDF of p_a(., phi).
inline HomodyneDataset sample_dataset(const TargetStateSpec& spec, const SignalModel& sig, const NoiseModel& noise,
                                      std::size_t n, std::uint64_t seed, PhiMode mode = PhiMode::uniform,
                                      unsigned workers = thread_count()) {
    spec.validate();
    sig.validate();
    noise.validate();
    if (spec.variant == StateVariant::fock)
        throw UnsupportedState("sample_dataset: Fock states have no closed-form p_a");
    HomodyneDataset ds;
    ds.meta = DatasetMeta{spec, sig, noise, seed, n, mode, 4096};
    ds.samples.resize(n);
    const std::size_t blocks = (n + detail::sample_block - 1) / detail::sample_block;
    parallel_tasks(
        blocks,
        [&](std::size_t b) {
            const std::size_t end = std::min(n, (b + 1) * detail::sample_block);
            for (std::size_t i = b * detail::sample_block; i < end; ++i) {
                const auto w = detail::draw(seed, i, 0);
                const double u_phi = unit_double(w[0], w[1]), u_a = unit_double(w[2], w[3]);
                const double phi = detail::clamp_phase(
                    mode == PhiMode::uniform ? pi * u_phi : pi * (static_cast<double>(i) + u_phi) / n);
                const OutputCdf cdf(spec, sig, noise, phi, ds.meta.tabulation_nodes);
                ds.samples[i] = {cdf.quantile(u_a), phi};
            }
        },
        workers);
    return ds;
}

// n draws of a at a fixed phi from one shared table (stream 1).
inline std::vector<double> sample_at_phi(const TargetStateSpec& spec, const SignalModel& sig, const NoiseModel& noise,
                                         double phi, std::size_t n, std::uint64_t seed) {
    const OutputCdf cdf(spec, sig, noise, phi);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto w = detail::draw(seed, i, 1);
        out[i] = cdf.quantile(unit_double(w[0], w[1]));
    }
    return out;
}

inline const char* phi_mode_name(PhiMode m) { return m == PhiMode::uniform ? "uniform" : "stratified"; }

inline void to_json(nlohmann::json& j, const DatasetMeta& m) {
    j = {{"spec", m.spec},   {"signal", m.signal},         {"noise", m.noise},
         {"seed", m.seed},   {"n", m.n},                   {"rng", Philox4x32::name},
         {"phi_mode", phi_mode_name(m.phi_mode)},          {"tabulation_nodes", m.tabulation_nodes}};
}

inline void from_json(const nlohmann::json& j, DatasetMeta& m) {
    const std::string where = "dataset meta";
    detail::require_keys(j, {"spec", "signal", "noise", "seed", "n", "rng", "phi_mode", "tabulation_nodes"}, where);
    for (const char* k : {"spec", "signal", "noise", "seed", "n"})
        if (!j.contains(k)) throw SchemaViolation(where + ": missing field \"" + k + "\"");
    m.spec = j.at("spec").get<TargetStateSpec>();
    m.signal = j.at("signal").get<SignalModel>();
    m.noise = j.at("noise").get<NoiseModel>();
    if (!j.at("seed").is_number_unsigned() || !j.at("n").is_number_unsigned())
        throw SchemaViolation(where + ": seed and n must be non-negative integers");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n = j.at("n").get<std::size_t>();
    if (j.contains("rng") && j.at("rng") != Philox4x32::name)
        throw SchemaViolation(where + ": unsupported rng " + j.at("rng").dump());
    m.phi_mode = PhiMode::uniform;
    if (j.contains("phi_mode")) {
        const auto s = j.at("phi_mode").get<std::string>();
        if (s == "stratified") m.phi_mode = PhiMode::stratified;
        else if (s != "uniform") throw SchemaViolation(where + ": unknown phi_mode \"" + s + "\"");
    }
    m.tabulation_nodes = j.value("tabulation_nodes", 4096);
}

// data.csv -> data.meta.json
inline std::filesystem::path meta_path(const std::filesystem::path& csv) {
    auto p = csv;
    p.replace_extension(".meta.json");
    return p;
}

inline void write_dataset(const HomodyneDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "a,phi\n";
    char buf[64];
    for (const auto& s : ds.samples) {
        const int len = std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", s.a, s.phi);
        out.write(buf, len);
    }
    if (!out) throw IoError("write failed: " + path.string());
    std::ofstream meta(meta_path(path));
    if (!meta) throw IoError("cannot open " + meta_path(path).string() + " for writing");
    meta << nlohmann::json(ds.meta).dump(2) << '\n';
    if (!meta) throw IoError("write failed: " + meta_path(path).string());
}

namespace detail {

inline double parse_field(std::string_view f, std::size_t line, const char* name) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || p != f.data() + f.size())
        throw SchemaViolation("line " + std::to_string(line) + ": cannot parse " + name + " \"" + std::string(f) + "\"");
    return v;
}

}  // namespace detail

inline HomodyneDataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    HomodyneDataset ds;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw SchemaViolation("line 1: empty file, expected header \"a,phi\"");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "a,phi") throw SchemaViolation("line 1: expected header \"a,phi\", got \"" + line + "\"");
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw SchemaViolation("line " + std::to_string(lineno) + ": empty line");
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw SchemaViolation("line " + std::to_string(lineno) + ": expected two fields");
        const std::string_view sv(line);
        const double a = detail::parse_field(sv.substr(0, comma), lineno, "a");
        const double phi = detail::parse_field(sv.substr(comma + 1), lineno, "phi");
        if (!std::isfinite(a)) throw SchemaViolation("line " + std::to_string(lineno) + ": a must be finite");
        if (!(phi >= 0.0 && phi < pi))
            throw SchemaViolation("line " + std::to_string(lineno) + ": phi = " + std::string(sv.substr(comma + 1)) +
                                  " outside [0, pi)");
        ds.samples.push_back({a, phi});
    }
    if (ds.samples.empty()) throw SchemaViolation("line " + std::to_string(lineno + 1) + ": dataset has no samples");
    const auto mp = meta_path(path);
    std::ifstream meta(mp);
    if (!meta) throw IoError("missing side-car " + mp.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation(mp.string() + ": " + e.what());
    }
    ds.meta = j.get<DatasetMeta>();
    if (ds.meta.n != ds.samples.size())
        throw SchemaViolation("meta n = " + std::to_string(ds.meta.n) + " but file has " +
                              std::to_string(ds.samples.size()) + " samples");
    return ds;
}

}  // namespace magtomo
