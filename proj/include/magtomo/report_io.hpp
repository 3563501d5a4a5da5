#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "error.hpp"
#include "fock.hpp"
#include "json.hpp"
#include "mle.hpp"
#include "pipeline.hpp"

namespace magtomo {

inline constexpr const char* report_format = "magtomo.reconstruction_report";
inline constexpr int report_version = 1;
inline constexpr const char* matrix_layout = "row-major complex128, (re, im) float64 little-endian";

inline std::string base64_encode(const std::vector<unsigned char>& bytes) {
    namespace it = boost::archive::iterators;
    using enc = it::base64_from_binary<it::transform_width<std::vector<unsigned char>::const_iterator, 6, 8>>;
    std::string out(enc(bytes.begin()), enc(bytes.end()));
    out.append((3 - bytes.size() % 3) % 3, '=');
    return out;
}

inline std::vector<unsigned char> base64_decode(std::string s) {
    namespace it = boost::archive::iterators;
    using dec = it::transform_width<it::binary_from_base64<std::string::const_iterator>, 8, 6>;
    if (s.size() % 4 != 0) throw SchemaViolation("base64 payload length " + std::to_string(s.size()) + " is not a multiple of 4");
    const auto pad = static_cast<std::size_t>(std::count(s.end() - std::min<std::size_t>(2, s.size()), s.end(), '='));
    std::replace(s.end() - static_cast<std::ptrdiff_t>(pad), s.end(), '=', 'A');
    std::vector<unsigned char> out;
    try {
        out.assign(dec(s.cbegin()), dec(s.cend()));
    } catch (const std::exception& e) {
        throw SchemaViolation(std::string("invalid base64 payload: ") + e.what());
    }
    out.resize(out.size() - pad);
    return out;
}

namespace detail {

inline void put_f64le(std::vector<unsigned char>& out, double v) {
    auto u = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(u >> (8 * b)));
}

inline double get_f64le(const unsigned char* p) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return std::bit_cast<double>(u);
}

}  // namespace detail

inline std::string encode_matrix(const CMat& m) {
    std::vector<unsigned char> bytes;
    bytes.reserve(static_cast<std::size_t>(m.size()) * 16);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            detail::put_f64le(bytes, m(i, j).real());
            detail::put_f64le(bytes, m(i, j).imag());
        }
    return base64_encode(bytes);
}

inline CMat decode_matrix(const std::string& data, int rows, int cols) {
    const auto bytes = base64_decode(data);
    const auto want = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 16;
    if (bytes.size() != want)
        throw SchemaViolation("matrix payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(want));
    CMat m(rows, cols);
    const unsigned char* p = bytes.data();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j, p += 16) m(i, j) = cplx(detail::get_f64le(p), detail::get_f64le(p + 8));
    return m;
}

inline nlohmann::json complex_json(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }

inline void to_json(nlohmann::json& j, const ReconstructionMetrics& m) {
    j = {{"fidelity_to_target", m.fidelity_to_target},
         {"mean_m", complex_json(m.mean_m)},
         {"mean_m_target", complex_json(m.mean_m_target)},
         {"phase_error_deg", m.phase_error_deg ? nlohmann::json(*m.phase_error_deg) : nlohmann::json(nullptr)}};
    if (m.fidelity_to_classical) j["fidelity_to_classical"] = *m.fidelity_to_classical;
}

inline nlohmann::json report_to_json(const ReconstructionReport& r) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& [it, ll] : r.loglik_trace) trace.push_back({it, ll});
    nlohmann::json warnings = nlohmann::json::array();
    for (const auto& w : r.warnings) warnings.push_back({{"code", w.code}, {"message", w.message}});
    const int d = r.rho_pred.dim();
    return {{"format", report_format},
            {"version", report_version},
            {"dim", d},
            {"rho_pred", {{"layout", matrix_layout}, {"encoding", "base64"}, {"data", encode_matrix(r.rho_pred.elements)}}},
            {"iterations", r.iterations},
            {"final_step_norm", r.final_step_norm},
            {"converged", r.converged},
            {"stop_reason", r.stop_reason},
            {"loglik_trace", trace},
            {"diluted_steps", r.diluted_steps},
            {"trace_renormalizations", r.trace_renormalizations},
            {"max_trace_drift", r.max_trace_drift},
            {"warnings", warnings}};
}

// Accepts the fields written by report_to_json plus optional "metrics" and "run" blocks.
inline ReconstructionReport report_from_json(const nlohmann::json& j) {
    const std::string where = "report";
    if (!j.is_object()) throw SchemaViolation(where + ": expected an object");
    detail::require_keys(j,
                         {"format", "version", "dim", "rho_pred", "iterations", "final_step_norm", "converged",
                          "stop_reason", "loglik_trace", "diluted_steps", "trace_renormalizations", "max_trace_drift",
                          "warnings", "metrics", "run"},
                         where);
    try {
        if (j.at("format") != report_format) throw SchemaViolation(where + ": unknown format " + j.at("format").dump());
        if (j.at("version") != report_version) throw SchemaViolation(where + ": unsupported version " + j.at("version").dump());
        ReconstructionReport r;
        const int d = j.at("dim").get<int>();
        const auto& m = j.at("rho_pred");
        detail::require_keys(m, {"layout", "encoding", "data"}, where + ".rho_pred");
        if (m.at("encoding") != "base64" || m.at("layout") != matrix_layout)
            throw SchemaViolation(where + ".rho_pred: unsupported encoding or layout");
        r.rho_pred = DensityMatrix::validated(decode_matrix(m.at("data").get<std::string>(), d, d), 1e-9);
        r.iterations = j.at("iterations").get<int>();
        r.final_step_norm = j.at("final_step_norm").get<double>();
        r.converged = j.at("converged").get<bool>();
        r.stop_reason = j.at("stop_reason").get<std::string>();
        for (const auto& e : j.at("loglik_trace")) r.loglik_trace.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
        r.diluted_steps = j.at("diluted_steps").get<int>();
        r.trace_renormalizations = j.at("trace_renormalizations").get<int>();
        r.max_trace_drift = j.at("max_trace_drift").get<double>();
        for (const auto& w : j.at("warnings"))
            r.warnings.push_back({w.at("code").get<std::string>(), w.at("message").get<std::string>()});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation(where + ": " + e.what());
    }
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaViolation(path.string() + ": " + e.what());
    }
}

}  // namespace magtomo
