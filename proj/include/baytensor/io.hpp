#pragma once

// File formats: a self-describing binary tensor record, order-2 CSV,
// persisted chain traces and MAP fits, the JSON run configuration and the
// replication report writers.
//
// Tensor record layout (all integers and reals little-endian):
//   "TBT1" | u8 version | u8 order | order x u64 extents | prod(extents) x f64

#include "baytensor/dim_mh.hpp"
#include "baytensor/errors.hpp"
#include "baytensor/map_sa.hpp"
#include "baytensor/model.hpp"
#include "baytensor/sim.hpp"
#include "baytensor/tensor.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace baytensor {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io {

inline constexpr std::array<char, 4> tensor_magic{'T', 'B', 'T', '1'};
inline constexpr std::uint8_t tensor_version = 1;
inline constexpr std::array<char, 4> trace_magic{'T', 'B', 'C', 'T'};
inline constexpr std::array<char, 4> fit_magic{'T', 'B', 'M', 'F'};
inline constexpr std::uint8_t container_version = 1;

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b.data(), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
    std::array<unsigned char, 8> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw IoError("unexpected end of file");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

inline void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }
inline std::uint8_t get_u8(std::istream& is) {
    char c = 0;
    if (!is.get(c)) throw IoError("unexpected end of file");
    return static_cast<std::uint8_t>(c);
}

inline void expect_magic(std::istream& is, const std::array<char, 4>& magic, const char* what) {
    std::array<char, 4> got{};
    if (!is.read(got.data(), 4) || got != magic) throw IoError(std::string("not a ") + what + " (bad magic)");
}

inline void put_dims(std::ostream& os, const Dims& d) {
    put_u64(os, d.size());
    for (std::size_t v : d) put_u64(os, v);
}

inline Dims get_dims(std::istream& is) {
    const std::uint64_t n = get_u64(is);
    if (n > 255) throw IoError("implausible dimension count in header");
    Dims d(n);
    for (auto& v : d) v = get_u64(is);
    return d;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return is;
}

}  // namespace detail

/// Writes one tensor record. Payload bits are copied verbatim, NaN included.
inline void write_tensor(std::ostream& os, const Tensor& t) {
    if (t.order() > 255) throw ShapeError("tensor order exceeds 255");
    os.write(tensor_magic.data(), 4);
    detail::put_u8(os, tensor_version);
    detail::put_u8(os, static_cast<std::uint8_t>(t.order()));
    for (std::size_t d : t.dims()) detail::put_u64(os, d);
    for (double v : t.data()) detail::put_f64(os, v);
    if (!os) throw IoError("write failed");
}

/// Reads one tensor record verbatim. Use require_finite before handing the
/// result to a fitting routine.
inline Tensor read_tensor(std::istream& is) {
    detail::expect_magic(is, tensor_magic, "tensor file");
    const std::uint8_t version = detail::get_u8(is);
    if (version != tensor_version) throw IoError("unsupported tensor file version " + std::to_string(version));
    const std::uint8_t order = detail::get_u8(is);
    if (order == 0) throw IoError("tensor file declares order 0");
    Dims dims(order);
    std::size_t n = 1;
    for (auto& d : dims) {
        d = detail::get_u64(is);
        if (d == 0) throw IoError("tensor file declares a zero extent");
        if (n > std::numeric_limits<std::size_t>::max() / d) throw IoError("tensor file extents overflow");
        n *= d;
    }
    std::vector<double> data(n);
    for (auto& v : data) v = detail::get_f64(is);
    return Tensor(std::move(dims), std::move(data));
}

inline void require_finite(const Tensor& t, const std::string& what) {
    for (std::size_t k = 0; k < t.size(); ++k)
        if (!std::isfinite(t[k]))
            throw ConfigError(what + " contains a non-finite value at linear index " + std::to_string(k));
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    auto os = detail::open_out(path);
    write_tensor(os, t);
}

inline Tensor load_tensor(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    Tensor t = read_tensor(is);
    if (is.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes after tensor");
    return t;
}

/// Order-2 tensor as comma-separated rows, 17 significant digits.
inline void write_csv_matrix(std::ostream& os, const Tensor& t) {
    if (t.order() != 2) throw ShapeError("CSV output supports order-2 tensors only");
    os << std::setprecision(17);
    for (std::size_t i = 0; i < t.dim(0); ++i) {
        for (std::size_t j = 0; j < t.dim(1); ++j) os << (j ? "," : "") << t.at({i, j});
        os << '\n';
    }
}

inline Tensor read_csv_matrix(std::istream& is) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw ConfigError("CSV cell '" + cell + "' is not a number");
            }
            if (cell.find_first_not_of(" \t", used) != std::string::npos)
                throw ConfigError("CSV cell '" + cell + "' is not a number");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) throw ShapeError("CSV rows have unequal lengths");
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().empty()) throw ConfigError("CSV input is empty");
    Tensor t({rows.size(), rows.front().size()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) t[i + rows.size() * j] = rows[i][j];
    return t;
}

enum class TensorFormat { binary, csv };

inline TensorFormat parse_format(const std::string& s) {
    if (s == "binary" || s == "tbt") return TensorFormat::binary;
    if (s == "csv") return TensorFormat::csv;
    throw ConfigError("unknown tensor format '" + s + "' (expected binary or csv)");
}

inline Tensor load_tensor(const std::filesystem::path& path, TensorFormat fmt) {
    if (fmt == TensorFormat::binary) return load_tensor(path);
    auto is = detail::open_in(path);
    return read_csv_matrix(is);
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t, TensorFormat fmt) {
    if (fmt == TensorFormat::binary) return save_tensor(path, t);
    auto os = detail::open_out(path);
    write_csv_matrix(os, t);
}

namespace detail {

inline void put_shape(std::ostream& os, const ModelShape& s) {
    put_u64(os, s.n_samples);
    put_dims(os, s.predictor);
    put_dims(os, s.response);
}

inline ModelShape get_shape(std::istream& is) {
    ModelShape s;
    s.n_samples = get_u64(is);
    s.predictor = get_dims(is);
    s.response = get_dims(is);
    s.validate();
    return s;
}

inline Tensor theta_tensor(const CoreDim& theta) {
    const Dims f = theta.flat();
    std::vector<double> v(f.begin(), f.end());
    return Tensor({f.size()}, std::move(v));
}

inline CoreDim theta_from_tensor(const Tensor& t, std::size_t L) {
    Dims f(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (!(t[k] >= 1.0) || t[k] != std::floor(t[k])) throw IoError("stored theta is not a positive integer tuple");
        f[k] = static_cast<std::size_t>(t[k]);
    }
    return CoreDim::from_flat(f, L);
}

inline Tensor scalar_tensor(double v) { return Tensor({1}, {v}); }

}  // namespace detail

/// Trace container:
///   "TBCT" | u8 version | shape | u64 burn_in | u64 seed | u64 n_draws |
///   n_draws x (u64 iteration, u64 byte offset of the draw's records) |
///   per draw: theta, sigma2 and B as three tensor records.
/// Offsets count from the start of the file.
inline void write_trace(std::ostream& os, const ChainTrace& trace) {
    std::vector<std::string> blobs;
    for (const auto& d : trace.draws) {
        std::ostringstream b(std::ios::binary);
        write_tensor(b, detail::theta_tensor(d.theta));
        write_tensor(b, detail::scalar_tensor(d.sigma2));
        write_tensor(b, d.coefficient());
        blobs.push_back(std::move(b).str());
    }
    std::ostringstream head(std::ios::binary);
    head.write(trace_magic.data(), 4);
    detail::put_u8(head, container_version);
    detail::put_shape(head, trace.shape);
    detail::put_u64(head, trace.burn_in);
    detail::put_u64(head, trace.seed);
    detail::put_u64(head, trace.draws.size());
    const std::uint64_t header_size = static_cast<std::uint64_t>(head.tellp()) + 16 * trace.draws.size();
    std::uint64_t offset = header_size;
    for (std::size_t i = 0; i < trace.draws.size(); ++i) {
        detail::put_u64(head, trace.draws[i].iteration);
        detail::put_u64(head, offset);
        offset += blobs[i].size();
    }
    os << head.str();
    for (const auto& b : blobs) os.write(b.data(), static_cast<std::streamsize>(b.size()));
    if (!os) throw IoError("write failed");
}

inline ChainTrace read_trace(std::istream& is) {
    detail::expect_magic(is, trace_magic, "trace file");
    if (detail::get_u8(is) != container_version) throw IoError("unsupported trace file version");
    ChainTrace trace;
    trace.shape = detail::get_shape(is);
    trace.burn_in = detail::get_u64(is);
    trace.seed = detail::get_u64(is);
    const std::uint64_t n = detail::get_u64(is);
    std::vector<std::uint64_t> iterations;
    for (std::uint64_t i = 0; i < n; ++i) {
        iterations.push_back(detail::get_u64(is));
        (void)detail::get_u64(is);  // offset; records are read sequentially
    }
    for (std::uint64_t i = 0; i < n; ++i) {
        ChainTrace::Draw d;
        d.iteration = iterations[i];
        d.theta = detail::theta_from_tensor(read_tensor(is), trace.shape.L());
        d.sigma2 = read_tensor(is)[0];
        Tensor b = read_tensor(is);
        if (b.dims() != trace.shape.coefficient_dims()) throw ShapeError("trace draw B has the wrong dims");
        d.b = std::move(b);
        trace.append(std::move(d));
    }
    return trace;
}

inline void save_trace(const std::filesystem::path& path, const ChainTrace& t) {
    auto os = detail::open_out(path);
    write_trace(os, t);
}

inline ChainTrace load_trace(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    return read_trace(is);
}

/// MAP fit container:
///   "TBMF" | u8 version | shape | f64 bic | f64 loglik |
///   records theta, sigma2, G, U_1..U_L, V_1..V_M, B.
inline void write_map_fit(std::ostream& os, const MapFit& fit, const ModelShape& shape) {
    os.write(fit_magic.data(), 4);
    detail::put_u8(os, container_version);
    detail::put_shape(os, shape);
    detail::put_f64(os, fit.bic);
    detail::put_f64(os, fit.loglik_at_map);
    write_tensor(os, detail::theta_tensor(fit.state.theta));
    write_tensor(os, detail::scalar_tensor(fit.state.sigma2));
    write_tensor(os, fit.state.g);
    for (const auto& m : fit.state.factors()) write_tensor(os, Tensor::from_matrix(m));
    write_tensor(os, assemble_B(fit.state));
    if (!os) throw IoError("write failed");
}

struct StoredFit {
    ModelShape shape;
    MapFit fit;
    Tensor b;
};

inline StoredFit read_map_fit(std::istream& is) {
    detail::expect_magic(is, fit_magic, "fit file");
    if (detail::get_u8(is) != container_version) throw IoError("unsupported fit file version");
    StoredFit out;
    out.shape = detail::get_shape(is);
    out.fit.bic = detail::get_f64(is);
    out.fit.loglik_at_map = detail::get_f64(is);
    ParamState& s = out.fit.state;
    s.theta = detail::theta_from_tensor(read_tensor(is), out.shape.L());
    s.sigma2 = read_tensor(is)[0];
    s.g = read_tensor(is);
    auto as_matrix = [](const Tensor& t) {
        if (t.order() != 2) throw IoError("stored factor is not a matrix");
        return Matrix(t.as_matrix(t.dim(0), t.dim(1)));
    };
    for (std::size_t l = 0; l < out.shape.L(); ++l) s.u.push_back(as_matrix(read_tensor(is)));
    for (std::size_t m = 0; m < out.shape.M(); ++m) s.v.push_back(as_matrix(read_tensor(is)));
    s.validate(out.shape);
    out.b = read_tensor(is);
    if (out.b.dims() != out.shape.coefficient_dims()) throw ShapeError("stored B has the wrong dims");
    return out;
}

inline void save_map_fit(const std::filesystem::path& path, const MapFit& fit, const ModelShape& shape) {
    auto os = detail::open_out(path);
    write_map_fit(os, fit, shape);
}

inline StoredFit load_map_fit(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    return read_map_fit(is);
}

/// Which container a path holds, judged by its magic bytes.
enum class ArtifactKind { tensor, trace, fit, unknown };

inline ArtifactKind sniff(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    std::array<char, 4> m{};
    if (!is.read(m.data(), 4)) return ArtifactKind::unknown;
    if (m == tensor_magic) return ArtifactKind::tensor;
    if (m == trace_magic) return ArtifactKind::trace;
    if (m == fit_magic) return ArtifactKind::fit;
    return ArtifactKind::unknown;
}

// ---------------------------------------------------------------------------
// Run configuration

using nlohmann::json;

/// Everything a CLI run can be configured with. Defaults match the library defaults.
struct RunConfig {
    PriorConfig prior;
    MhConfig mcmc;
    std::optional<CoreDim> mcmc_bounds;
    SaConfig fast;
    SimConfig sim;
    std::vector<Method> methods{Method::mcmc, Method::fast, Method::ols};
    CoverageConfig coverage;
    bool fast_pick_best = false;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string out_dir = "out";
    TensorFormat format = TensorFormat::binary;
    double level = 0.95;
    std::size_t predictive_draws = 1;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read_key(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

inline CoreDim parse_theta(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object with keys r and s");
    reject_unknown(j, {"r", "s"}, where);
    CoreDim t;
    read_key(j, "r", t.r, where);
    read_key(j, "s", t.s, where);
    if (t.r.empty() || t.s.empty()) throw ConfigError(where + " needs non-empty r and s");
    return t;
}

inline json theta_json(const CoreDim& t) { return json{{"r", t.r}, {"s", t.s}}; }

inline Schedule parse_schedule(const std::string& s) {
    if (s == "geometric") return Schedule::geometric;
    if (s == "logarithmic") return Schedule::logarithmic;
    throw ConfigError("unknown schedule '" + s + "' (expected geometric or logarithmic)");
}

inline Design parse_design(const std::string& s) {
    if (s == "uncorrelated") return Design::uncorrelated;
    if (s == "correlated") return Design::correlated;
    throw ConfigError("unknown design '" + s + "' (expected uncorrelated or correlated)");
}

}  // namespace detail

/// Parses a run configuration. Unknown keys anywhere are rejected.
///
///   { "model": { "n_samples", "predictor", "response", "prior": {mu_u, mu_v, mu_g,
///                var_u, var_v, var_g, alpha, beta} },
///     "mcmc":  { b, iterations, burn_in, thin, inner_sweeps, fit_init ("warm"|"prior_mean"),
///                initial_theta, bounds, move_dimension },
///     "fast":  { iterations, inner_passes, tol, schedule, gamma, zeta0, probes, initial_theta,
///                bounds, pick_best },
///     "sim":   { theta_star, snr, noiseless, design, r, n_replicates, n_eval_sets,
///                n_eval_samples, methods, coverage_level, coverage_sets, coverage_samples },
///     "io":    { seed, threads, out_dir, format, level, predictive_draws } }
inline RunConfig parse_run_config(const json& j) {
    using detail::read_key;
    RunConfig c;
    detail::reject_unknown(j, {"model", "mcmc", "fast", "sim", "io"}, "config");

    if (j.contains("model")) {
        const json& m = j["model"];
        detail::reject_unknown(m, {"n_samples", "predictor", "response", "prior"}, "model");
        read_key(m, "n_samples", c.sim.shape.n_samples, "model");
        read_key(m, "predictor", c.sim.shape.predictor, "model");
        read_key(m, "response", c.sim.shape.response, "model");
        if (m.contains("prior")) {
            const json& p = m["prior"];
            detail::reject_unknown(p, {"mu_u", "mu_v", "mu_g", "var_u", "var_v", "var_g", "alpha", "beta"}, "model.prior");
            read_key(p, "mu_u", c.prior.mu_u, "model.prior");
            read_key(p, "mu_v", c.prior.mu_v, "model.prior");
            read_key(p, "mu_g", c.prior.mu_g, "model.prior");
            read_key(p, "var_u", c.prior.var_u, "model.prior");
            read_key(p, "var_v", c.prior.var_v, "model.prior");
            read_key(p, "var_g", c.prior.var_g, "model.prior");
            read_key(p, "alpha", c.prior.alpha, "model.prior");
            read_key(p, "beta", c.prior.beta, "model.prior");
        }
    }
    if (j.contains("mcmc")) {
        const json& m = j["mcmc"];
        detail::reject_unknown(m, {"b", "iterations", "burn_in", "thin", "inner_sweeps", "fit_init", "initial_theta",
                                   "bounds", "move_dimension"},
                               "mcmc");
        if (m.contains("b")) {
            double b = 0.0;
            read_key(m, "b", b, "mcmc");
            try {
                c.mcmc.b = Fraction(b);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("mcmc.b: ") + e.what());
            }
        }
        read_key(m, "iterations", c.mcmc.iterations, "mcmc");
        read_key(m, "burn_in", c.mcmc.burn_in, "mcmc");
        read_key(m, "thin", c.mcmc.thin, "mcmc");
        read_key(m, "inner_sweeps", c.mcmc.inner_sweeps, "mcmc");
        read_key(m, "move_dimension", c.mcmc.move_dimension, "mcmc");
        if (m.contains("fit_init")) {
            std::string s;
            read_key(m, "fit_init", s, "mcmc");
            if (s == "warm")
                c.mcmc.fit_init = FitInit::warm;
            else if (s == "prior_mean")
                c.mcmc.fit_init = FitInit::prior_mean;
            else
                throw ConfigError("mcmc.fit_init must be warm or prior_mean");
        }
        if (m.contains("initial_theta")) c.mcmc.initial_theta = detail::parse_theta(m["initial_theta"], "mcmc.initial_theta");
        if (m.contains("bounds")) c.mcmc_bounds = detail::parse_theta(m["bounds"], "mcmc.bounds");
    }
    if (j.contains("fast")) {
        const json& f = j["fast"];
        detail::reject_unknown(f, {"iterations", "inner_passes", "tol", "schedule", "gamma", "zeta0", "probes",
                                   "initial_theta", "bounds", "pick_best"},
                               "fast");
        read_key(f, "iterations", c.fast.iterations, "fast");
        read_key(f, "inner_passes", c.fast.inner_passes, "fast");
        read_key(f, "tol", c.fast.tol, "fast");
        read_key(f, "gamma", c.fast.gamma, "fast");
        read_key(f, "probes", c.fast.probes, "fast");
        read_key(f, "pick_best", c.fast_pick_best, "fast");
        if (f.contains("zeta0")) {
            double z = 0.0;
            read_key(f, "zeta0", z, "fast");
            c.fast.zeta0 = z;
        }
        if (f.contains("schedule")) {
            std::string s;
            read_key(f, "schedule", s, "fast");
            c.fast.schedule = detail::parse_schedule(s);
        }
        if (f.contains("initial_theta")) c.fast.initial_theta = detail::parse_theta(f["initial_theta"], "fast.initial_theta");
        if (f.contains("bounds")) c.fast.bounds = detail::parse_theta(f["bounds"], "fast.bounds");
    }
    if (j.contains("sim")) {
        const json& s = j["sim"];
        detail::reject_unknown(s, {"theta_star", "snr", "noiseless", "design", "r", "n_replicates", "n_eval_sets",
                                   "n_eval_samples", "methods", "coverage_level", "coverage_sets", "coverage_samples"},
                               "sim");
        if (s.contains("theta_star")) c.sim.theta_star = detail::parse_theta(s["theta_star"], "sim.theta_star");
        read_key(s, "snr", c.sim.snr, "sim");
        read_key(s, "noiseless", c.sim.noiseless, "sim");
        read_key(s, "r", c.sim.r, "sim");
        read_key(s, "n_replicates", c.sim.n_replicates, "sim");
        read_key(s, "n_eval_sets", c.sim.n_eval_sets, "sim");
        read_key(s, "n_eval_samples", c.sim.n_eval_samples, "sim");
        read_key(s, "coverage_level", c.coverage.level, "sim");
        read_key(s, "coverage_sets", c.coverage.sets, "sim");
        read_key(s, "coverage_samples", c.coverage.samples, "sim");
        if (s.contains("design")) {
            std::string d;
            read_key(s, "design", d, "sim");
            c.sim.design = detail::parse_design(d);
        }
        if (s.contains("methods")) {
            std::vector<std::string> names;
            read_key(s, "methods", names, "sim");
            c.methods.clear();
            for (const auto& n : names) c.methods.push_back(parse_method(n));
        }
    }
    if (j.contains("io")) {
        const json& o = j["io"];
        detail::reject_unknown(o, {"seed", "threads", "out_dir", "format", "level", "predictive_draws"}, "io");
        read_key(o, "seed", c.seed, "io");
        read_key(o, "threads", c.threads, "io");
        read_key(o, "out_dir", c.out_dir, "io");
        read_key(o, "level", c.level, "io");
        read_key(o, "predictive_draws", c.predictive_draws, "io");
        if (o.contains("format")) {
            std::string f;
            read_key(o, "format", f, "io");
            c.format = parse_format(f);
        }
    }
    c.prior.validate();
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// One row per replicate x method.
inline void write_report_csv(std::ostream& os, const ReplicationReport& rep) {
    os << "replicate,method,rpe,theta,n_params,recovered,coverage,acceptance_rate,error\n";
    for (const auto& r : rep.rows) {
        os << r.replicate << ',' << method_name(r.method) << ',' << format_double(r.rpe) << ','
           << (r.theta ? '"' + r.theta->to_string() + '"' : std::string()) << ','
           << (r.n_params ? std::to_string(*r.n_params) : std::string()) << ','
           << (r.recovered ? (*r.recovered ? "1" : "0") : "") << ','
           << (r.coverage ? format_double(*r.coverage) : std::string()) << ','
           << (r.acceptance_rate ? format_double(*r.acceptance_rate) : std::string()) << ',';
        std::string e = r.error;
        for (char& ch : e)
            if (ch == '"' || ch == ',' || ch == '\n') ch = ' ';
        os << e << '\n';
    }
}

/// Aggregates per method: RPE, parameter count, recovery and coverage as
/// mean and standard deviation across replicates. Wall times are left out so
/// the file is reproducible.
inline json report_json(const ReplicationReport& rep, const SimConfig& sim) {
    json j;
    j["config"] = {{"n_samples", sim.shape.n_samples},
                   {"predictor", sim.shape.predictor},
                   {"response", sim.shape.response},
                   {"theta_star", detail::theta_json(sim.theta_star)},
                   {"snr", sim.noiseless ? json(nullptr) : json(sim.snr)},
                   {"noiseless", sim.noiseless},
                   {"design", sim.design == Design::correlated ? "correlated" : "uncorrelated"},
                   {"r", sim.r},
                   {"n_replicates", sim.n_replicates},
                   {"n_eval_sets", sim.n_eval_sets},
                   {"n_eval_samples", sim.n_eval_samples},
                   {"seed", sim.seed}};
    json methods = json::object();
    for (const auto& s : rep.summary) {
        json m{{"n_ok", s.n_ok}, {"rpe_mean", s.rpe_mean}, {"rpe_sd", s.rpe_sd}};
        m["recovery_rate"] = s.recovery_rate ? json(*s.recovery_rate) : json(nullptr);
        m["params_mean"] = s.params_mean ? json(*s.params_mean) : json(nullptr);
        m["params_sd"] = s.params_sd ? json(*s.params_sd) : json(nullptr);
        m["coverage_mean"] = s.coverage_mean ? json(*s.coverage_mean) : json(nullptr);
        m["coverage_sd"] = s.coverage_sd ? json(*s.coverage_sd) : json(nullptr);
        methods[method_name(s.method)] = m;
    }
    j["methods"] = methods;
    std::size_t failures = 0;
    for (const auto& r : rep.rows) failures += r.error.empty() ? 0 : 1;
    j["failures"] = failures;
    return j;
}

inline json timing_json(const ReplicationReport& rep) {
    json j = json::object();
    for (const auto& s : rep.summary) j[method_name(s.method)] = {{"seconds_mean", s.seconds_mean}};
    return j;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    auto os = detail::open_out(path);
    os << j.dump(2) << '\n';
}

}  // namespace io
}  // namespace baytensor
