// Command-line driver: simulate, fit, predict, eval, replicate.
// Exit codes: 0 ok, 2 bad configuration or input, 3 shape mismatch, 4 numerical failure.

#include "baytensor/baytensor.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace baytensor;
using io::json;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> format;
    std::optional<std::string> out;
};

io::RunConfig resolve(const Common& c) {
    io::RunConfig rc = c.config.empty() ? io::RunConfig{} : io::load_run_config(c.config);
    if (c.seed) rc.seed = *c.seed;
    if (c.threads) {
        if (*c.threads == 0) throw ConfigError("--threads must be at least 1");
        rc.threads = *c.threads;
    }
    if (c.format) rc.format = io::parse_format(*c.format);
    if (c.out) rc.out_dir = *c.out;
    return rc;
}

std::string ext(io::TensorFormat f) { return f == io::TensorFormat::csv ? ".csv" : ".tbt"; }

fs::path prepare_out(const io::RunConfig& rc) {
    fs::path dir(rc.out_dir);
    fs::create_directories(dir);
    return dir;
}

Tensor load_input(const std::string& path, io::TensorFormat fmt, const std::string& what) {
    if (path.empty()) throw ConfigError(what + " path is required");
    Tensor t = io::load_tensor(path, fmt);
    if (t.size() == 0) throw ConfigError(what + " is empty");
    io::require_finite(t, what);
    return t;
}

int cmd_simulate(const Common& c, std::size_t replicate) {
    io::RunConfig rc = resolve(c);
    rc.sim.seed = rc.seed;
    rc.sim.validate();
    Rng rng = Rng::stream(rc.sim.seed, {replicate, 0});
    const SimDataset ds = gen_dataset(rc.sim, rng);
    const fs::path dir = prepare_out(rc);
    const std::string e = ext(rc.format);

    json files;
    auto save = [&](const std::string& name, const Tensor& t) {
        io::save_tensor(dir / (name + e), t, rc.format);
        files[name] = name + e;
    };
    save("x", ds.x);
    save("y", ds.y);
    save("b_true", ds.b_true);
    for (std::size_t k = 0; k < ds.eval.size(); ++k) {
        save("eval_x_" + std::to_string(k), ds.eval[k].x);
        save("eval_y_" + std::to_string(k), ds.eval[k].y);
    }
    json eval_scales = json::array();
    for (const auto& es : ds.eval) eval_scales.push_back(es.c);
    json manifest{{"seed", rc.sim.seed},
                  {"replicate", replicate},
                  {"n_samples", rc.sim.shape.n_samples},
                  {"predictor", rc.sim.shape.predictor},
                  {"response", rc.sim.shape.response},
                  {"theta_star", io::detail::theta_json(rc.sim.theta_star)},
                  {"noise_scale", ds.c},
                  {"eval_noise_scales", eval_scales},
                  {"snr", rc.sim.noiseless ? json(nullptr) : json(realized_snr(ds, rc.sim.shape.L()))},
                  {"files", files}};
    io::write_json(dir / "manifest.json", manifest);
    return 0;
}

int cmd_fit(const Common& c, const std::string& method, const std::string& x_path, const std::string& y_path) {
    const io::RunConfig rc = resolve(c);
    const Tensor x = load_input(x_path, rc.format, "X");
    const Tensor y = load_input(y_path, rc.format, "Y");
    const GibbsWorkspace ws(x, y, rc.prior);
    const ModelShape& shape = ws.shape();
    const fs::path dir = prepare_out(rc);

    json summary{{"method", method}, {"seed", rc.seed}};
    double seconds = 0.0;
    if (method == "mcmc") {
        MhConfig mc = rc.mcmc;
        mc.seed = rc.seed;
        const CoreDim bounds = rc.mcmc_bounds.value_or(CoreDim::extents(shape));
        McmcResult res = run_mcmc(ws, DimPrior::uniform(bounds), mc);
        seconds = res.seconds;
        if (res.trace.empty()) throw NumericalError("chain stored no draws: " + res.error);
        io::save_trace(dir / "trace.bin", res.trace);
        const CoreDim mode = res.trace.posterior_mode();
        summary["theta"] = io::detail::theta_json(mode);
        summary["param_count"] = param_count(shape, mode);
        summary["acceptance_rate"] = res.acceptance_rate();
        summary["n_draws"] = res.trace.draws.size();
        summary["aborted"] = res.aborted;
        if (res.aborted) {
            summary["error"] = res.error;
            io::write_json(dir / "summary.json", summary);
            io::write_json(dir / "timing.json", json{{"seconds", seconds}});
            throw NumericalError("chain aborted: " + res.error);
        }
    } else if (method == "fast") {
        SaConfig sc = rc.fast;
        sc.seed = rc.seed;
        FastResult res = run_fast(ws, sc);
        seconds = res.seconds;
        const MapFit& chosen = rc.fast_pick_best ? res.best : res.final;
        io::save_map_fit(dir / "fit.bin", chosen, shape);
        summary["theta"] = io::detail::theta_json(chosen.state.theta);
        summary["param_count"] = param_count(shape, chosen.state.theta);
        summary["bic"] = chosen.bic;
        summary["best_theta"] = io::detail::theta_json(res.best.state.theta);
        summary["best_bic"] = res.best.bic;
        summary["sa_accepted"] = res.accepted;
        summary["zeta0"] = res.zeta0;
    } else {
        throw ConfigError("--method must be mcmc or fast");
    }
    io::write_json(dir / "summary.json", summary);
    io::write_json(dir / "timing.json", json{{"seconds", seconds}});
    return 0;
}

int cmd_predict(const Common& c, const std::string& model, const std::string& x_path, std::optional<double> level) {
    const io::RunConfig rc = resolve(c);
    const Tensor x = load_input(x_path, rc.format, "X_new");
    const fs::path dir = prepare_out(rc);
    const std::string e = ext(rc.format);
    const double lvl = level.value_or(rc.level);

    switch (io::sniff(model)) {
        case io::ArtifactKind::trace: {
            const ChainTrace trace = io::load_trace(model);
            Rng rng = Rng::stream(rc.seed, {3});
            const PredictiveSummary ps = posterior_predict(trace, x, rc.predictive_draws, lvl, rng);
            io::save_tensor(dir / ("mean" + e), ps.mean, rc.format);
            io::save_tensor(dir / ("lower" + e), ps.lower, rc.format);
            io::save_tensor(dir / ("upper" + e), ps.upper, rc.format);
            return 0;
        }
        case io::ArtifactKind::fit: {
            const io::StoredFit fit = io::load_map_fit(model);
            if (x.order() != fit.shape.L() + 1 || Dims(x.dims().begin() + 1, x.dims().end()) != fit.shape.predictor)
                throw ShapeError("X_new predictor dims " + dims_to_string(x.dims()) + " do not match the fitted shape");
            io::save_tensor(dir / ("mean" + e), predict_mean(x, fit.b, fit.shape.L()), rc.format);
            return 0;
        }
        default:
            throw ConfigError(model + " is neither a trace nor a fit file");
    }
}

int cmd_eval(const Common& c, const std::vector<std::string>& truth, const std::vector<std::string>& pred,
             const std::vector<std::string>& lower, const std::vector<std::string>& upper) {
    const io::RunConfig rc = resolve(c);
    if (truth.empty() || truth.size() != pred.size())
        throw ConfigError("--truth and --pred need the same, non-zero number of files");
    if (lower.size() != upper.size() || (!lower.empty() && lower.size() != truth.size()))
        throw ConfigError("--lower and --upper must both be absent or match --truth");
    std::vector<Tensor> ys, ps;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ys.push_back(load_input(truth[i], rc.format, "truth"));
        ps.push_back(load_input(pred[i], rc.format, "prediction"));
    }
    json metrics{{"rpe", rpe(ys, ps)}};
    if (!lower.empty()) {
        double hit = 0.0, total = 0.0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const Tensor lo = load_input(lower[i], rc.format, "lower");
            const Tensor hi = load_input(upper[i], rc.format, "upper");
            const double n = static_cast<double>(ys[i].size());
            hit += coverage_rate(lo, hi, ys[i]) * n;
            total += n;
        }
        metrics["coverage"] = hit / total;
    }
    const fs::path dir = prepare_out(rc);
    io::write_json(dir / "metrics.json", metrics);
    return 0;
}

int cmd_replicate(const Common& c, const std::vector<std::string>& methods) {
    const io::RunConfig rc = resolve(c);
    ReplicationConfig cfg;
    cfg.sim = rc.sim;
    cfg.sim.seed = rc.seed;
    cfg.methods = rc.methods;
    if (!methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : methods) cfg.methods.push_back(parse_method(m));
    }
    cfg.prior = rc.prior;
    cfg.mcmc = rc.mcmc;
    cfg.mcmc_bounds = rc.mcmc_bounds;
    cfg.fast = rc.fast;
    cfg.coverage = rc.coverage;
    cfg.fast_pick_best = rc.fast_pick_best;
    cfg.threads = rc.threads;

    const ReplicationReport rep = run_replication(cfg);
    const fs::path dir = prepare_out(rc);
    {
        std::ofstream os(dir / "report.csv", std::ios::binary);
        if (!os) throw IoError("cannot write " + (dir / "report.csv").string());
        io::write_report_csv(os, rep);
    }
    io::write_json(dir / "report.json", io::report_json(rep, cfg.sim));
    io::write_json(dir / "timing.json", io::timing_json(rep));
    for (const auto& s : rep.summary)
        std::cout << method_name(s.method) << ": rpe " << s.rpe_mean << " (" << s.rpe_sd << ")"
                  << (s.recovery_rate ? ", recovery " + std::to_string(*s.recovery_rate) : std::string())
                  << (s.coverage_mean ? ", coverage " + std::to_string(*s.coverage_mean) : std::string()) << '\n';
    return 0;
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "Master seed (overrides io.seed)");
    app->add_option("--threads", c.threads, "Worker threads for replicate");
    app->add_option("--format", c.format, "Tensor file format: binary or csv");
    app->add_option("--out", c.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian tensor-on-tensor regression with Tucker-decomposed coefficients"};
    app.require_subcommand(1);
    Common common;

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic training set and evaluation sets");
    add_common(sim, common);
    std::size_t replicate = 0;
    sim->add_option("--replicate", replicate, "Replicate index (selects the data stream)");

    auto* fit = app.add_subcommand("fit", "Fit by MCMC or by the annealed MAP search");
    add_common(fit, common);
    std::string method = "mcmc", x_path, y_path;
    fit->add_option("--method", method, "mcmc or fast")->check(CLI::IsMember({"mcmc", "fast"}));
    fit->add_option("--x", x_path, "Predictor tensor (N, P...)")->required();
    fit->add_option("--y", y_path, "Response tensor (N, Q...)")->required();

    auto* pred = app.add_subcommand("predict", "Predict from a trace or fit file");
    add_common(pred, common);
    std::string model, xnew;
    std::optional<double> level;
    pred->add_option("--model", model, "trace.bin or fit.bin")->required()->check(CLI::ExistingFile);
    pred->add_option("--x", xnew, "New predictor tensor")->required();
    pred->add_option("--level", level, "Credible level for the intervals");

    auto* ev = app.add_subcommand("eval", "Relative prediction error and interval coverage");
    add_common(ev, common);
    std::vector<std::string> truth, preds, lower, upper;
    ev->add_option("--truth", truth, "True response tensors")->required();
    ev->add_option("--pred", preds, "Predicted mean tensors")->required();
    ev->add_option("--lower", lower, "Lower interval tensors");
    ev->add_option("--upper", upper, "Upper interval tensors");

    auto* rep = app.add_subcommand("replicate", "Run the simulation study and write CSV/JSON reports");
    add_common(rep, common);
    std::vector<std::string> methods;
    rep->add_option("--methods", methods, "Subset of mcmc, fast, ols, oracle");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*sim) return cmd_simulate(common, replicate);
        if (*fit) return cmd_fit(common, method, x_path, y_path);
        if (*pred) return cmd_predict(common, model, xnew, level);
        if (*ev) return cmd_eval(common, truth, preds, lower, upper);
        if (*rep) return cmd_replicate(common, methods);
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "file error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
