#include <CLI11.hpp>
#include <json.hpp>

#include <boost/version.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "cli_config.hpp"
#include "roughdev/devlab/devlab.hpp"
#include "roughdev/gaussian/gaussian.hpp"
#include "roughdev/roughpath/rough_path.hpp"
#include "roughdev/slowfast/slowfast.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roughdev;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kInvariantFailure = 2;
constexpr int kBudgetExhausted = 3;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class Csv {
public:
    Csv(const fs::path& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        line(header);
    }
    void row(const std::vector<double>& v) {
        std::vector<std::string> s;
        for (double x : v) s.push_back(fmt(x));
        line(s);
    }
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

struct Run {
    cli::Config cfg;
    fs::path out;
    json summary = json::object();
    std::vector<std::string> outputs;

    Csv csv(const std::string& name, const std::vector<std::string>& header) {
        outputs.push_back(name);
        return Csv(out / name, header);
    }
};

void write_path(Run& run, const std::string& name, const std::vector<std::pair<std::string, const algebra::PiecewiseLinearPath*>>& cols) {
    std::vector<std::string> header{"t"};
    for (const auto& [label, p] : cols)
        for (std::size_t i = 0; i < p->dim(); ++i) header.push_back(p->dim() == 1 ? label : label + std::to_string(i));
    auto csv = run.csv(name, header);
    const auto& base = *cols.front().second;
    for (std::size_t k = 0; k < base.points(); ++k) {
        std::vector<double> r{base.times()[k]};
        for (const auto& [label, p] : cols) {
            const auto v = p->value(k);
            r.insert(r.end(), v.begin(), v.end());
        }
        csv.row(r);
    }
}

json tail_json(const devlab::TailEstimate& t) {
    return {{"n", t.n}, {"hits", t.hits}, {"p", t.p}, {"lo", t.lo}, {"hi", t.hi}, {"upper_only", t.upper_only}};
}

devlab::OptimizerConfig optimizer_config(const cli::Config& cfg) {
    devlab::OptimizerConfig o;
    o.max_iterations = cfg.count("max_iterations", o.max_iterations);
    o.tol = cfg.num("tol", o.tol);
    return o;
}

gaussian::CameronMartinControl constant_control(const devlab::DeviationSpec& spec, double level) {
    auto c = gaussian::CameronMartinControl::zero(spec.hurst(), spec.control_cells(), spec.fbm_dim(), spec.bm_dim());
    for (auto& v : c.hu) v = level;
    return c;
}

int cmd_lift(Run& run) {
    gaussian::FbmSpec f;
    f.hurst = run.cfg.num("hurst", 0.3);
    f.dim = run.cfg.count("dim", 1);
    f.steps = run.cfg.count("steps", 256);
    f.horizon = run.cfg.num("horizon", 1.0);
    f.test_mode = run.cfg.flag("test_mode", false);
    const auto seed = run.cfg.count("seed", 1);
    const gaussian::FbmSampler sampler(f);
    auto rng = gaussian::make_stream(seed, run.cfg.count("index", 0));
    const auto b = sampler.sample(rng);
    const auto ex = slowfast::exponents_for_hurst(f.hurst);
    const auto lift = gaussian::lift_fbm(b, ex);
    const auto level1 = roughpath::level1_path(lift);
    write_path(run, "lift.csv", {{"x", &level1}});
    const auto norms = roughpath::holder_norms(lift, ex.alpha);
    run.summary["holder_norms"] = {norms[0], norms[1], norms[2]};
    run.summary["alpha"] = ex.alpha;
    return 0;
}

int cmd_solve_rde(Run& run) {
    const auto spec = cli::build_spec(run.cfg);
    const double eps = spec.eps.front();
    const auto x = devlab::sample_trajectory(spec, eps, run.cfg.count("index", 0));
    const auto lim = devlab::limit_path(spec);
    const auto z = devlab::deviation_process(x, lim, eps, spec.h_mode, spec.theta);
    write_path(run, "trajectory.csv", {{"x", &x}, {"limit", &lim}, {"z", &z}});
    run.summary["eps"] = eps;
    run.summary["terminal"] = x.value(x.points() - 1)[0];
    return 0;
}

int cmd_skeleton(Run& run) {
    const auto spec = cli::build_spec(run.cfg);
    const auto ctrl = constant_control(spec, run.cfg.num("control", 0.0));
    const auto rv = devlab::rate_value(ctrl, spec);
    write_path(run, "skeleton.csv", {{"x", &rv.skeleton}});
    run.summary["value"] = rv.value;
    run.summary["event_functional"] = spec.event.functional(rv.skeleton);
    return 0;
}

int cmd_slow_fast(Run& run) {
    auto spec = cli::build_spec(run.cfg);
    if (spec.base != devlab::BaseKind::SlowFast) throw std::invalid_argument("slow-fast needs base = slowfast");
    auto sf = *spec.slow_fast;
    sf.eps = spec.eps.front();
    sf.delta = std::pow(sf.eps, spec.delta_power);
    const auto grid = slowfast::SlowFastGrid::make(sf, spec.horizon, run.cfg.count("macro_steps", 256));
    auto rng = gaussian::make_stream(spec.seed, run.cfg.count("index", 0));
    const auto noise = slowfast::sample_noise(sf, grid, rng);
    slowfast::SimulationOptions opts;
    opts.solver = spec.solver;
    const auto path = slowfast::simulate_slow_fast(sf, grid, noise, opts);
    const auto x = path.slow_path();
    const auto mg = grid.macro_grid();
    const algebra::PiecewiseLinearPath xbar(mg, slowfast::averaged_solution(*spec.model, mg), sf.m);
    write_path(run, "slow_fast.csv", {{"x", &x}, {"xbar", &xbar}});
    double sup = 0.0;
    for (std::size_t k = 0; k < x.points(); ++k) sup = std::max(sup, std::abs(x.value(k)[0] - xbar.value(k)[0]));
    run.summary["eps"] = sf.eps;
    run.summary["delta"] = sf.delta;
    run.summary["sup_gap"] = sup;
    run.summary["micro_per_macro"] = grid.micro_per_macro;
    if (const auto runs = run.cfg.count("runs", 0); runs > 0) {
        slowfast::KhasminskiiConfig kc;
        kc.eps = spec.eps;
        kc.delta_power = spec.delta_power;
        kc.horizon = spec.horizon;
        kc.macro_steps = run.cfg.count("macro_steps", 256);
        kc.runs = runs;
        kc.seed = spec.seed;
        kc.beta = slowfast::exponents_for_hurst(sf.hurst).beta;
        const auto rows = slowfast::khasminskii_report(sf, *spec.model, kc);
        auto csv = run.csv("khasminskii.csv", {"eps", "delta", "Delta", "m1", "m2", "m3", "m4", "gap", "runs"});
        for (const auto& r : rows)
            csv.row({r.eps, r.delta, r.Delta, r.mean.m1, r.mean.m2, r.mean.m3, r.mean.m4, r.gap,
                     static_cast<double>(r.runs)});
    }
    return 0;
}

void write_rate(Run& run, const devlab::RateFunctionResult& r) {
    {
        auto csv = run.csv("rate_trace.csv", {"iteration", "best_value"});
        for (std::size_t i = 0; i < r.trace.size(); ++i) csv.row({static_cast<double>(i), r.trace[i]});
    }
    write_path(run, "rate_skeleton.csv", {{"x", &r.skeleton}});
    std::vector<std::string> header{"cell_start", "cell_end"};
    for (std::size_t i = 0; i < r.ctrl.fbm_dim; ++i) header.push_back("hu" + std::to_string(i));
    for (std::size_t i = 0; i < r.ctrl.bm_dim; ++i) header.push_back("vp" + std::to_string(i));
    auto csv = run.csv("rate_control.csv", header);
    for (std::size_t j = 0; j < r.ctrl.cell_count(); ++j) {
        std::vector<double> row{r.ctrl.cells[j], r.ctrl.cells[j + 1]};
        for (std::size_t i = 0; i < r.ctrl.fbm_dim; ++i) row.push_back(r.ctrl.hu[j * r.ctrl.fbm_dim + i]);
        for (std::size_t i = 0; i < r.ctrl.bm_dim; ++i) row.push_back(r.ctrl.vp[j * r.ctrl.bm_dim + i]);
        csv.row(row);
    }
    run.summary["rate"] = r.value;
    run.summary["feasible"] = r.feasible;
    run.summary["violation"] = r.violation;
    run.summary["iterations"] = r.iterations;
    run.summary["evaluations"] = r.evaluations;
}

int cmd_rate(Run& run) {
    const auto spec = cli::build_spec(run.cfg);
    const auto r = devlab::optimize_rate(spec, {}, optimizer_config(run.cfg));
    write_rate(run, r);
    return r.feasible ? 0 : kInvariantFailure;
}

int cmd_mc_tail(Run& run) {
    const auto spec = cli::build_spec(run.cfg);
    auto csv = run.csv("mc_tail.csv", {"eps", "n", "hits", "p", "lo", "hi", "upper_only"});
    json rows = json::array();
    for (double e : spec.eps) {
        const auto t = devlab::mc_tail(spec, e);
        csv.row({e, static_cast<double>(t.n), static_cast<double>(t.hits), t.p, t.lo, t.hi, t.upper_only ? 1.0 : 0.0});
        auto j = tail_json(t);
        j["eps"] = e;
        rows.push_back(j);
    }
    run.summary["tails"] = rows;
    return 0;
}

int cmd_slope_check(Run& run) {
    const auto spec = cli::build_spec(run.cfg);
    const auto r = devlab::optimize_rate(spec, {}, optimizer_config(run.cfg));
    write_rate(run, r);
    const auto rep = devlab::ldp_slope_check(spec, r.value, run.cfg.count("min_hits", 10));
    auto csv = run.csv("slope_check.csv", {"eps", "speed", "n", "hits", "p", "lo", "hi", "used"});
    for (const auto& p : rep.points)
        csv.row({p.eps, p.speed, static_cast<double>(p.tail.n), static_cast<double>(p.tail.hits), p.tail.p, p.tail.lo,
                 p.tail.hi, p.used ? 1.0 : 0.0});
    run.summary["slope"] = rep.slope;
    run.summary["slope_se"] = rep.slope_se;
    run.summary["gap"] = rep.gap;
    run.summary["gap_se"] = rep.gap_se;
    run.summary["truncated"] = rep.truncated;
    return r.feasible ? 0 : kInvariantFailure;
}

int cmd_check_invariants(Run& run) {
    const auto spec = cli::build_spec(run.cfg);
    auto csv = run.csv("invariants.csv", {"invariant", "pass", "detail"});
    bool all = true;
    auto record = [&](const std::string& name, bool pass, double detail) {
        csv.line({name, pass ? "1" : "0", fmt(detail)});
        run.summary[name] = pass;
        all = all && pass;
    };

    // rate_value(0) = 0 with the noiseless limit as skeleton
    const auto zero = gaussian::CameronMartinControl::zero(spec.hurst(), spec.control_cells(), spec.fbm_dim(), spec.bm_dim());
    const auto rv0 = devlab::rate_value(zero, spec);
    double dev0 = 0.0;
    if (spec.h_mode == devlab::HMode::Ldp) {
        const auto lim = devlab::limit_path(spec);
        for (std::size_t k = 0; k < lim.points(); ++k) {
            const auto s = rv0.skeleton.value_at(lim.times()[k]);
            for (std::size_t i = 0; i < s.size(); ++i)
                dev0 = std::max(dev0, std::abs(s[i] - lim.value(k)[i]) / (1.0 + std::abs(lim.value(k)[i])));
        }
        record("zero_control_value", rv0.value == 0.0, rv0.value);
        record("zero_control_skeleton", dev0 <= 1e-5, dev0);
    } else {
        for (double v : rv0.skeleton.values()) dev0 = std::max(dev0, std::abs(v));
        record("zero_control_value", rv0.value == 0.0, rv0.value);
        record("zero_control_skeleton", dev0 == 0.0, dev0);
    }

    // optimizer: feasible, monotone trace, never above a feasible corpus control
    const auto r = devlab::optimize_rate(spec, {}, optimizer_config(run.cfg));
    record("optimizer_feasible", r.feasible, r.violation);
    bool mono = true;
    for (std::size_t i = 1; i < r.trace.size(); ++i) mono = mono && r.trace[i] <= r.trace[i - 1];
    record("trace_non_increasing", mono, static_cast<double>(r.trace.size()));
    double worst = -INFINITY;
    bool below = true;
    for (const auto& c : devlab::feasible_corpus(spec)) {
        const double v = devlab::rate_value(c, spec).value;
        worst = std::max(worst, r.value - v);
        below = below && r.value <= v * (1.0 + 1e-6) + 1e-12;
    }
    record("optimizer_below_corpus", below, worst);

    // deviation process: linear in the trajectory
    const double eps = spec.eps.front();
    const auto x1 = devlab::sample_trajectory(spec, eps, 0), x2 = devlab::sample_trajectory(spec, eps, 1);
    const auto lim = devlab::limit_path(spec);
    const auto z1 = devlab::deviation_process(x1, lim, eps, spec.h_mode, spec.theta);
    const auto z2 = devlab::deviation_process(x2, lim, eps, spec.h_mode, spec.theta);
    std::vector<double> comb(x1.values().size());
    const double a = 0.6, b = 0.4;
    for (std::size_t i = 0; i < comb.size(); ++i) comb[i] = a * x1.values()[i] + b * x2.values()[i];
    const auto zc = devlab::deviation_process(algebra::PiecewiseLinearPath(x1.times(), comb, x1.dim()), lim, eps,
                                              spec.h_mode, spec.theta);
    double lin = 0.0;
    for (std::size_t i = 0; i < comb.size(); ++i)
        lin = std::max(lin, std::abs(zc.values()[i] - a * z1.values()[i] - b * z2.values()[i]) /
                                (1.0 + std::abs(zc.values()[i])));
    record("deviation_linear", lin <= 1e-10, lin);

    // same (seed, index) gives the same trajectory
    const auto again = devlab::sample_trajectory(spec, eps, 0);
    record("trajectory_reproducible", again.values() == x1.values(), 0.0);
    return all ? 0 : kInvariantFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"devlab: rough-path deviation experiments"};
    app.require_subcommand(1);
    std::string config_path, out_dir = ".";
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;

    struct Cmd {
        const char* name;
        const char* help;
        int (*fn)(Run&);
    };
    const std::vector<Cmd> cmds{
        {"lift", "sample fBM and its level-3 lift", cmd_lift},
        {"solve-rde", "one trajectory with limit and deviation paths", cmd_solve_rde},
        {"skeleton", "skeleton for a constant control", cmd_skeleton},
        {"slow-fast", "slow-fast trajectory against the averaged ODE", cmd_slow_fast},
        {"rate", "optimize the rate function for the event", cmd_rate},
        {"mc-tail", "crude Monte Carlo tail per eps", cmd_mc_tail},
        {"slope-check", "rate optimum against the Monte Carlo slope", cmd_slope_check},
        {"check-invariants", "invariant checks", cmd_check_invariants},
    };
    std::vector<CLI::App*> subs;
    for (const auto& c : cmds) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("-c,--config", config_path, "key = value config file");
        sub->add_option("-o,--out", out_dir, "output directory");
        sub->add_option("-s,--set", overrides, "override: key=value");
        sub->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
        subs.push_back(sub);
    }
    CLI11_PARSE(app, argc, argv);

    std::size_t which = 0;
    while (!subs[which]->parsed()) ++which;

    Run run;
    int code = 0;
    try {
        if (!config_path.empty()) run.cfg = cli::Config::load(config_path);
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value");
            run.cfg.set(o.substr(0, eq), o.substr(eq + 1));
        }
        if (seed_set) run.cfg.set("seed", std::to_string(seed));
        run.cfg.check_known(cli::known_keys());
        run.out = out_dir;
        fs::create_directories(run.out);
        code = cmds[which].fn(run);
    } catch (const devlab::BudgetExhausted& e) {
        std::cerr << "budget exhausted: " << e.what() << '\n';
        code = kBudgetExhausted;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    char hash[20];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, run.cfg.hash());
    json manifest;
    manifest["tool"] = "devlab";
    manifest["subcommand"] = cmds[which].name;
    manifest["seed"] = run.cfg.count("seed", 1);
    manifest["config_hash"] = hash;
    manifest["config"] = run.cfg.values();
    manifest["versions"] = {{"roughdev", kVersion},
                            {"boost", BOOST_LIB_VERSION},
                            {"cli11", CLI11_VERSION},
                            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                            {"compiler", __VERSION__}};
    manifest["outputs"] = run.outputs;
    manifest["summary"] = run.summary;
    manifest["exit_code"] = code;
    std::ofstream(run.out / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
    std::cout << manifest["summary"].dump() << '\n';
    return code;
}
