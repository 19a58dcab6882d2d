#include "cli_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace roughdev::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

controlled::SmoothFunction4 scalar_terms(std::vector<controlled::Monomial> mono,
                                         std::vector<controlled::Sinusoid> sines, double bound) {
    std::vector<controlled::TermSum> c(1);
    c[0].monomials = std::move(mono);
    c[0].sinusoids = std::move(sines);
    return controlled::term_function(1, std::move(c), bound);
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Config Config::parse(std::istream& is) {
    Config cfg;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(n) + ": expected key = value");
        const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(n) + ": empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config " + path);
    return parse(f);
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::num(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(it->second, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != it->second.size()) throw std::invalid_argument("config key " + key + ": not a number");
    return v;
}

std::size_t Config::count(const std::string& key, std::size_t fallback) const {
    const double v = num(key, static_cast<double>(fallback));
    if (!(v >= 0.0) || v != std::floor(v)) throw std::invalid_argument("config key " + key + ": not a count");
    return static_cast<std::size_t>(v);
}

bool Config::flag(const std::string& key, bool fallback) const {
    const auto s = str(key, fallback ? "true" : "false");
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("config key " + key + ": expected true or false");
}

std::vector<double> Config::list(const std::string& key, std::vector<double> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        Config one;
        one.set("v", trim(item));
        out.push_back(one.num("v", 0.0));
    }
    if (out.empty()) throw std::invalid_argument("config key " + key + ": empty list");
    return out;
}

void Config::check_known(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_)
        if (!known.count(k)) throw std::invalid_argument("unknown config key: " + k);
}

std::string Config::canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "base",        "model",      "a",          "b",           "lambda",    "p1",          "p2",
        "p3",          "amp",        "sigma",      "sigma_amp",   "x0",        "kappa",       "delta_power",
        "averaged",    "hurst",      "test_mode",  "h_mode",      "theta",     "eps",         "event",
        "threshold",   "component",  "budget",     "seed",        "threads",   "horizon",     "steps",
        "skeleton_steps", "cells",   "max_solver_iterations",     "control",   "index",       "runs",
        "macro_steps", "dim",        "max_iterations",            "tol",       "min_hits"};
    return keys;
}

devlab::DeviationSpec build_spec(const Config& cfg) {
    using controlled::Monomial;
    using controlled::Sinusoid;
    devlab::DeviationSpec s;
    const auto base = cfg.str("base", "single");
    const double hurst = cfg.num("hurst", 0.3);
    const bool test_mode = cfg.flag("test_mode", false);
    if (base == "single") {
        const auto model = cfg.str("model", "ou");
        const double sigma = cfg.num("sigma", 1.0);
        auto& m = s.single;
        m.hurst = hurst;
        m.test_mode = test_mode;
        m.x0 = {cfg.num("x0", 0.0)};
        m.sigma = controlled::constant(1, {sigma});
        if (model == "linear") {
            const double a = cfg.num("a", 0.0), b = cfg.num("b", 0.0);
            m.drift = controlled::affine({a}, {b}, 1);
            m.drift_lipschitz = std::abs(a);
        } else if (model == "ou") {
            const double l = cfg.num("lambda", 1.0);
            m.drift = controlled::affine({-l}, {0.0}, 1);
            m.drift_lipschitz = std::abs(l);
        } else if (model == "polynomial") {
            const double p1 = cfg.num("p1", -1.0), p2 = cfg.num("p2", 0.0), p3 = cfg.num("p3", -0.1);
            m.drift = scalar_terms({{p1, {1}}, {p2, {2}}, {p3, {3}}}, {}, std::abs(p1) + 2 * std::abs(p2) + 6 * std::abs(p3));
            m.drift_lipschitz = std::abs(p1) + 2 * std::abs(p2) + 3 * std::abs(p3);
        } else if (model == "sine") {
            const double amp = cfg.num("amp", 0.5), sa = cfg.num("sigma_amp", 0.0);
            m.drift = scalar_terms({{-1.0, {1}}}, {{amp, {1.0}, 0.0}}, 1.0 + std::abs(amp));
            m.drift_lipschitz = 1.0 + std::abs(amp);
            m.sigma = scalar_terms({{sigma, {0}}}, {{sa, {1.0}, 0.0}}, std::abs(sigma) + std::abs(sa));
        } else {
            throw std::invalid_argument("unknown model: " + model);
        }
    } else if (base == "slowfast") {
        s.base = devlab::BaseKind::SlowFast;
        const double kappa = cfg.num("kappa", 0.0);
        s.delta_power = cfg.num("delta_power", 2.0);
        auto sf = slowfast::ou_benchmark(0.1, std::pow(0.1, s.delta_power), kappa, hurst);
        sf.test_mode = test_mode;
        sf.x0 = {cfg.num("x0", 1.0)};
        s.slow_fast = sf;
        const auto averaged = cfg.str("averaged", "closed");
        if (averaged == "closed") {
            const double c = 1.0 - kappa;
            s.model = std::make_shared<const slowfast::AveragedModel>(slowfast::AveragedModel::closed_form(
                sf, [c](std::span<const double> x) { return std::vector<double>{-c * x[0]}; }, std::abs(c)));
        } else if (averaged == "estimate") {
            s.model = std::make_shared<const slowfast::AveragedModel>(sf);
        } else {
            throw std::invalid_argument("averaged must be closed or estimate");
        }
    } else {
        throw std::invalid_argument("base must be single or slowfast");
    }

    const auto mode = cfg.str("h_mode", "ldp");
    if (mode == "ldp")
        s.h_mode = devlab::HMode::Ldp;
    else if (mode == "mdp")
        s.h_mode = devlab::HMode::Mdp;
    else if (mode == "clt")
        s.h_mode = devlab::HMode::Clt;
    else
        throw std::invalid_argument("h_mode must be ldp, mdp or clt");
    s.theta = cfg.num("theta", 0.5);
    s.eps = cfg.list("eps", s.eps);

    const auto ev = cfg.str("event", "terminal");
    if (ev == "terminal")
        s.event.kind = devlab::EventKind::Terminal;
    else if (ev == "sup")
        s.event.kind = devlab::EventKind::SupNorm;
    else
        throw std::invalid_argument("event must be terminal or sup");
    s.event.threshold = cfg.num("threshold", 1.0);
    s.event.component = cfg.count("component", 0);

    s.mc_budget = cfg.count("budget", s.mc_budget);
    s.seed = cfg.count("seed", s.seed);
    s.threads = std::max<std::size_t>(1, cfg.count("threads", 1));
    s.horizon = cfg.num("horizon", 1.0);
    s.steps = cfg.count("steps", s.steps);
    s.skeleton_steps = cfg.count("skeleton_steps", s.skeleton_steps);
    s.cells = cfg.count("cells", s.cells);
    s.solver.max_total_iterations = cfg.count("max_solver_iterations", s.solver.max_total_iterations);
    s.validate();
    return s;
}

}  // namespace roughdev::cli
