#pragma once

// Flat key = value run configuration. Lines starting with '#' are comments.
// Every key can also be given on the command line as --key value; the
// command line wins. Validation reports every problem at once.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spdegp/errors.hpp"
#include "spdegp/gp.hpp"
#include "spdegp/grid.hpp"
#include "spdegp/operator.hpp"
#include "spdegp/params.hpp"
#include "spdegp/precision.hpp"

namespace spdegp {

inline constexpr const char* kLibraryVersion = "0.3.0";

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "preset",      "nx",          "ny",         "dx",           "dy",          "dt",
        "n_steps",     "scheme",      "alpha",      "kappa",        "gamma",       "beta",
        "tau",         "m1",          "m2",         "v_field",      "v1",          "v2",
        "v_period",    "noise",       "kappa_s",    "alpha_s",      "theta_source", "params_dir",
        "p0_mode",     "n_stab",      "x0",         "obs_source",   "obs_file",    "mask_file",
        "truth_file",  "estimate_file", "swath_width", "spacing",    "angle_deg",   "phase_per_step",
        "noise_var",   "solver",      "lambda",     "eta",          "iters",       "step_rule",
        "window",      "members",     "seed",       "out",          "fit_components", "coarse_p",
        "lambda_mix",  "fit_iters",   "fit_lr",     "fit_window",   "oracle_cap",  "corrupt_asymmetry",
        "test_start",  "test_end",    "write_members"};
    return keys;
}

class KeyValueConfig {
public:
    static KeyValueConfig from_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config file " + path.string());
        KeyValueConfig c;
        std::string line;
        int lineno = 0;
        std::vector<std::string> errors;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto eq = line.find('=');
            const auto key = trim(line.substr(0, eq));
            if (key.empty() && eq == std::string::npos) continue;
            if (eq == std::string::npos || key.empty()) {
                errors.push_back(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
                continue;
            }
            c.values_[key] = trim(line.substr(eq + 1));
        }
        if (!errors.empty()) throw ConfigError(join(errors));
        return c;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get(const std::string& key, const std::string& def) const {
        const auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    /// 64-bit FNV-1a of the canonical "key=value\n" listing, skipping `ignored`.
    std::uint64_t hash(const std::set<std::string>& ignored = {}) const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [k, v] : values_) {
            if (ignored.count(k)) continue;
            for (char ch : k + "=" + v + "\n") {
                h ^= static_cast<unsigned char>(ch);
                h *= 0x100000001b3ull;
            }
        }
        return h;
    }

    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static std::string join(const std::vector<std::string>& items) {
        std::string out;
        for (const auto& e : items) out += (out.empty() ? "" : "; ") + e;
        return out;
    }

private:
    std::map<std::string, std::string> values_;
};

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Typed view of a KeyValueConfig. Defaults follow the downscaled GP preset.
struct RunConfig {
    std::string preset = "none";
    Grid2D grid{24, 24, 1.0, 1.0, 1.0, 60};
    Scheme scheme = Scheme::ufdm1;
    int alpha = 2;
    double kappa = 0.33, gamma = 1.0, beta = 0.0, tau = 1.0, m1 = 0.0, m2 = 0.0;
    std::string v_field = "uniform"; // uniform | periodic
    double v1 = 0.0, v2 = 0.0, v_period = 0.0;
    NoiseSpec noise;
    std::string theta_source = "analytic"; // analytic | files | init
    std::string params_dir;
    P0Mode p0_mode = P0Mode::innovation;
    int n_stab = 50;
    std::string x0 = "p0"; // p0 | zero
    std::string obs_source = "tracks"; // tracks | files | full | none
    std::string obs_file, mask_file, truth_file, estimate_file;
    double swath_width = 2.0, spacing = 8.0, angle_deg = 30.0, phase_per_step = 1.0;
    double noise_var = 1e-4;
    std::string solver = "direct";
    double lambda = 1.0, eta = 1e-2;
    int iters = 200;
    StepRule step_rule = StepRule::backtracking;
    int window = 0;
    int members = 20;
    std::uint64_t seed = 1;
    std::string out = "out";
    std::vector<Component> fit_components{Component::kappa};
    int coarse_p = 1;
    double lambda_mix = 1e-2;
    int fit_iters = 30;
    double fit_lr = 1e-1;
    int fit_window = 0;
    std::size_t oracle_cap = kDenseCap;
    double corrupt_asymmetry = 0.0;
    int test_start = 0, test_end = -1;
    bool write_members = false;
    std::uint64_t hash = 0;

    static RunConfig from(const KeyValueConfig& kv) {
        RunConfig c;
        std::vector<std::string> errors;
        for (const auto& [k, v] : kv.values())
            if (!known_config_keys().count(k)) errors.push_back("unknown key '" + k + "'");

        c.preset = kv.get("preset", c.preset);
        if (c.preset == "gp") c.apply_gp_preset();
        else if (c.preset != "none") errors.push_back("preset must be gp or none");

        auto num = [&](const char* key, double& dst) {
            if (!kv.has(key)) return;
            const auto s = kv.get(key, "");
            if (s == "inf" || s == "+inf") {
                dst = std::numeric_limits<double>::infinity();
                return;
            }
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (s.empty() || *end != '\0' || std::isnan(v)) errors.push_back(std::string(key) + ": not a number '" + s + "'");
            else dst = v;
        };
        auto integer = [&](const char* key, auto& dst) {
            if (!kv.has(key)) return;
            const auto s = kv.get(key, "");
            std::remove_reference_t<decltype(dst)> v{};
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
                errors.push_back(std::string(key) + ": not an integer in range '" + s + "'");
            else dst = v;
        };
        auto text = [&](const char* key, std::string& dst) { dst = kv.get(key, dst); };
        auto choice = [&](const char* key, auto parse, auto& dst) {
            if (!kv.has(key)) return;
            try {
                dst = parse(kv.get(key, ""));
            } catch (const ConfigError& e) {
                errors.push_back(std::string(key) + ": " + e.what());
            }
        };

        integer("nx", c.grid.nx);
        integer("ny", c.grid.ny);
        num("dx", c.grid.dx);
        num("dy", c.grid.dy);
        num("dt", c.grid.dt);
        integer("n_steps", c.grid.n_steps);
        choice("scheme", parse_scheme, c.scheme);
        integer("alpha", c.alpha);
        num("kappa", c.kappa);
        num("gamma", c.gamma);
        num("beta", c.beta);
        num("tau", c.tau);
        num("m1", c.m1);
        num("m2", c.m2);
        text("v_field", c.v_field);
        num("v1", c.v1);
        num("v2", c.v2);
        num("v_period", c.v_period);
        if (kv.has("noise")) {
            const auto n = kv.get("noise", "");
            if (n == "white") c.noise.white = true;
            else if (n == "colored") c.noise.white = false;
            else errors.push_back("noise must be white or colored");
        }
        num("kappa_s", c.noise.kappa_s);
        integer("alpha_s", c.noise.alpha_s);
        text("theta_source", c.theta_source);
        text("params_dir", c.params_dir);
        choice("p0_mode", parse_p0_mode, c.p0_mode);
        integer("n_stab", c.n_stab);
        text("x0", c.x0);
        text("obs_source", c.obs_source);
        text("obs_file", c.obs_file);
        text("mask_file", c.mask_file);
        text("truth_file", c.truth_file);
        text("estimate_file", c.estimate_file);
        num("swath_width", c.swath_width);
        num("spacing", c.spacing);
        num("angle_deg", c.angle_deg);
        num("phase_per_step", c.phase_per_step);
        num("noise_var", c.noise_var);
        text("solver", c.solver);
        num("lambda", c.lambda);
        num("eta", c.eta);
        integer("iters", c.iters);
        choice("step_rule", parse_step_rule, c.step_rule);
        integer("window", c.window);
        integer("members", c.members);
        integer("seed", c.seed);
        text("out", c.out);
        if (kv.has("fit_components")) {
            c.fit_components.clear();
            std::stringstream ss(kv.get("fit_components", ""));
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = KeyValueConfig::trim(item);
                if (item.empty()) continue;
                try {
                    c.fit_components.push_back(parse_component(item));
                } catch (const ConfigError& e) {
                    errors.push_back(std::string("fit_components: ") + e.what());
                }
            }
        }
        integer("coarse_p", c.coarse_p);
        num("lambda_mix", c.lambda_mix);
        integer("fit_iters", c.fit_iters);
        num("fit_lr", c.fit_lr);
        integer("fit_window", c.fit_window);
        integer("oracle_cap", c.oracle_cap);
        num("corrupt_asymmetry", c.corrupt_asymmetry);
        integer("test_start", c.test_start);
        integer("test_end", c.test_end);
        if (kv.has("write_members")) c.write_members = kv.get("write_members", "") == "true" || kv.get("write_members", "") == "1";

        c.collect_violations(errors);
        if (!errors.empty()) throw ConfigError("invalid configuration: " + KeyValueConfig::join(errors));
        c.hash = kv.hash({"seed", "out"}); // identifies the experiment, not the run
        return c;
    }

    /// Downscalable version of the reference GP experiment: kappa = 0.33,
    /// alpha = 4, gamma = 1, beta = 25, periodic anisotropy directions,
    /// no advection, unit tau, dx = dy = dt = 1 on a 100 x 100 x 500 domain.
    void apply_gp_preset() {
        grid = Grid2D{100, 100, 1.0, 1.0, 1.0, 500};
        alpha = 4;
        kappa = 0.33;
        gamma = 1.0;
        beta = 25.0;
        tau = 1.0;
        m1 = m2 = 0.0;
        v_field = "periodic";
        v_period = 0.0; // 0: use the domain size
        scheme = Scheme::ufdm1;
    }

    void collect_violations(std::vector<std::string>& e) const {
        if (grid.nx < 3 || grid.ny < 3) e.push_back("nx and ny must be >= 3");
        if (grid.n_steps < 1) e.push_back("n_steps must be >= 1");
        if (!(grid.dx > 0) || !(grid.dy > 0) || !(grid.dt > 0)) e.push_back("dx, dy, dt must be > 0");
        if (alpha < 2 || alpha % 2 != 0) e.push_back("alpha must be an even integer >= 2 (fractional powers unsupported)");
        if (!(kappa > 0)) e.push_back("kappa must be > 0");
        if (!(gamma > 0)) e.push_back("gamma must be > 0");
        if (!(beta >= 0)) e.push_back("beta must be >= 0");
        if (!(tau > 0)) e.push_back("tau must be > 0");
        if (v_field != "uniform" && v_field != "periodic") e.push_back("v_field must be uniform or periodic");
        if (v_period < 0) e.push_back("v_period must be >= 0");
        if (!noise.white && (!(noise.kappa_s > 0) || noise.alpha_s < 2 || noise.alpha_s % 2 != 0))
            e.push_back("colored noise needs kappa_s > 0 and even alpha_s >= 2");
        if (theta_source != "analytic" && theta_source != "files" && theta_source != "init")
            e.push_back("theta_source must be analytic, files or init");
        if (theta_source == "files" && params_dir.empty()) e.push_back("theta_source = files needs params_dir");
        if (n_stab < 0) e.push_back("n_stab must be >= 0");
        if (x0 != "p0" && x0 != "zero") e.push_back("x0 must be p0 or zero");
        if (obs_source != "tracks" && obs_source != "files" && obs_source != "full" && obs_source != "none")
            e.push_back("obs_source must be tracks, files, full or none");
        if (obs_source == "files" && (obs_file.empty() || mask_file.empty()))
            e.push_back("obs_source = files needs obs_file and mask_file");
        if (obs_source == "tracks") {
            if (!(swath_width > 0) || !(swath_width < spacing)) e.push_back("need 0 < swath_width < spacing");
            if (spacing >= std::min(grid.nx, grid.ny)) e.push_back("spacing must be < min(nx, ny)");
        }
        if (!(noise_var >= 0)) e.push_back("noise_var must be >= 0");
        if (solver != "direct" && solver != "gradient") e.push_back("solver must be direct or gradient");
        if (!(lambda >= 0)) e.push_back("lambda must be >= 0");
        if (!(eta > 0)) e.push_back("eta must be > 0");
        if (iters < 0) e.push_back("iters must be >= 0");
        if (window < 0) e.push_back("window must be >= 0");
        if (members < 2) e.push_back("members must be >= 2");
        if (coarse_p < 1) e.push_back("coarse_p must be >= 1");
        if (std::isnan(lambda_mix) || lambda_mix < 0) e.push_back("lambda_mix must be >= 0");
        if (fit_iters < 0) e.push_back("fit_iters must be >= 0");
        if (!(fit_lr > 0)) e.push_back("fit_lr must be > 0");
        if (fit_window < 0) e.push_back("fit_window must be >= 0");
        if (fit_components.empty()) e.push_back("fit_components must name at least one component");
        if (oracle_cap < 1) e.push_back("oracle_cap must be >= 1");
        if (scheme == Scheme::ufdm3 && (grid.nx < 5 || grid.ny < 5)) e.push_back("ufdm3 needs nx, ny >= 5");
    }

    /// Analytic parameter fields described by the scalar keys.
    ParamFields<double> analytic_params() const {
        auto p = ParamFields<double>::uniform(grid, kappa, gamma, tau, alpha);
        p.noise = noise;
        auto& s = p.slots[0];
        s.m1.assign(grid.nodes(), m1);
        s.m2.assign(grid.nodes(), m2);
        s.beta.assign(grid.nodes(), beta);
        const double period = v_period > 0 ? v_period : static_cast<double>(std::max(grid.nx, grid.ny));
        for (int i = 0; i < grid.ny; ++i)
            for (int j = 0; j < grid.nx; ++j) {
                const auto k = flatten(i, j, grid);
                if (v_field == "periodic") {
                    const double ax = 2.0 * std::numbers::pi * j * grid.dx / (period * grid.dx);
                    const double ay = 2.0 * std::numbers::pi * i * grid.dy / (period * grid.dy);
                    s.v1[k] = std::sin(ax) * std::cos(ay);
                    s.v2[k] = -std::cos(ax) * std::sin(ay);
                } else {
                    s.v1[k] = v1;
                    s.v2[k] = v2;
                }
            }
        return p;
    }
};

} // namespace spdegp
