// spdegp: command-line driver.
//
//   spdegp <command> [--config FILE] [--out DIR] [--seed N] [--scheme S]
//          [--alpha N] [--members N] [--solver S] [--oracle-cap N]
//          [--<any config key> VALUE ...]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 I/O error.

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "commands.hpp"
#include "spdegp/errors.hpp"

namespace {

using spdegp::KeyValueConfig;

struct CommonFlags {
    std::string config;
    std::optional<std::string> out, seed, scheme, alpha, members, solver, oracle_cap;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "key = value configuration file");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--seed", f.seed, "base random seed");
    sub->add_option("--scheme", f.scheme, "centered | ufdm1 | ufdm3");
    sub->add_option("--alpha", f.alpha, "even operator exponent");
    sub->add_option("--members", f.members, "ensemble size");
    sub->add_option("--solver", f.solver, "direct | gradient");
    sub->add_option("--oracle-cap", f.oracle_cap, "largest instance for dense checks");
    sub->allow_extras();
}

KeyValueConfig assemble(const CommonFlags& f, const std::vector<std::string>& extras) {
    KeyValueConfig kv = f.config.empty() ? KeyValueConfig{} : KeyValueConfig::from_file(f.config);
    const std::pair<const char*, const std::optional<std::string>*> named[] = {
        {"out", &f.out},         {"seed", &f.seed},     {"scheme", &f.scheme},        {"alpha", &f.alpha},
        {"members", &f.members}, {"solver", &f.solver}, {"oracle_cap", &f.oracle_cap}};
    for (const auto& [key, val] : named)
        if (*val) kv.set(key, **val);

    for (std::size_t q = 0; q < extras.size(); ++q) {
        std::string tok = extras[q];
        if (tok.rfind("--", 0) != 0) throw spdegp::ConfigError("unexpected argument '" + tok + "'");
        tok = tok.substr(2);
        std::string value;
        const auto eq = tok.find('=');
        if (eq != std::string::npos) {
            value = tok.substr(eq + 1);
            tok = tok.substr(0, eq);
        } else {
            if (q + 1 >= extras.size()) throw spdegp::ConfigError("missing value for --" + tok);
            value = extras[++q];
        }
        for (auto& ch : tok)
            if (ch == '-') ch = '_';
        kv.set(tok, value);
    }
    return kv;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SPDE-based space-time Gaussian process data assimilation"};
    app.require_subcommand(1);

    const std::map<std::string, std::pair<std::string, std::function<int(const KeyValueConfig&)>>> commands = {
        {"simulate", {"simulate a prior trajectory", spdegp::cli::cmd_simulate}},
        {"interpolate", {"optimal interpolation of observations", spdegp::cli::cmd_interpolate}},
        {"ensemble", {"conditional ensemble and scores", spdegp::cli::cmd_ensemble}},
        {"fit", {"fit SPDE parameters to a trajectory", spdegp::cli::cmd_fit}},
        {"score", {"nRMSE of an estimate against the truth", spdegp::cli::cmd_score}},
        {"oracle-check", {"dense-oracle consistency checks", spdegp::cli::cmd_oracle_check}},
    };
    std::map<std::string, CommonFlags> flags;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands) {
        subs[name] = app.add_subcommand(name, entry.first);
        add_common(subs[name], flags[name]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    for (const auto& [name, sub] : subs) {
        if (!sub->parsed()) continue;
        try {
            const auto kv = assemble(flags[name], sub->remaining());
            return commands.at(name).second(kv);
        } catch (const spdegp::ConfigError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        } catch (const spdegp::NumericalError& e) {
            std::cerr << "numerical failure: " << e.what() << '\n';
            return 3;
        } catch (const spdegp::IoError& e) {
            std::cerr << "I/O error: " << e.what() << '\n';
            return 4;
        } catch (const std::filesystem::filesystem_error& e) {
            std::cerr << "I/O error: " << e.what() << '\n';
            return 4;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        }
    }
    return 2;
}
