#include "cli/commands.hpp"

#include <pathmorse/error.hpp>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

namespace fs = std::filesystem;
using pathmorse::Error;
using pathmorse::ErrorKind;
using namespace pathmorse::cli;

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("pathmorse");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("PATHMORSE_LOG")) {
        const auto level = spdlog::level::from_str(env);
        if (level == spdlog::level::off && std::string(env) != "off")
            spdlog::warn("PATHMORSE_LOG={} is not a log level; keeping warn", env);
        else
            spdlog::set_level(level);
    }
}

Json read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigInvalid, "cannot open config file " + path);
    try {
        return Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::ConfigInvalid, path + ": " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"Numerical Morse theory on the path space of a dressed Riemannian manifold"};
    std::string command, config_path, out_dir = ".";
    std::vector<std::string> sets, flips;
    std::vector<double> seed;
    std::string kind;
    std::optional<int> n, lambda, search_lambda, max_winding, max_degree;
    std::optional<double> theta, eps;
    std::string source;
    bool z2 = false, print_default = false;
    int workers = 0;

    app.add_option("command", command, "geodesics | index | flow | complex | homology | table | verify")
        ->check(CLI::IsMember(kCommands));
    app.add_option("-c,--config", config_path, "JSON config file; flags below override its fields");
    app.add_option("--set", sets, "override any field, e.g. --set flow.eps=5e-4 (repeatable)");
    app.add_option("--kind", kind, "manifold.kind (sphere | euclidean)");
    app.add_option("-n,--dim", n, "manifold.n");
    app.add_option("--theta", theta, "endpoints.theta, angle between p and q on the sphere");
    app.add_option("--lambda", lambda, "discretization.lambda");
    app.add_option("--search-lambda", search_lambda, "discretization.search_lambda");
    app.add_option("-W,--max-winding", max_winding, "command.max_winding");
    app.add_option("-K,--max-degree", max_degree, "command.max_degree");
    app.add_option("--eps", eps, "flow.eps, seed radius");
    app.add_flag("--z2", z2, "command.coefficients = Z2");
    app.add_option("--source", source, "command.source for flow");
    app.add_option("--seed", seed, "command.seed, unit-basis coordinates for flow");
    app.add_option("--flip", flips, "command.flip, generator ids with reversed orientation");
    app.add_option("-j,--workers", workers, "worker threads, 0 = available cores")->check(CLI::NonNegativeNumber);
    app.add_option("-o,--out", out_dir, "output directory");
    app.add_flag("--print-default-config", print_default, "print the default config and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (print_default) {
        std::cout << default_config().dump(2) << '\n';
        return 0;
    }
    if (command.empty()) {
        std::cerr << "a command is required; see --help\n";
        return 1;
    }

    RunConfig cfg;
    try {
        Json doc = config_path.empty() ? Json::object() : read_config(config_path);
        auto set = [&](const std::string& path, const Json& v) { apply_override(doc, path, v.dump()); };
        if (!kind.empty()) set("manifold.kind", kind);
        if (n) set("manifold.n", *n);
        if (theta) set("endpoints.theta", *theta);
        if (lambda) set("discretization.lambda", *lambda);
        if (search_lambda) set("discretization.search_lambda", *search_lambda);
        if (max_winding) set("command.max_winding", *max_winding);
        if (max_degree) set("command.max_degree", *max_degree);
        if (eps) set("flow.eps", *eps);
        if (z2) set("command.coefficients", "Z2");
        if (!source.empty()) set("command.source", source);
        if (!seed.empty()) set("command.seed", seed);
        if (!flips.empty()) set("command.flip", flips);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw Error(ErrorKind::ConfigInvalid, "--set expects key=value, got " + s);
            apply_override(doc, s.substr(0, eq), s.substr(eq + 1));
        }
        cfg = parse_config(doc);
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }

    Report report;
    try {
        report = run_command(cfg, command, RunOptions{workers});
    } catch (const Error& e) {
        std::cerr << command << " failed: " << e.what() << '\n';
        return e.kind() == ErrorKind::ConfigInvalid ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << command << " failed: " << e.what() << '\n';
        return 2;
    }

    try {
        fs::create_directories(out_dir);
        for (const auto& f : report.files) {
            const fs::path path = fs::path(out_dir) / f.name;
            std::ofstream out(path, std::ios::binary);
            out << f.content;
            if (!out) throw std::runtime_error("cannot write " + path.string());
            spdlog::info("wrote {}", path.string());
        }
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }
    std::cout << report.text;
    for (const auto& f : report.files) std::cout << "wrote " << (fs::path(out_dir) / f.name).string() << '\n';
    return report.status;
}
