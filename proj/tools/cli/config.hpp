#pragma once

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace pathmorse::cli {

using Json = nlohmann::json;

struct ManifoldSpec {
    std::string kind = "sphere";  // sphere | euclidean
    int n = 2;
};

struct SystemSpec {
    double m = 2.0;
    double E = 1.0;
    std::string V = "zero";
};

/// Sphere endpoints come from theta (p = e0, q = cos(theta) e0 + sin(theta) e1) unless p and
/// q are given. After defaulting both p and q are always filled in.
struct EndpointSpec {
    std::optional<double> theta;
    std::vector<double> p;
    std::vector<double> q;
};

struct DiscretizationSpec {
    int lambda = 64;
    int search_lambda = 32;
    double rk_max_arc_step = 0.01227184630308513;  // 2 pi / 512
    int rk_min_steps = 64;
    double endpoint_tolerance = 1e-8;
    double conjugate_rank_tolerance = 1e-6;
};

struct FlowSpec {
    double eps = 1e-3;
    std::optional<double> dbeta0;  // null: 0.1 / lambda
    double growth = 1.25;
    double grad_tol = 1e-9;
    long max_steps = 1'000'000;
    std::optional<double> basin_tol;  // null: min(0.1, half the smallest action gap)
    double reparametrize = 5.0;
    double stiffness_fraction = 1.0;
    double resample_fraction = 0.2;
    int angles = 12;
    int bisection_steps = 40;
    double cluster_tol = 1e-3;
};

struct CommandSpec {
    int max_winding = 6;
    int max_degree = 6;
    std::string coefficients = "Z";  // Z | Z2
    std::vector<std::string> flip;
    std::string source = "gamma1";
    std::vector<double> seed{1.0};
    int random_seeds = 10;
    std::uint64_t rng_seed = 1;
};

struct RunConfig {
    ManifoldSpec manifold;
    SystemSpec system;
    EndpointSpec endpoints;
    DiscretizationSpec discretization;
    FlowSpec flow;
    CommandSpec command;
};

/// Parses a config document, applies defaults for missing fields and validates the result.
/// Unknown fields and out-of-range values raise ConfigInvalid naming the field.
RunConfig parse_config(const Json& doc);

/// The effective config as a JSON document (every field present).
Json to_json(const RunConfig& cfg);

/// Sets a dotted field path ("flow.eps") in a config document. The value text is read as
/// JSON when it parses, otherwise as a string.
void apply_override(Json& doc, const std::string& path, const std::string& value);

/// The annotated default config shipped in docs/.
Json default_config();

/// 16 hex digits of the FNV-1a hash of the command name and the effective config.
std::string config_hash(const std::string& command, const RunConfig& cfg);

}  // namespace pathmorse::cli
