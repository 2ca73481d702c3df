#include "config.hpp"

#include <pathmorse/error.hpp>
#include <pathmorse/system.hpp>
#include <pathmorse/types.hpp>

#include <cmath>
#include <cstdio>
#include <set>

namespace pathmorse::cli {

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& msg) {
    throw Error(ErrorKind::ConfigInvalid, field + ": " + msg);
}

/// One JSON object of the config. Reads known keys with type checks and rejects the rest.
class Section {
public:
    Section(const Json& doc, std::string name) : name_(std::move(name)) {
        if (doc.contains(name_)) {
            obj_ = doc.at(name_);
            if (!obj_.is_object()) invalid(name_, "expected an object");
        } else {
            obj_ = Json::object();
        }
    }

    void get(const char* key, double& out) { if (auto* v = find(key)) out = number(*v, key); }
    void get(const char* key, std::optional<double>& out) {
        if (auto* v = find(key)) out = v->is_null() ? std::nullopt : std::optional<double>(number(*v, key));
    }
    void get(const char* key, int& out) {
        if (auto* v = find(key)) out = static_cast<int>(integer(*v, key, -(1LL << 31), (1LL << 31) - 1));
    }
    void get(const char* key, long& out) {
        if (auto* v = find(key)) out = static_cast<long>(integer(*v, key, -(1LL << 62), 1LL << 62));
    }
    void get(const char* key, std::uint64_t& out) {
        if (auto* v = find(key)) {
            if (!v->is_number_unsigned()) invalid(field(key), "expected a nonnegative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void get(const char* key, std::string& out) {
        if (auto* v = find(key)) {
            if (!v->is_string()) invalid(field(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const char* key, std::vector<double>& out) {
        if (auto* v = find(key)) {
            if (v->is_null()) {
                out.clear();
                return;
            }
            if (!v->is_array()) invalid(field(key), "expected an array of numbers");
            out.clear();
            for (const auto& x : *v) out.push_back(number(x, key));
        }
    }
    void get(const char* key, std::vector<std::string>& out) {
        if (auto* v = find(key)) {
            if (!v->is_array()) invalid(field(key), "expected an array of strings");
            out.clear();
            for (const auto& x : *v) {
                if (!x.is_string()) invalid(field(key), "expected an array of strings");
                out.push_back(x.get<std::string>());
            }
        }
    }
    [[nodiscard]] bool has(const char* key) const { return obj_.contains(key); }

    void finish() const {
        for (const auto& [k, _] : obj_.items())
            if (!seen_.count(k)) invalid(field(k.c_str()), "unknown field");
    }

    [[nodiscard]] std::string field(const char* key) const { return name_ + "." + key; }

private:
    const Json* find(const char* key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }
    double number(const Json& v, const char* key) const {
        if (!v.is_number()) invalid(field(key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) invalid(field(key), "expected a finite number");
        return d;
    }
    long long integer(const Json& v, const char* key, long long lo, long long hi) const {
        if (!v.is_number_integer()) invalid(field(key), "expected an integer");
        const long long x = v.get<long long>();
        if (x < lo || x > hi) invalid(field(key), "integer out of range");
        return x;
    }

    std::string name_;
    Json obj_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& msg) {
    if (!ok) invalid(field, msg);
}

void validate_and_fill(RunConfig& c) {
    const auto& m = c.manifold;
    require(m.kind == "sphere" || m.kind == "euclidean", "manifold.kind", "expected \"sphere\" or \"euclidean\"");
    require(m.n >= 1, "manifold.n", "must be at least 1");
    require(m.n <= 16, "manifold.n", "must be at most 16");

    require(c.system.m > 0.0, "system.m", "must be positive");
    try {
        (void)Potential::parse(c.system.V);
    } catch (const Error& e) {
        invalid("system.V", e.what());
    }

    auto& ep = c.endpoints;
    require(ep.p.empty() == ep.q.empty(), "endpoints", "p and q must be given together");
    const int ambient = m.kind == "sphere" ? m.n + 1 : m.n;
    if (!ep.p.empty()) {
        require(static_cast<int>(ep.p.size()) == ambient, "endpoints.p", "expected " + std::to_string(ambient) + " coordinates");
        require(static_cast<int>(ep.q.size()) == ambient, "endpoints.q", "expected " + std::to_string(ambient) + " coordinates");
        if (m.kind == "sphere") {
            auto unit = [](const std::vector<double>& x) {
                double s = 0.0;
                for (double v : x) s += v * v;
                return std::abs(std::sqrt(s) - 1.0) < 1e-9;
            };
            require(unit(ep.p), "endpoints.p", "must be a unit vector");
            require(unit(ep.q), "endpoints.q", "must be a unit vector");
            if (ep.theta) {  // an effective config carries both; they must agree
                const double t = *ep.theta;
                bool same = std::abs(ep.p[0] - 1.0) < 1e-12 && std::abs(ep.q[0] - std::cos(t)) < 1e-12 &&
                            std::abs(ep.q[1] - std::sin(t)) < 1e-12;
                for (int i = 1; i < ambient; ++i) same = same && std::abs(ep.p[i]) < 1e-12;
                for (int i = 2; i < ambient; ++i) same = same && std::abs(ep.q[i]) < 1e-12;
                require(same, "endpoints.theta", "disagrees with p and q; give one or the other");
            }
        } else {
            require(!ep.theta, "endpoints.theta", "only available on the sphere");
        }
    } else if (m.kind == "sphere") {
        if (!ep.theta) ep.theta = kPi / 2.0;
        require(*ep.theta >= 0.0 && *ep.theta <= kPi, "endpoints.theta", "must lie in [0, pi]");
        ep.p.assign(ambient, 0.0);
        ep.q.assign(ambient, 0.0);
        ep.p[0] = 1.0;
        ep.q[0] = std::cos(*ep.theta);
        ep.q[1] = std::sin(*ep.theta);
    } else {
        require(!ep.theta, "endpoints.theta", "only available on the sphere");
        ep.p.assign(ambient, 0.0);
        ep.q.assign(ambient, 0.0);
        ep.q[0] = 1.0;
    }

    const auto& d = c.discretization;
    require(d.lambda >= 8, "discretization.lambda", "must be at least 8");
    require(d.search_lambda >= 8, "discretization.search_lambda", "must be at least 8");
    require(d.rk_max_arc_step > 0.0, "discretization.rk_max_arc_step", "must be positive");
    require(d.rk_min_steps >= 1, "discretization.rk_min_steps", "must be at least 1");
    require(d.endpoint_tolerance > 0.0, "discretization.endpoint_tolerance", "must be positive");
    require(d.conjugate_rank_tolerance > 0.0, "discretization.conjugate_rank_tolerance", "must be positive");

    const auto& f = c.flow;
    require(f.eps > 0.0, "flow.eps", "must be positive");
    require(!f.dbeta0 || *f.dbeta0 > 0.0, "flow.dbeta0", "must be positive or null");
    require(f.growth >= 1.0, "flow.growth", "must be at least 1");
    require(f.grad_tol > 0.0, "flow.grad_tol", "must be positive");
    require(f.max_steps >= 1, "flow.max_steps", "must be at least 1");
    require(!f.basin_tol || *f.basin_tol > 0.0, "flow.basin_tol", "must be positive or null");
    require(f.reparametrize >= 0.0, "flow.reparametrize", "must be nonnegative");
    require(f.stiffness_fraction > 0.0, "flow.stiffness_fraction", "must be positive");
    require(f.resample_fraction > 0.0 && f.resample_fraction < 1.0, "flow.resample_fraction", "must lie in (0, 1)");
    require(f.angles >= 3, "flow.angles", "must be at least 3");
    require(f.bisection_steps >= 0, "flow.bisection_steps", "must be nonnegative");
    require(f.cluster_tol > 0.0, "flow.cluster_tol", "must be positive");

    const auto& k = c.command;
    require(k.max_winding >= 0, "command.max_winding", "must be nonnegative");
    require(k.max_degree >= 0, "command.max_degree", "must be nonnegative");
    require(k.coefficients == "Z" || k.coefficients == "Z2", "command.coefficients", "expected \"Z\" or \"Z2\"");
    require(!k.seed.empty(), "command.seed", "must not be empty");
    require(k.random_seeds >= 1, "command.random_seeds", "must be at least 1");
}

}  // namespace

RunConfig parse_config(const Json& doc) {
    if (!doc.is_object()) invalid("config", "expected a JSON object");
    static const std::set<std::string> sections{"manifold", "system", "endpoints", "discretization", "flow", "command"};
    for (const auto& [k, _] : doc.items())
        if (!sections.count(k) && k != "comment" && k.rfind("_", 0) != 0) invalid(k, "unknown section");

    RunConfig c;
    Section man(doc, "manifold");
    man.get("kind", c.manifold.kind);
    man.get("n", c.manifold.n);
    man.finish();

    Section sys(doc, "system");
    sys.get("m", c.system.m);
    sys.get("E", c.system.E);
    sys.get("V", c.system.V);
    sys.finish();

    Section ep(doc, "endpoints");
    ep.get("theta", c.endpoints.theta);
    ep.get("p", c.endpoints.p);
    ep.get("q", c.endpoints.q);
    ep.finish();
    Section dis(doc, "discretization");
    dis.get("lambda", c.discretization.lambda);
    dis.get("search_lambda", c.discretization.search_lambda);
    dis.get("rk_max_arc_step", c.discretization.rk_max_arc_step);
    dis.get("rk_min_steps", c.discretization.rk_min_steps);
    dis.get("endpoint_tolerance", c.discretization.endpoint_tolerance);
    dis.get("conjugate_rank_tolerance", c.discretization.conjugate_rank_tolerance);
    dis.finish();

    Section fl(doc, "flow");
    fl.get("eps", c.flow.eps);
    fl.get("dbeta0", c.flow.dbeta0);
    fl.get("growth", c.flow.growth);
    fl.get("grad_tol", c.flow.grad_tol);
    fl.get("max_steps", c.flow.max_steps);
    fl.get("basin_tol", c.flow.basin_tol);
    fl.get("reparametrize", c.flow.reparametrize);
    fl.get("stiffness_fraction", c.flow.stiffness_fraction);
    fl.get("resample_fraction", c.flow.resample_fraction);
    fl.get("angles", c.flow.angles);
    fl.get("bisection_steps", c.flow.bisection_steps);
    fl.get("cluster_tol", c.flow.cluster_tol);
    fl.finish();

    Section cmd(doc, "command");
    cmd.get("max_winding", c.command.max_winding);
    cmd.get("max_degree", c.command.max_degree);
    cmd.get("coefficients", c.command.coefficients);
    cmd.get("flip", c.command.flip);
    cmd.get("source", c.command.source);
    cmd.get("seed", c.command.seed);
    cmd.get("random_seeds", c.command.random_seeds);
    cmd.get("rng_seed", c.command.rng_seed);
    cmd.finish();

    validate_and_fill(c);
    return c;
}

Json to_json(const RunConfig& c) {
    auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    Json j;
    j["manifold"] = {{"kind", c.manifold.kind}, {"n", c.manifold.n}};
    j["system"] = {{"m", c.system.m}, {"E", c.system.E}, {"V", c.system.V}};
    j["endpoints"] = {{"theta", opt(c.endpoints.theta)}, {"p", c.endpoints.p}, {"q", c.endpoints.q}};
    const auto& d = c.discretization;
    j["discretization"] = {{"lambda", d.lambda},
                           {"search_lambda", d.search_lambda},
                           {"rk_max_arc_step", d.rk_max_arc_step},
                           {"rk_min_steps", d.rk_min_steps},
                           {"endpoint_tolerance", d.endpoint_tolerance},
                           {"conjugate_rank_tolerance", d.conjugate_rank_tolerance}};
    const auto& f = c.flow;
    j["flow"] = {{"eps", f.eps},
                 {"dbeta0", opt(f.dbeta0)},
                 {"growth", f.growth},
                 {"grad_tol", f.grad_tol},
                 {"max_steps", f.max_steps},
                 {"basin_tol", opt(f.basin_tol)},
                 {"reparametrize", f.reparametrize},
                 {"stiffness_fraction", f.stiffness_fraction},
                 {"resample_fraction", f.resample_fraction},
                 {"angles", f.angles},
                 {"bisection_steps", f.bisection_steps},
                 {"cluster_tol", f.cluster_tol}};
    const auto& k = c.command;
    j["command"] = {{"max_winding", k.max_winding},   {"max_degree", k.max_degree}, {"coefficients", k.coefficients},
                    {"flip", k.flip},                 {"source", k.source},         {"seed", k.seed},
                    {"random_seeds", k.random_seeds}, {"rng_seed", k.rng_seed}};
    return j;
}

void apply_override(Json& doc, const std::string& path, const std::string& value) {
    if (path.empty()) invalid("--set", "empty field path");
    Json parsed;
    try {
        parsed = Json::parse(value);
    } catch (const Json::parse_error&) {
        parsed = value;
    }
    Json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) invalid(path, "malformed field path");
        if (!node->is_object()) invalid(path, "not an object");
        if (dot == std::string::npos) {
            (*node)[key] = parsed;
            break;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = Json::object();
        start = dot + 1;
    }
    // theta and p/q are alternatives: setting one drops the other
    if (path == "endpoints.theta" && doc["endpoints"].is_object()) {
        doc["endpoints"].erase("p");
        doc["endpoints"].erase("q");
    } else if ((path == "endpoints.p" || path == "endpoints.q") && doc["endpoints"].is_object()) {
        doc["endpoints"].erase("theta");
    }
}

Json default_config() {
    Json j = to_json(parse_config(Json::object()));
    j["endpoints"].erase("p");
    j["endpoints"].erase("q");
    return j;
}

std::string config_hash(const std::string& command, const RunConfig& cfg) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : command + "\n" + to_json(cfg).dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace pathmorse::cli
