#include "commands.hpp"

#include <pathmorse/pathmorse.hpp>

#include <spdlog/spdlog.h>

#include <charconv>
#include <random>
#include <sstream>

namespace pathmorse::cli {

namespace {

std::string num(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, res.ptr};
}

/// CSV with a leading comment line that carries the effective config.
class Csv {
public:
    Csv(const RunConfig& cfg, const std::vector<std::string>& header) {
        out_ << "# config=" << to_json(cfg).dump() << '\n';
        row(header);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }
    [[nodiscard]] std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

struct Context {
    const RunConfig& cfg;
    std::string command;
    std::string hash;
    RunOptions run;

    [[nodiscard]] std::string file(const char* ext) const { return command + "-" + hash + "." + ext; }
    [[nodiscard]] Json document() const { return Json{{"command", command}, {"config", to_json(cfg)}}; }
};

ConservativeSystem make_system(const RunConfig& cfg) {
    ConservativeSystem s;
    s.mass = cfg.system.m;
    s.energy = cfg.system.E;
    s.potential = Potential::parse(cfg.system.V);
    return s;
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

EnumerateOptions enumerate_options(const RunConfig& cfg) {
    EnumerateOptions o;
    o.lambda = cfg.discretization.lambda;
    o.jacobi.steps.max_arc_step = cfg.discretization.rk_max_arc_step;
    o.jacobi.steps.min_steps = cfg.discretization.rk_min_steps;
    o.jacobi.steps.endpoint_tolerance = cfg.discretization.endpoint_tolerance;
    o.jacobi.rank_tolerance = cfg.discretization.conjugate_rank_tolerance;
    return o;
}

FlowOptions flow_options(const RunConfig& cfg) {
    FlowOptions o;
    const auto& f = cfg.flow;
    o.dbeta0 = f.dbeta0.value_or(0.0);
    o.growth = f.growth;
    o.grad_tol = f.grad_tol;
    o.max_steps = f.max_steps;
    o.basin_tol = f.basin_tol.value_or(0.0);
    o.reparametrize = f.reparametrize;
    o.stiffness_fraction = f.stiffness_fraction;
    o.resample_fraction = f.resample_fraction;
    return o;
}

CountOptions count_options(const RunConfig& cfg, const RunOptions& run) {
    CountOptions o;
    o.lambda = cfg.discretization.lambda;
    o.search_lambda = cfg.discretization.search_lambda;
    o.eps = cfg.flow.eps;
    o.angles = cfg.flow.angles;
    o.bisection_steps = cfg.flow.bisection_steps;
    o.cluster_tol = cfg.flow.cluster_tol;
    o.workers = run.workers;
    o.flow = flow_options(cfg);
    return o;
}

template <class F>
Report with_model(const RunConfig& cfg, F&& f) {
    if (cfg.manifold.kind == "sphere") return f(Sphere(cfg.manifold.n, make_system(cfg)));
    return f(Chart::euclidean(cfg.manifold.n, make_system(cfg)));
}

Sphere require_sphere(const RunConfig& cfg, const std::string& command) {
    if (cfg.manifold.kind != "sphere") throw Error(ErrorKind::Unsupported, command + " needs manifold.kind = sphere");
    return Sphere(cfg.manifold.n, make_system(cfg));
}

// ---- serialization

Json critical_json(const CriticalGeodesic& c) {
    return {{"id", c.id},
            {"winding", c.winding},
            {"index", c.index},
            {"hessian_index", c.hessian_index},
            {"action", c.action},
            {"lambda", c.lambda},
            {"orientation", c.orientation},
            {"unstable_eigenvalues", c.unstable_eigenvalues}};
}

Json count_json(const ModuliCount& m) {
    Json traj = Json::array();
    for (const auto& t : m.trajectories)
        traj.push_back({{"seed", t.seed},
                        {"sign", t.sign},
                        {"flow_energy", t.flow_energy},
                        {"resample_drop", t.resample_drop},
                        {"action_drop", t.action_drop},
                        {"steps", t.steps}});
    return {{"source", m.source},     {"target", m.target}, {"n", m.n_count},         {"n_mod2", m.n_mod2},
            {"seeds", m.seeds},       {"limits", m.limits}, {"exhaustive", m.exhaustive}, {"trajectories", traj}};
}

Json complex_json(const ChainComplexData& cx) {
    Json gens = Json::object();
    for (const auto& [k, ids] : cx.generators) gens[std::to_string(k)] = ids;
    Json bnd = Json::object();
    for (const auto& [k, d] : cx.boundary) {
        Json rows = Json::array();
        for (int i = 0; i < d.rows; ++i) {
            Json r = Json::array();
            for (int j = 0; j < d.cols; ++j) r.push_back(d(i, j));
            rows.push_back(r);
        }
        bnd[std::to_string(k)] = {{"rows", d.rows}, {"cols", d.cols}, {"entries", rows}};
    }
    const auto& t = cx.truncation;
    return {{"generators", gens},
            {"boundary", bnd},
            {"coefficients", cx.z2 ? "Z2" : "Z"},
            {"square_zero", boundary_square_zero(cx)},
            {"truncation", {{"complete", t.complete}, {"sphere_family", t.sphere_family}, {"dim", t.dim},
                            {"max_winding", t.max_winding}}}};
}

std::vector<std::string> torsion_text(const HomologyGroup& h) {
    std::vector<std::string> out;
    for (const auto& f : h.torsion) out.push_back(f.str());
    return out;
}

Json groups_json(const std::vector<HomologyGroup>& groups, bool z2) {
    Json out = Json::array();
    for (const auto& h : groups)
        out.push_back({{"degree", h.degree},
                       {"free_rank", h.free_rank},
                       {"torsion", torsion_text(h)},
                       {"truncated", h.truncated},
                       {"group", table_cell(h.free_rank, torsion_text(h), h.truncated)},
                       {"coefficients", z2 ? "Z2" : "Z"}});
    return out;
}

// ---- shared computations

template <class M>
PathSpaceHomology build_homology(const M& model, const Vec& p, const Vec& q, int max_winding, int max_degree,
                                 const RunConfig& cfg, const RunOptions& run, bool z2,
                                 const std::vector<std::string>& flipped) {
    PathSpaceHomology out;
    out.critical = enumerate_critical_points(model, p, q, max_winding, enumerate_options(cfg));
    for (const auto& id : flipped) {
        auto it = std::find_if(out.critical.begin(), out.critical.end(), [&](const auto& c) { return c.id == id; });
        if (it == out.critical.end()) throw Error(ErrorKind::ConfigInvalid, "command.flip: no generator " + id);
        flip_orientation(*it);
    }
    const CountOptions copts = count_options(cfg, run);
    for (const auto& s : out.critical)
        for (const auto& t : out.critical)
            if (s.index == t.index + 1) {
                spdlog::info("counting {} -> {}", s.id, t.id);
                out.counts.push_back(count_trajectories(model, s, t, out.critical, copts));
                spdlog::info("  {} trajectories, n = {}", out.counts.back().trajectories.size(), out.counts.back().n_count);
            }
    Truncation tr{false, is_sphere_v<M>, model.dim(), max_winding};
    out.complex = assemble_complex(out.critical, out.counts, tr, z2);
    out.groups = homology(out.complex, max_degree);
    return out;
}

// ---- commands

template <class M>
Report cmd_geodesics(const Context& ctx, const M& model) {
    const auto& cfg = ctx.cfg;
    const auto crit = enumerate_critical_points(model, to_vec(cfg.endpoints.p), to_vec(cfg.endpoints.q),
                                                cfg.command.max_winding, enumerate_options(cfg));
    Csv csv(cfg, {"id", "winding", "index", "hessian_index", "action"});
    Json doc = ctx.document();
    doc["geodesics"] = Json::array();
    std::ostringstream text;
    for (const auto& c : crit) {
        csv.row({c.id, std::to_string(c.winding), std::to_string(c.index), std::to_string(c.hessian_index), num(c.action)});
        doc["geodesics"].push_back(critical_json(c));
        text << c.id << "  index " << c.index << "  action " << num(c.action) << '\n';
    }
    return {{{ctx.file("csv"), csv.str()}, {ctx.file("json"), doc.dump(2) + "\n"}}, text.str(), 0};
}

template <class M>
Report cmd_index(const Context& ctx, const M& model) {
    const auto& cfg = ctx.cfg;
    const EnumerateOptions eo = enumerate_options(cfg);
    const Vec p = to_vec(cfg.endpoints.p), q = to_vec(cfg.endpoints.q);
    const int W = cfg.command.max_winding;
    if (!is_sphere_v<M> && W > 0) throw Error(ErrorKind::Unsupported, "only the minimizing geodesic is available on charts");
    Csv csv(cfg, {"id", "winding", "conjugate_index", "hessian_index", "expected", "conjugate_points"});
    Json doc = ctx.document();
    doc["geodesics"] = Json::array();
    std::ostringstream text;
    for (int k = 0; k <= W; ++k) {
        const GeodesicPath g = solve_bvp(model, p, q, k);
        const JacobiSolution sol = integrate_jacobi(model, g, eo.jacobi);
        int conj = 0;
        std::string pts;
        Json jpts = Json::array();
        for (const auto& cp : sol.conjugate_points) {
            conj += cp.multiplicity;
            pts += (pts.empty() ? "" : ";") + num(cp.s) + ":" + std::to_string(cp.multiplicity);
            jpts.push_back({{"s", cp.s}, {"multiplicity", cp.multiplicity}});
        }
        const int lambda = admissible_lambda(model, g, cfg.discretization.lambda);
        const int hess = hessian_spectrum_index(model, g, lambda);
        const std::string expected = is_sphere_v<M> ? std::to_string(k * (model.dim() - 1)) : "0";
        const std::string id = "gamma" + std::to_string(k);
        csv.row({id, std::to_string(k), std::to_string(conj), std::to_string(hess), expected, pts});
        doc["geodesics"].push_back({{"id", id},
                                    {"winding", k},
                                    {"conjugate_index", conj},
                                    {"hessian_index", hess},
                                    {"lambda", lambda},
                                    {"expected", std::stoi(expected)},
                                    {"conjugate_points", jpts}});
        text << id << "  conjugate " << conj << "  hessian " << hess << "  expected " << expected << '\n';
    }
    return {{{ctx.file("csv"), csv.str()}, {ctx.file("json"), doc.dump(2) + "\n"}}, text.str(), 0};
}

template <class M>
Report cmd_flow(const Context& ctx, const M& model) {
    const auto& cfg = ctx.cfg;
    const auto crit = enumerate_critical_points(model, to_vec(cfg.endpoints.p), to_vec(cfg.endpoints.q),
                                                cfg.command.max_winding, enumerate_options(cfg));
    auto it = std::find_if(crit.begin(), crit.end(), [&](const auto& c) { return c.id == cfg.command.source; });
    if (it == crit.end())
        throw Error(ErrorKind::ConfigInvalid, "command.source: no generator " + cfg.command.source + " up to max_winding");
    const CriticalGeodesic& src = *it;
    if (src.index == 0) throw Error(ErrorKind::ConfigInvalid, "command.source: " + src.id + " has no unstable directions");
    if (static_cast<int>(cfg.command.seed.size()) != src.index)
        throw Error(ErrorKind::ConfigInvalid, "command.seed: expected " + std::to_string(src.index) + " coordinates");
    Vec a = to_vec(cfg.command.seed);
    if (a.norm() == 0.0) throw Error(ErrorKind::ConfigInvalid, "command.seed: must be nonzero");
    a.normalize();

    const int lambda = admissible_lambda(model, src.geodesic, src.index == 1 ? cfg.discretization.lambda
                                                                             : cfg.discretization.search_lambda);
    const auto basis = oriented_unstable_basis(model, src.geodesic, lambda, src.orientation);
    const BrokenPath base = sample_geodesic(model, src.geodesic, lambda);
    NodeField dir(base.nodes.size(), Vec::Zero(base.nodes.front().size()));
    for (int j = 0; j < src.index; ++j)
        for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += a(j) * basis[j][i];
    std::vector<GeodesicPath> geodesics;
    for (const auto& c : crit) geodesics.push_back(c.geodesic);
    const int source_pos = static_cast<int>(it - crit.begin());
    const FlowTrajectory t =
        run_flow(model, perturbed_seed(model, base, dir, cfg.flow.eps), geodesics, flow_options(cfg), source_pos);

    Csv csv(cfg, {"step", "beta", "action", "grad_norm2", "u_norm2"});
    for (std::size_t j = 0; j < t.action.size(); ++j)
        csv.row({std::to_string(j), num(t.beta[j]), num(t.action[j]), num(t.grad_norm2[j]),
                 j == 0 ? "" : num(t.u_norm2[j - 1])});
    const CriticalGeodesic& dst = crit[t.limit_plus];
    const double expected = 2.0 * (src.action - dst.action);
    const double identity = expected > 0.0 ? std::abs(t.flow_energy + 2.0 * t.resample_drop - expected) / expected : 0.0;
    Json doc = ctx.document();
    doc["flow"] = {{"source", src.id},
                   {"limit", dst.id},
                   {"lambda", lambda},
                   {"steps", t.steps()},
                   {"beta_final", t.beta.back()},
                   {"action_initial", t.action.front()},
                   {"action_final", t.action.back()},
                   {"flow_energy", t.flow_energy},
                   {"resample_drop", t.resample_drop},
                   {"resamples", t.resamples},
                   {"expected_energy", expected},
                   {"identity_rel_error", identity},
                   {"limit_distance", t.limit_distance},
                   {"converged", t.converged}};
    std::ostringstream text;
    text << src.id << " -> " << dst.id << "  steps " << t.steps() << "  flow energy " << num(t.flow_energy)
         << "  expected " << num(expected) << '\n';
    return {{{ctx.file("csv"), csv.str()}, {ctx.file("json"), doc.dump(2) + "\n"}}, text.str(), 0};
}

template <class M>
Report cmd_complex(const Context& ctx, const M& model, bool with_groups) {
    const auto& cfg = ctx.cfg;
    const bool z2 = cfg.command.coefficients == "Z2";
    const PathSpaceHomology h = build_homology(model, to_vec(cfg.endpoints.p), to_vec(cfg.endpoints.q),
                                               cfg.command.max_winding, cfg.command.max_degree, cfg, ctx.run, z2,
                                               cfg.command.flip);
    Json doc = ctx.document();
    doc["generators"] = Json::array();
    for (const auto& c : h.critical) doc["generators"].push_back(critical_json(c));
    doc["counts"] = Json::array();
    for (const auto& m : h.counts) doc["counts"].push_back(count_json(m));
    doc["complex"] = complex_json(h.complex);
    std::ostringstream text;
    if (with_groups) {
        doc["homology"] = groups_json(h.groups, z2);
        text << "degree  group\n";
        for (const auto& g : h.groups)
            text << "  " << g.degree << "     " << table_cell(g.free_rank, torsion_text(g), g.truncated) << '\n';
    } else {
        for (const auto& [k, ids] : h.complex.generators) text << "C_" << k << ": " << ids.size() << " generator(s)\n";
        for (const auto& [k, d] : h.complex.boundary)
            text << "d_" << k << ": " << d.rows << "x" << d.cols << (d.is_zero() ? " zero" : " nonzero") << '\n';
    }
    return {{{ctx.file("json"), doc.dump(2) + "\n"}}, text.str(), 0};
}

Report cmd_table(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const ConservativeSystem sys = make_system(cfg);
    const int K = cfg.command.max_degree;
    const bool z2 = cfg.command.coefficients == "Z2";
    double theta = cfg.endpoints.theta ? *cfg.endpoints.theta
                                       : Sphere::angle(to_vec(cfg.endpoints.p), to_vec(cfg.endpoints.q));
    std::vector<std::string> header{"space"};
    for (int k = 0; k <= K; ++k) header.push_back(std::to_string(k));
    Csv csv(cfg, header);
    Json doc = ctx.document();
    doc["rows"] = Json::array();
    std::ostringstream text;
    for (int n = 1; n <= 5; ++n) {
        const Sphere sphere(n, sys);
        Vec p = Vec::Zero(n + 1), q = Vec::Zero(n + 1);
        p(0) = 1.0;
        q(0) = std::cos(theta);
        q(1) = std::sin(theta);
        const int W = winding_for_degree(n, K, cfg.command.max_winding);
        spdlog::info("Omega(S^{}): max winding {}", n, W);
        const PathSpaceHomology h = build_homology(sphere, p, q, W, K, cfg, ctx.run, z2, {});
        const std::string space = "Omega(S^" + std::to_string(n) + ")";
        std::vector<std::string> cells{space};
        for (const auto& g : h.groups) cells.push_back(table_cell(g.free_rank, torsion_text(g), g.truncated));
        csv.row(cells);
        Json counts = Json::array();
        for (const auto& m : h.counts)
            counts.push_back({{"source", m.source},
                              {"target", m.target},
                              {"n", m.n_count},
                              {"found", m.trajectories.size()},
                              {"exhaustive", m.exhaustive}});
        Json indices = Json::array();
        for (const auto& c : h.critical) indices.push_back(c.index);
        doc["rows"].push_back({{"space", space},
                               {"n", n},
                               {"max_winding", W},
                               {"generator_indices", indices},
                               {"counts", counts},
                               {"homology", groups_json(h.groups, z2)}});
        for (std::size_t i = 0; i < cells.size(); ++i) text << (i ? "  " : "") << cells[i];
        text << '\n';
    }
    return {{{ctx.file("csv"), csv.str()}, {ctx.file("json"), doc.dump(2) + "\n"}}, text.str(), 0};
}

// ---- verify

struct Property {
    std::string name;
    bool passed = false;
    std::string detail;
};

class Verifier {
public:
    explicit Verifier(const Context& ctx) : ctx_(ctx) {}

    template <class F>
    void check(const std::string& name, F&& f) {
        Property prop{name, false, ""};
        try {
            prop.passed = f(prop.detail);
        } catch (const Error& e) {
            prop.detail = e.what();
        }
        spdlog::info("{} {}", prop.passed ? "PASS" : "FAIL", name);
        props_.push_back(std::move(prop));
    }

    Report report() const {
        Json doc = ctx_.document();
        doc["properties"] = Json::array();
        std::ostringstream text;
        int failed = 0;
        for (const auto& p : props_) {
            doc["properties"].push_back({{"name", p.name}, {"passed", p.passed}, {"detail", p.detail}});
            text << (p.passed ? "PASS " : "FAIL ") << p.name << "  " << p.detail << '\n';
            failed += !p.passed;
        }
        doc["failed"] = failed;
        return {{{ctx_.file("json"), doc.dump(2) + "\n"}}, text.str(), failed ? 3 : 0};
    }

private:
    const Context& ctx_;
    std::vector<Property> props_;
};

double closed_form_length(int k, double theta) { return (k % 2 == 0) ? k * kPi + theta : (k + 1) * kPi - theta; }

NodeField random_field(const Sphere& s, const BrokenPath& path, std::mt19937_64& rng, double norm) {
    std::normal_distribution<double> gauss;
    NodeField u(path.nodes.size(), Vec::Zero(s.ambient_dim()));
    for (std::size_t i = 1; i + 1 < u.size(); ++i) {
        Vec r(s.ambient_dim());
        for (auto& x : r) x = gauss(rng);
        u[i] = s.to_tangent(path.nodes[i], r);
    }
    const double nn = node_norm(s, path, u);
    for (auto& v : u) v *= norm / nn;
    return u;
}

bool same_groups(const std::vector<HomologyGroup>& a, const std::vector<HomologyGroup>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].free_rank != b[i].free_rank || a[i].torsion != b[i].torsion || a[i].truncated != b[i].truncated)
            return false;
    return true;
}

Report cmd_verify(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const Sphere sphere = require_sphere(cfg, "verify");
    const int n = sphere.dim();
    const int W = cfg.command.max_winding;
    const int K = cfg.command.max_degree;
    const Vec p = to_vec(cfg.endpoints.p), q = to_vec(cfg.endpoints.q);
    const double theta = Sphere::angle(p, q);
    const double root_kappa = std::sqrt(sphere.kappa());
    const CountOptions copts = count_options(cfg, ctx.run);
    std::mt19937_64 rng(cfg.command.rng_seed);
    Verifier v(ctx);

    std::vector<CriticalGeodesic> crit;
    v.check("enumeration", [&](std::string& d) {
        crit = enumerate_critical_points(sphere, p, q, W, enumerate_options(cfg));
        d = std::to_string(crit.size()) + " critical geodesics";
        return true;
    });
    if (crit.empty()) return v.report();
    std::vector<GeodesicPath> geodesics;
    for (const auto& c : crit) geodesics.push_back(c.geodesic);

    v.check("geodesic_actions", [&](std::string& d) {
        double worst = 0.0;
        for (const auto& c : crit) {
            const double expected = root_kappa * closed_form_length(c.winding, theta);
            worst = std::max(worst, std::abs(c.action - expected) / expected);
        }
        d = "max relative error " + num(worst);
        return worst < 1e-6;
    });

    v.check("index_theorem", [&](std::string& d) {
        bool ok = true;
        for (const auto& c : crit) {
            ok = ok && c.index == c.winding * (n - 1) && c.hessian_index == c.index;
            d += c.id + ":" + std::to_string(c.index) + "/" + std::to_string(c.hessian_index) + " ";
        }
        return ok;
    });

    v.check("conjugate_point", [&](std::string& d) {
        const GeodesicPath g = solve_bvp(sphere, p, q, 1);
        const JacobiSolution sol = integrate_jacobi(sphere, g, enumerate_options(cfg).jacobi);
        if (n == 1) {
            d = std::to_string(sol.conjugate_points.size()) + " conjugate points";
            return sol.conjugate_points.empty();
        }
        if (sol.conjugate_points.empty()) {
            d = "no conjugate point";
            return false;
        }
        const auto& cp = sol.conjugate_points.front();
        const double err = std::abs(cp.s - kPi * root_kappa);
        d = "s = " + num(cp.s) + ", multiplicity " + std::to_string(cp.multiplicity);
        return err < 1e-4 && cp.multiplicity == n - 1;
    });

    v.check("gradient_fd", [&](std::string& d) {
        double worst = 0.0;
        std::uniform_int_distribution<int> pick(0, std::min<int>(W, 2));
        for (int trial = 0; trial < 20; ++trial) {
            const BrokenPath base = sample_geodesic(sphere, crit[pick(rng)].geodesic, 16);
            const BrokenPath path = perturbed_seed(sphere, base, random_field(sphere, base, rng, 0.05), 1.0);
            const NodeField grad = action_gradient(sphere, path);
            std::vector<double> fd, an;
            const double h = 1e-6;
            for (int i = 1; i < path.segments(); ++i) {
                const Mat basis = sphere.tangent_basis(path.nodes[i]);
                for (int c = 0; c < basis.cols(); ++c) {
                    BrokenPath plus = path, minus = path;
                    plus.nodes[i] = sphere.exp(path.nodes[i], h * basis.col(c));
                    minus.nodes[i] = sphere.exp(path.nodes[i], -h * basis.col(c));
                    fd.push_back((action(sphere, plus) - action(sphere, minus)) / (2.0 * h));
                    an.push_back(path.weight(i) * sphere.inner(path.nodes[i], grad[i], basis.col(c)));
                }
            }
            const Vec f = to_vec(fd), a = to_vec(an);
            worst = std::max(worst, (f - a).norm() / a.norm());
        }
        d = "max relative error " + num(worst);
        return worst < 1e-4;
    });

    v.check("flow_monotonicity", [&](std::string& d) {
        int bad = 0;
        const int top = std::min(W, 3);
        std::uniform_int_distribution<int> pick(top >= 1 ? 1 : 0, top);
        std::uniform_real_distribution<double> amp(cfg.flow.eps, 0.05);
        std::vector<BrokenPath> seeds;
        std::vector<int> sources;
        for (int s = 0; s < cfg.command.random_seeds; ++s) {
            const int k = pick(rng);
            const int lambda = admissible_lambda(sphere, crit[k].geodesic, cfg.discretization.search_lambda);
            const BrokenPath base = sample_geodesic(sphere, crit[k].geodesic, lambda);
            seeds.push_back(perturbed_seed(sphere, base, random_field(sphere, base, rng, amp(rng)), 1.0));
            sources.push_back(k);
        }
        std::vector<std::string> errors(seeds.size());
        parallel_for(seeds.size(), ctx.run.workers, [&](std::size_t s) {
            try {
                const FlowTrajectory t = run_flow(sphere, seeds[s], geodesics, flow_options(cfg), sources[s]);
                for (std::size_t j = 1; j < t.action.size(); ++j)
                    if (t.action[j] > t.action[j - 1] + 1e-14 * std::max(1.0, t.action[j - 1])) {
                        errors[s] = "action increased";
                        break;
                    }
                if (!t.converged || t.limit_plus < 0) errors[s] = "no known limit";
            } catch (const Error& e) {
                errors[s] = e.what();
            }
        });
        for (const auto& e : errors)
            if (!e.empty() && !bad++) d = e + "; ";
        d += std::to_string(seeds.size() - bad) + "/" + std::to_string(seeds.size()) + " seeds monotone with a known limit";
        return bad == 0;
    });

    // trajectory counts for every index-adjacent pair
    std::vector<ModuliCount> counts;
    v.check("trajectory_counts", [&](std::string& d) {
        for (const auto& s : crit)
            for (const auto& t : crit)
                if (s.index == t.index + 1) counts.push_back(count_trajectories(sphere, s, t, crit, copts));
        d = std::to_string(counts.size()) + " index-adjacent pairs";
        return true;
    });

    if (n == 2 && W >= 1) {
        const ModuliCount* first = counts.empty() ? nullptr : &counts.front();
        v.check("gamma1_gamma0_count", [&](std::string& d) {
            if (!first) return false;
            d = std::to_string(first->trajectories.size()) + " trajectories, n = " + std::to_string(first->n_count);
            return first->trajectories.size() == 2 && first->trajectories[0].sign == -first->trajectories[1].sign &&
                   first->n_count == 0;
        });
        v.check("eps_robustness", [&](std::string& d) {
            if (!first) return false;
            CountOptions half = copts;
            half.eps = copts.eps / 2.0;
            const ModuliCount m = count_trajectories(sphere, crit[1], crit[0], crit, half);
            d = "n = " + std::to_string(m.n_count) + " at eps/2";
            return m.n_count == first->n_count && m.trajectories.size() == first->trajectories.size();
        });
        v.check("energy_identity", [&](std::string& d) {
            if (!first) return false;
            const double expected = 2.0 * (crit[1].action - crit[0].action);
            double worst = 0.0;
            for (const auto& t : first->trajectories)
                worst = std::max(worst, std::abs(t.flow_energy + 2.0 * t.resample_drop - expected) / expected);
            d = "max relative error " + num(worst);
            return !first->trajectories.empty() && worst < 0.01;
        });
    }
    if (n >= 3 && W >= 1) {
        v.check("index_gap", [&](std::string& d) {
            for (std::size_t i = 0; i < crit.size(); ++i)
                for (std::size_t j = 0; j < crit.size(); ++j)
                    if (crit[i].index == crit[j].index + 1) return false;
            try {
                (void)count_trajectories(sphere, crit[1], crit[0], crit, copts);
            } catch (const Error& e) {
                d = e.what();
                return e.kind() == ErrorKind::IndexGapNotOne;
            }
            return false;
        });
    }

    const Truncation tr{false, true, n, W};
    ChainComplexData cx;
    std::vector<HomologyGroup> groups;
    v.check("boundary_square_zero", [&](std::string& d) {
        cx = assemble_complex(crit, counts, tr);
        groups = homology(cx, K);
        d = std::to_string(cx.boundary.size()) + " boundary matrices";
        return boundary_square_zero(cx);
    });

    v.check("orientation_flip", [&](std::string& d) {
        auto it = std::find_if(crit.begin(), crit.end(), [](const auto& c) { return c.index > 0; });
        if (it == crit.end()) {
            d = "no generator with unstable directions";
            return true;
        }
        auto flipped = crit;
        CriticalGeodesic& f = flipped[it - crit.begin()];
        flip_orientation(f);
        std::vector<ModuliCount> recount;
        for (const auto& m : counts) {
            if (m.source != f.id && m.target != f.id) {
                recount.push_back(m);
                continue;
            }
            auto find = [&](const std::string& id) {
                return *std::find_if(flipped.begin(), flipped.end(), [&](const auto& c) { return c.id == id; });
            };
            recount.push_back(count_trajectories(sphere, find(m.source), find(m.target), flipped, copts));
            const int before = m.n_count, after = recount.back().n_count;
            d += m.source + "->" + m.target + ": " + std::to_string(before) + " / " + std::to_string(after) + "; ";
            if (after != -before) return false;
        }
        const auto h = homology(assemble_complex(flipped, recount, tr), K);
        d += "flipped " + f.id;
        return same_groups(h, groups);
    });

    v.check("z2_crosscheck", [&](std::string& d) {
        const auto h2 = homology(assemble_complex(crit, counts, tr, true), K);
        auto even = [](const HomologyGroup& g) {
            int c = 0;
            for (const auto& t : g.torsion) c += (t % 2 == 0);
            return c;
        };
        for (std::size_t k = 0; k < groups.size(); ++k) {
            const int expected = groups[k].free_rank + even(groups[k]) + (k ? even(groups[k - 1]) : 0);
            if (h2[k].free_rank != expected) {
                d = "degree " + std::to_string(k) + ": Z2 rank " + std::to_string(h2[k].free_rank);
                return false;
            }
        }
        d = "Z2 ranks agree with universal coefficients";
        return true;
    });

    v.check("homology_pattern", [&](std::string& d) {
        bool ok = true;
        for (const auto& g : groups) {
            d += table_cell(g.free_rank, torsion_text(g), g.truncated) + " ";
            if (n == 1) {
                ok = ok && (g.degree == 0 ? (g.free_rank == W + 1 && g.truncated) : g.free_rank == 0);
                continue;
            }
            if (g.truncated) continue;
            const int expected = g.degree % (n - 1) == 0 ? 1 : 0;
            ok = ok && g.free_rank == expected && g.torsion.empty();
        }
        return ok;
    });

    v.check("smith_consistency", [&](std::string& d) {
        std::uniform_int_distribution<int> entry(-9, 9);
        for (int trial = 0; trial < 20; ++trial) {
            IntMatrix m(5, 5);
            Mat a(5, 5);
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 5; ++j) a(i, j) = static_cast<double>(m(i, j) = entry(rng));
            const SmithForm s = smith_normal_form(m);
            Eigen::FullPivLU<Mat> lu(a);
            if (s.rank != lu.rank()) return false;
            for (std::size_t i = 1; i < s.factors.size(); ++i)
                if (s.factors[i] % s.factors[i - 1] != 0) return false;
            if (s.rank == 5) {
                BigInt prod = 1;
                for (const auto& f : s.factors) prod *= f;
                if (prod != BigInt(static_cast<long long>(std::llround(std::abs(a.determinant()))))) return false;
            }
        }
        d = "20 random 5x5 matrices: rank, divisibility, |det|";
        return true;
    });

    v.check("sphere_cells", [&](std::string& d) {
        bool ok = true;
        for (int m = 0; m <= 4; ++m) {
            const auto h = homology(sphere_cell_complex(m), 4);
            for (const auto& g : h) {
                const int expected = m == 0 ? (g.degree == 0 ? 2 : 0) : (g.degree == 0 || g.degree == m ? 1 : 0);
                ok = ok && g.free_rank == expected && g.torsion.empty();
            }
        }
        d = "cellular homology of S^0 .. S^4";
        return ok;
    });

    return v.report();
}

}  // namespace

std::string table_cell(int free_rank, const std::vector<std::string>& torsion, bool truncated) {
    if (truncated) return free_rank > 0 ? "+Z(trunc)" : "0(trunc)";
    std::vector<std::string> terms;
    if (free_rank == 1) terms.emplace_back("Z");
    if (free_rank > 1) terms.push_back("Z^" + std::to_string(free_rank));
    for (const auto& t : torsion) terms.push_back("Z_" + t);
    if (terms.empty()) return "0";
    std::string out;
    for (const auto& t : terms) out += (out.empty() ? "" : "+") + t;
    return out;
}

Report run_command(const RunConfig& cfg, const std::string& command, const RunOptions& opts) {
    const Context ctx{cfg, command, config_hash(command, cfg), opts};
    if (command == "geodesics") return with_model(cfg, [&](const auto& m) { return cmd_geodesics(ctx, m); });
    if (command == "index") return with_model(cfg, [&](const auto& m) { return cmd_index(ctx, m); });
    if (command == "flow") return with_model(cfg, [&](const auto& m) { return cmd_flow(ctx, m); });
    if (command == "complex") return with_model(cfg, [&](const auto& m) { return cmd_complex(ctx, m, false); });
    if (command == "homology") return with_model(cfg, [&](const auto& m) { return cmd_complex(ctx, m, true); });
    if (command == "table") return cmd_table(ctx);
    if (command == "verify") return cmd_verify(ctx);
    throw Error(ErrorKind::ConfigInvalid, "unknown command '" + command + "'");
}

}  // namespace pathmorse::cli
