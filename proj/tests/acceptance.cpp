// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "oracles.hpp"

#include <cli/commands.hpp>
#include <pathmorse/pathmorse.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

using namespace pathmorse;
using oracle::e;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void criterion(int id, const std::string& title, const std::function<bool(std::string&)>& body) {
    std::string detail;
    bool ok = false;
    const auto t0 = Clock::now();
    try {
        ok = body(detail);
    } catch (const std::exception& ex) {
        detail = std::string("exception: ") + ex.what();
    }
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.1fs", seconds_since(t0));
    std::printf("%s criterion %d: %s -- %s [%s]\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str(), secs);
    std::fflush(stdout);
    failures += !ok;
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

Vec endpoint(int n, double theta) {
    Vec q = Vec::Zero(n + 1);
    q(0) = std::cos(theta);
    q(1) = std::sin(theta);
    return q;
}

bool non_increasing(const FlowTrajectory& t) {
    for (std::size_t j = 1; j < t.action.size(); ++j)
        if (t.action[j] > t.action[j - 1] + 1e-14 * std::max(1.0, t.action[j - 1])) return false;
    return true;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

int main() {
    const double theta = kPi / 2.0;

    criterion(1, "Omega(S^n) homology table, n = 1..5, degrees 0..6", [&](std::string& d) {
        const auto t0 = Clock::now();
        const cli::RunConfig cfg = cli::parse_config(cli::Json::object());
        const cli::Report r = cli::run_command(cfg, "table");
        const double secs = seconds_since(t0);
        const auto csv = std::find_if(r.files.begin(), r.files.end(),
                                      [](const auto& f) { return f.name.size() > 4 && f.name.substr(f.name.size() - 4) == ".csv"; });
        if (csv == r.files.end()) return false;
        const std::vector<std::vector<std::string>> expected{
            {"space", "0", "1", "2", "3", "4", "5", "6"},
            {"Omega(S^1)", "+Z(trunc)", "0", "0", "0", "0", "0", "0"},
            {"Omega(S^2)", "Z", "Z", "Z", "Z", "Z", "Z", "Z"},
            {"Omega(S^3)", "Z", "0", "Z", "0", "Z", "0", "Z"},
            {"Omega(S^4)", "Z", "0", "0", "Z", "0", "0", "Z"},
            {"Omega(S^5)", "Z", "0", "0", "0", "Z", "0", "0"},
        };
        const auto got = csv_rows(csv->content);
        d = "runtime " + fmt(secs) + "s";
        if (got != expected) {
            d += ", table differs:";
            for (const auto& row : got) {
                d += " |";
                for (const auto& c : row) d += " " + c;
            }
            return false;
        }
        d += ", exact match";
        return secs < 600.0;
    });

    criterion(2, "conjugate-point index = Hessian index = k(n-1)", [&](std::string& d) {
        const auto t0 = Clock::now();
        int checked = 0;
        bool ok = true;
        for (int n = 2; n <= 4; ++n) {
            const Sphere s(n);
            for (int k = 0; k <= 4; ++k) {
                const GeodesicPath g = solve_bvp(s, e(n + 1, 0), endpoint(n, theta), k);
                const int conj = morse_index(s, g);
                const int hess = hessian_spectrum_index(s, g, admissible_lambda(s, g, 64));
                if (conj != k * (n - 1) || hess != k * (n - 1)) {
                    ok = false;
                    d += "n=" + std::to_string(n) + " k=" + std::to_string(k) + ": " + std::to_string(conj) + "/" +
                         std::to_string(hess) + "; ";
                }
                ++checked;
            }
        }
        const double secs = seconds_since(t0);
        d += std::to_string(checked) + " geodesics, runtime " + fmt(secs) + "s";
        return ok && secs < 120.0;
    });

    criterion(3, "first conjugate point at arc length pi, multiplicity n-1", [&](std::string& d) {
        bool ok = true;
        for (int n : {2, 3}) {
            const Sphere s(n);
            const GeodesicPath g = solve_bvp(s, e(n + 1, 0), endpoint(n, theta), 1);
            const JacobiSolution sol = integrate_jacobi(s, g);
            if (sol.conjugate_points.empty()) return false;
            const auto& cp = sol.conjugate_points.front();
            const double err = std::abs(cp.s - kPi);
            d += "S^" + std::to_string(n) + ": |s - pi| = " + fmt(err) + ", multiplicity " + std::to_string(cp.multiplicity) + "; ";
            ok = ok && err < 1e-4 && cp.multiplicity == n - 1;
        }
        return ok;
    });

    // gamma1 -> gamma0 on S^2, shared by criteria 4 and 5
    const Sphere s2(2);
    const Vec p = e(3, 0), q = endpoint(2, theta);
    const auto crit = enumerate_critical_points(s2, p, q, 3);
    ModuliCount base;
    bool base_ok = false;
    try {
        base = count_trajectories(s2, crit[1], crit[0], crit);
        base_ok = true;
    } catch (const std::exception& ex) {
        std::printf("count gamma1 -> gamma0 failed: %s\n", ex.what());
    }

    criterion(4, "gamma1 -> gamma0: 2 trajectories, opposite signs, n = 0, stable in eps and lambda", [&](std::string& d) {
        if (!base_ok) return false;
        auto ok_count = [](const ModuliCount& m) {
            return m.trajectories.size() == 2 && m.trajectories[0].sign == -m.trajectories[1].sign && m.n_count == 0;
        };
        CountOptions half;
        half.eps = CountOptions{}.eps / 2.0;
        const ModuliCount m_eps = count_trajectories(s2, crit[1], crit[0], crit, half);
        CountOptions fine;
        fine.lambda = 128;
        const ModuliCount m_lam = count_trajectories(s2, crit[1], crit[0], crit, fine);
        d = "found " + std::to_string(base.trajectories.size()) + "/" + std::to_string(m_eps.trajectories.size()) + "/" +
            std::to_string(m_lam.trajectories.size()) + " (eps, eps/2, lambda 128), n = " + std::to_string(base.n_count) +
            "/" + std::to_string(m_eps.n_count) + "/" + std::to_string(m_lam.n_count);
        bool same_signs = true;
        for (std::size_t i = 0; i < std::min({base.trajectories.size(), m_eps.trajectories.size(), m_lam.trajectories.size()}); ++i)
            same_signs = same_signs && base.trajectories[i].sign == m_eps.trajectories[i].sign &&
                         base.trajectories[i].sign == m_lam.trajectories[i].sign;
        return ok_count(base) && ok_count(m_eps) && ok_count(m_lam) && same_signs;
    });

    criterion(5, "energy identity Phi = 2(S(gamma1) - S(gamma0)) = 2 pi within 1%", [&](std::string& d) {
        if (!base_ok || base.trajectories.empty()) return false;
        const double expected = 2.0 * (crit[1].action - crit[0].action);
        bool ok = std::abs(expected - 2.0 * kPi) < 1e-6;
        d = "2 dS = " + fmt(expected) + ";";
        for (const auto& t : base.trajectories) {
            const double rel = std::abs(t.flow_energy - expected) / expected;
            d += " Phi = " + fmt(t.flow_energy) + " (rel " + fmt(rel) + ")";
            ok = ok && rel < 0.01;
        }
        return ok;
    });

    criterion(6, "gamma0..gamma3 actions against the great-circle formula", [&](std::string& d) {
        double worst = 0.0;
        for (const auto& c : crit) {
            const double expected = oracle::great_circle_length(c.winding, theta);
            worst = std::max(worst, std::abs(c.action - expected) / expected);
        }
        d = std::to_string(crit.size()) + " geodesics, max relative error " + fmt(worst);
        return crit.size() == 4 && worst < 1e-6;
    });

    criterion(7, "action gradient vs centered differences on 100 random broken paths", [&](std::string& d) {
        std::mt19937_64 rng(7);
        std::uniform_int_distribution<int> lam(4, 24);
        const Chart plane = Chart::euclidean(2);
        double worst_s = 0.0, worst_p = 0.0;
        for (int i = 0; i < 50; ++i) {
            worst_s = std::max(worst_s, oracle::gradient_fd_error(s2, oracle::random_sphere_path(s2, lam(rng), rng)));
            worst_p = std::max(worst_p, oracle::gradient_fd_error(plane, oracle::random_plane_path(plane, lam(rng), rng)));
        }
        d = "max relative error S^2 " + fmt(worst_s) + ", plane " + fmt(worst_p);
        return worst_s < 1e-4 && worst_p < 1e-4;
    });

    criterion(8, "d o d = 0, Smith form vs determinantal-divisor oracle, orientation-flip invariance", [&](std::string& d) {
        bool ok = true;
        // Smith normal form
        std::mt19937_64 rng(8);
        std::uniform_int_distribution<int> entry(-9, 9);
        int snf_ok = 0;
        for (int trial = 0; trial < 20; ++trial) {
            IntMatrix m(5, 5);
            std::vector<std::vector<BigInt>> big(5, std::vector<BigInt>(5));
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 5; ++j) big[i][j] = m(i, j) = entry(rng);
            snf_ok += smith_normal_form(m).factors == oracle::invariant_factors(big);
        }
        ok = ok && snf_ok == 20;
        d = "SNF " + std::to_string(snf_ok) + "/20";

        // assembled complexes
        int complexes = 0, square_zero = 0;
        auto record = [&](const ChainComplexData& cx) {
            ++complexes;
            square_zero += boundary_square_zero(cx);
        };
        const PathSpaceHomology plain = path_space_homology(s2, p, q, 3, 3);
        const PathSpaceHomology flipped = path_space_homology(s2, p, q, 3, 3, {}, {}, false, {"gamma1"});
        record(plain.complex);
        record(flipped.complex);
        record(path_space_homology(s2, p, q, 3, 3, {}, {}, true).complex);
        for (int n : {1, 3, 4})
            record(path_space_homology(Sphere(n), e(n + 1, 0), endpoint(n, theta), 2, 4).complex);
        for (int n = 0; n <= 4; ++n) record(sphere_cell_complex(n));
        ok = ok && square_zero == complexes;
        d += ", d o d = 0 on " + std::to_string(square_zero) + "/" + std::to_string(complexes) + " complexes";

        // flipping gamma1 negates every count into and out of it and leaves homology unchanged.
        // Trajectories are matched geometrically: a seed from a flipped source has its first
        // coordinate reversed relative to the unflipped basis.
        bool negated = true;
        int matched_touching = 0;
        for (std::size_t i = 0; i < plain.counts.size(); ++i) {
            const auto& a = plain.counts[i];
            const auto& b = flipped.counts[i];
            const bool touches = a.source == "gamma1" || a.target == "gamma1";
            negated = negated && a.trajectories.size() == b.trajectories.size() && b.n_count == (touches ? -1 : 1) * a.n_count;
            for (const auto& tb : b.trajectories) {
                std::vector<double> seed = tb.seed;
                if (a.source == "gamma1") seed[0] = -seed[0];
                auto ta = std::find_if(a.trajectories.begin(), a.trajectories.end(), [&](const auto& t) {
                    double dist = 0.0;
                    for (std::size_t j = 0; j < seed.size(); ++j) dist = std::max(dist, std::abs(t.seed[j] - seed[j]));
                    return dist < 1e-9;
                });
                if (ta == a.trajectories.end()) {
                    negated = false;
                    continue;
                }
                negated = negated && tb.sign == (touches ? -1 : 1) * ta->sign;
                matched_touching += touches;
            }
        }
        negated = negated && matched_touching > 0;
        bool same = plain.groups.size() == flipped.groups.size();
        for (std::size_t k = 0; same && k < plain.groups.size(); ++k)
            same = plain.groups[k].free_rank == flipped.groups[k].free_rank &&
                   plain.groups[k].torsion == flipped.groups[k].torsion;
        d += std::string(", flip ") + (negated ? "negates signs" : "does not negate signs") +
             (same ? ", homology unchanged" : ", homology changed");
        return ok && negated && same;
    });

    criterion(9, "50 random seeds: action non-increasing, omega-limit a known critical geodesic", [&](std::string& d) {
        std::vector<GeodesicPath> geodesics;
        for (const auto& c : crit) geodesics.push_back(c.geodesic);
        std::mt19937_64 rng(9);
        std::uniform_int_distribution<int> pick(1, 3);
        std::uniform_real_distribution<double> amp(1e-3, 0.05);
        int monotone = 0, known = 0;
        std::string first_error;
        for (int s = 0; s < 50; ++s) {
            const int k = pick(rng);
            const BrokenPath b = sample_geodesic(s2, crit[k].geodesic, 32);
            NodeField u(b.nodes.size(), Vec::Zero(3));
            for (std::size_t i = 1; i + 1 < u.size(); ++i) u[i] = s2.to_tangent(b.nodes[i], oracle::random_vec(3, rng));
            const double scale = amp(rng) / node_norm(s2, b, u);
            try {
                const FlowTrajectory t = run_flow(s2, perturbed_seed(s2, b, u, scale), geodesics, {}, k);
                monotone += non_increasing(t);
                known += t.converged && t.limit_plus >= 0 && t.limit_plus <= k;
            } catch (const Error& ex) {
                if (first_error.empty()) first_error = ex.what();
            }
        }
        d = std::to_string(monotone) + "/50 non-increasing, " + std::to_string(known) + "/50 known limits";
        if (!first_error.empty()) d += " (" + first_error + ")";
        return monotone == 50 && known == 50;
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
