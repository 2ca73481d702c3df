#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

#include <cli/commands.hpp>
#include <pathmorse/error.hpp>

#include <sstream>

using namespace pathmorse;
using namespace pathmorse::cli;
using Catch::Approx;

namespace {

RunConfig config(std::initializer_list<std::pair<const char*, const char*>> sets) {
    Json doc = Json::object();
    for (const auto& [k, v] : sets) apply_override(doc, k, v);
    return parse_config(doc);
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::Unsupported;
}

const OutputFile& file_with(const Report& r, const std::string& ext) {
    for (const auto& f : r.files)
        if (f.name.size() > ext.size() && f.name.substr(f.name.size() - ext.size()) == ext) return f;
    throw std::runtime_error("no " + ext + " file");
}

std::vector<std::vector<std::string>> rows(const std::string& csv) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        out.push_back(cells);
    }
    return out;
}

}  // namespace

TEST_CASE("config defaults and round trip", "[cli]") {
    const RunConfig c = parse_config(Json::object());
    CHECK(c.manifold.kind == "sphere");
    CHECK(c.manifold.n == 2);
    CHECK(c.system.m == 2.0);
    CHECK(c.system.E == 1.0);
    CHECK(*c.endpoints.theta == Approx(kPi / 2));
    REQUIRE(c.endpoints.q.size() == 3);
    CHECK(c.endpoints.q[1] == 1.0);
    CHECK(c.discretization.lambda == 64);
    CHECK(c.command.max_winding == 6);

    const Json j = to_json(c);
    CHECK(to_json(parse_config(j)) == j);
    CHECK(to_json(parse_config(default_config())) == j);
    CHECK(config_hash("table", c) == config_hash("table", parse_config(j)));
    CHECK(config_hash("table", c) != config_hash("homology", c));
    CHECK(config_hash("table", c).size() == 16);
}

TEST_CASE("config overrides", "[cli]") {
    const RunConfig c = config({{"flow.eps", "5e-4"}, {"manifold.n", "3"}, {"command.flip", "[\"gamma1\"]"},
                                {"system.V", "constant:0.1"}});
    CHECK(c.flow.eps == 5e-4);
    CHECK(c.manifold.n == 3);
    CHECK(c.command.flip == std::vector<std::string>{"gamma1"});
    CHECK(c.system.V == "constant:0.1");
    CHECK(c.endpoints.p.size() == 4);

    const RunConfig pq = config({{"endpoints.p", "[0,0,1]"}, {"endpoints.q", "[1,0,0]"}});
    CHECK_FALSE(pq.endpoints.theta.has_value());
    CHECK(pq.endpoints.p[2] == 1.0);

    const RunConfig plane = config({{"manifold.kind", "euclidean"}});
    CHECK(plane.endpoints.p == std::vector<double>{0.0, 0.0});
    CHECK(plane.endpoints.q == std::vector<double>{1.0, 0.0});
}

TEST_CASE("config rejections name the field", "[cli]") {
    auto message = [](std::initializer_list<std::pair<const char*, const char*>> sets) {
        try {
            (void)config(sets);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ConfigInvalid);
            return std::string(e.what());
        }
        return std::string("accepted");
    };
    CHECK_THAT(message({{"flow.eps", "0"}}), Catch::Matchers::ContainsSubstring("flow.eps"));
    CHECK_THAT(message({{"discretization.lambda", "4"}}), Catch::Matchers::ContainsSubstring("discretization.lambda"));
    CHECK_THAT(message({{"command.max_winding", "-1"}}), Catch::Matchers::ContainsSubstring("command.max_winding"));
    CHECK_THAT(message({{"flow.epsilon", "1"}}), Catch::Matchers::ContainsSubstring("unknown field"));
    CHECK_THAT(message({{"solver.x", "1"}}), Catch::Matchers::ContainsSubstring("unknown section"));
    CHECK_THAT(message({{"flow.eps", "\"small\""}}), Catch::Matchers::ContainsSubstring("expected a number"));
    CHECK_THAT(message({{"manifold.kind", "torus"}}), Catch::Matchers::ContainsSubstring("manifold.kind"));
    CHECK_THAT(message({{"system.V", "cubic"}}), Catch::Matchers::ContainsSubstring("system.V"));
    CHECK_THAT(message({{"endpoints.p", "[0,0,2]"}, {"endpoints.q", "[1,0,0]"}}),
               Catch::Matchers::ContainsSubstring("unit vector"));
    CHECK_THAT(message({{"endpoints.p", "[0,0,1]"}}), Catch::Matchers::ContainsSubstring("together"));
    CHECK_THAT(message({{"command.coefficients", "Q"}}), Catch::Matchers::ContainsSubstring("coefficients"));
    CHECK(kind_of([] { (void)parse_config(Json::array()); }) == ErrorKind::ConfigInvalid);
}

TEST_CASE("geodesics command", "[cli]") {
    const RunConfig c = config({{"command.max_winding", "3"}});
    const Report r = run_command(c, "geodesics");
    CHECK(r.status == 0);
    REQUIRE(r.files.size() == 2);
    CHECK(r.files[0].name == "geodesics-" + config_hash("geodesics", c) + ".csv");
    const auto t = rows(file_with(r, ".csv").content);
    REQUIRE(t.size() == 5);
    CHECK(t[0] == std::vector<std::string>{"id", "winding", "index", "hessian_index", "action"});
    for (int k = 0; k <= 3; ++k) {
        CHECK(t[k + 1][2] == std::to_string(k));
        CHECK(std::stod(t[k + 1][4]) == Approx(oracle::great_circle_length(k, kPi / 2)).epsilon(1e-6));
    }
    // the report embeds the effective config
    const std::string& csv = file_with(r, ".csv").content;
    CHECK(Json::parse(csv.substr(9, csv.find('\n') - 9)) == to_json(c));
    const Json doc = Json::parse(file_with(r, ".json").content);
    CHECK(doc["config"] == to_json(c));
    CHECK(doc["geodesics"].size() == 4);
}

TEST_CASE("outputs are byte-identical across runs and worker counts", "[cli]") {
    const RunConfig c = config({{"command.max_winding", "1"}, {"command.max_degree", "2"}, {"discretization.lambda", "32"}});
    const Report a = run_command(c, "homology", {1});
    const Report b = run_command(c, "homology", {3});
    REQUIRE(a.files.size() == b.files.size());
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        CHECK(a.files[i].name == b.files[i].name);
        CHECK(a.files[i].content == b.files[i].content);
    }
    CHECK(a.text == b.text);
}

TEST_CASE("index command", "[cli]") {
    const Report r = run_command(config({{"manifold.n", "3"}, {"command.max_winding", "3"}}), "index");
    const auto t = rows(file_with(r, ".csv").content);
    REQUIRE(t.size() == 5);
    for (int k = 0; k <= 3; ++k) {
        CHECK(t[k + 1][2] == std::to_string(2 * k));
        CHECK(t[k + 1][3] == std::to_string(2 * k));
        CHECK(t[k + 1][4] == std::to_string(2 * k));
    }
    CHECK(t[2][5].substr(0, 6) == "3.1415");
}

TEST_CASE("homology command", "[cli]") {
    SECTION("S^1 is a truncated direct sum in degree 0") {
        const Report r = run_command(config({{"manifold.n", "1"}, {"command.max_winding", "2"}, {"command.max_degree", "3"}}),
                                     "homology");
        const Json doc = Json::parse(file_with(r, ".json").content);
        const Json& h = doc["homology"];
        REQUIRE(h.size() == 4);
        CHECK(h[0]["free_rank"] == 3);
        CHECK(h[0]["truncated"] == true);
        CHECK(h[0]["group"] == "+Z(trunc)");
        for (int k = 1; k <= 3; ++k) {
            CHECK(h[k]["free_rank"] == 0);
            CHECK(h[k]["truncated"] == false);
        }
        CHECK(doc["complex"]["generators"]["0"].size() == 3);
        CHECK(doc["counts"].empty());
    }
    SECTION("S^3 boundary maps vanish by shape") {
        const Report r = run_command(config({{"manifold.n", "3"}, {"command.max_winding", "2"}, {"command.max_degree", "4"}}),
                                     "homology");
        const Json doc = Json::parse(file_with(r, ".json").content);
        CHECK(doc["counts"].empty());
        CHECK(doc["complex"]["boundary"].empty());
        const Json& h = doc["homology"];
        const std::vector<int> expected{1, 0, 1, 0, 1};
        for (int k = 0; k <= 4; ++k) CHECK(h[k]["free_rank"] == expected[k]);
    }
}

TEST_CASE("flow command", "[cli]") {
    const RunConfig c = config({{"command.max_winding", "1"}, {"discretization.lambda", "32"}, {"command.seed", "[-1]"}});
    const Report r = run_command(c, "flow");
    const Json doc = Json::parse(file_with(r, ".json").content);
    CHECK(doc["flow"]["source"] == "gamma1");
    CHECK(doc["flow"]["limit"] == "gamma0");
    CHECK(doc["flow"]["identity_rel_error"].get<double>() < 0.01);
    const auto t = rows(file_with(r, ".csv").content);
    CHECK(t.size() == doc["flow"]["steps"].get<std::size_t>() + 2);

    CHECK(kind_of([] { (void)run_command(config({{"command.source", "gamma0"}}), "flow"); }) == ErrorKind::ConfigInvalid);
    CHECK(kind_of([] { (void)run_command(config({{"command.source", "gamma9"}, {"command.max_winding", "1"}}), "flow"); }) ==
          ErrorKind::ConfigInvalid);
    CHECK(kind_of([] { (void)run_command(config({{"command.seed", "[1, 0]"}, {"command.max_winding", "1"}}), "flow"); }) ==
          ErrorKind::ConfigInvalid);
}

TEST_CASE("module errors surface with their kind", "[cli]") {
    CHECK(kind_of([] { (void)run_command(config({{"endpoints.theta", "3.141592653589793"}}), "geodesics"); }) ==
          ErrorKind::AntipodalEndpoints);
    CHECK(kind_of([] { (void)run_command(config({{"manifold.kind", "euclidean"}, {"command.max_winding", "1"}}), "geodesics"); }) ==
          ErrorKind::Unsupported);
    CHECK(kind_of([] { (void)run_command(config({{"manifold.kind", "euclidean"}}), "verify"); }) == ErrorKind::Unsupported);
    CHECK(kind_of([] { (void)run_command(parse_config(Json::object()), "plot"); }) == ErrorKind::ConfigInvalid);
}

TEST_CASE("flat plane has a single minimum", "[cli]") {
    const Report r = run_command(config({{"manifold.kind", "euclidean"}, {"command.max_winding", "0"},
                                         {"command.max_degree", "2"}}),
                                 "homology");
    const Json doc = Json::parse(file_with(r, ".json").content);
    CHECK(doc["generators"].size() == 1);
    CHECK(doc["counts"].empty());
    CHECK(doc["homology"][0]["free_rank"] == 1);
}

TEST_CASE("table cells", "[cli]") {
    CHECK(table_cell(1, {}, false) == "Z");
    CHECK(table_cell(0, {}, false) == "0");
    CHECK(table_cell(3, {}, true) == "+Z(trunc)");
    CHECK(table_cell(0, {}, true) == "0(trunc)");
    CHECK(table_cell(2, {"2"}, false) == "Z^2+Z_2");
}
