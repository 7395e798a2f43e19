#include "support.hpp"

#include "predmetric/cli.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace predmetric;
using namespace predmetric::cli;
using json = nlohmann::json;
using testing::error_kind;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_tool(std::vector<std::string> args) {
  args.insert(args.begin(), "predmetric");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<json> json_lines(const std::string& text) {
  std::vector<json> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line.front() == '{') lines.push_back(json::parse(line));
  return lines;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("predmetric_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string read(const std::string& name) const {
    std::ifstream f(path_ / name);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

ExperimentConfig random_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 1000);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  auto value = [&] {
    switch (pick(rng) % 4) {
      case 0: return u(rng);
      case 1: return std::ldexp(u(rng), -pick(rng) % 900);
      case 2: return std::round(u(rng));
      default: return 0.1 * pick(rng);
    }
  };
  auto vec = [&](int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(value());
    return v;
  };
  const std::vector<std::string> families{"normal", "location_scale", "poisson"};
  const std::vector<std::string> bases{"normal", "logistic", "student_t"};
  const std::vector<std::string> priors{"pi_P", "pi_J", "pi_R", "pi_C", "pi_ckappa", "pi_S", "bump"};
  const std::vector<std::string> kls{"exact", "quadrature", "monte-carlo"};
  ExperimentConfig c;
  c.seed = rng();
  c.model.family = families[static_cast<std::size_t>(pick(rng) % 3)];
  const int d = 1 + pick(rng) % 3;
  c.model.sigma.assign(static_cast<std::size_t>(d), vec(d));
  c.model.sigma_tilde.assign(static_cast<std::size_t>(d), vec(d));
  c.model.phi = bases[static_cast<std::size_t>(pick(rng) % 3)];
  c.model.phi_tilde = bases[static_cast<std::size_t>(pick(rng) % 3)];
  c.model.nu = value();
  c.model.nu_tilde = value();
  c.model.quadrature_nodes = pick(rng);
  c.model.s = vec(d);
  c.chart = pick(rng) % 2 ? "reference" : "xi";
  for (int k = pick(rng) % 4; k > 0; --k) {
    PriorConfig p;
    p.name = priors[static_cast<std::size_t>(pick(rng) % 7)];
    p.c = value();
    p.kappa = value();
    p.power = value();
    p.bump_seed = rng();
    p.bumps = pick(rng) % 10;
    p.bump_eps = value();
    c.priors.push_back(p);
  }
  c.probes.lo = vec(pick(rng) % 3);
  c.probes.hi = vec(pick(rng) % 3);
  c.probes.count = pick(rng);
  for (int k = pick(rng) % 3; k > 0; --k) c.probes.points.push_back(vec(d));
  c.theta = vec(pick(rng) % 3);
  c.sim.n = static_cast<std::size_t>(pick(rng));
  for (int k = pick(rng) % 4; k > 0; --k) c.sim.n_list.push_back(static_cast<std::size_t>(pick(rng)));
  c.sim.replicates = static_cast<std::size_t>(rng() >> 20);
  c.sim.kl = kls[static_cast<std::size_t>(pick(rng) % 3)];
  c.sim.kl_mc_draws = static_cast<std::size_t>(pick(rng));
  c.sim.y_nodes = pick(rng);
  c.sim.baseline = pick(rng) % 5 - 1;
  c.figure1 = {value(), value(), value(), pick(rng)};
  c.output_dir = "out/" + std::to_string(pick(rng));
  c.threads = 1 + pick(rng) % 16;
  c.fixture_metric_perturbation = pick(rng) % 2 ? 0.0 : value();
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("minimal config takes defaults") {
    const ExperimentConfig c = parse_config(R"({"seed": 5})");
    CHECK(c.seed == 5);
    CHECK(c.model == ModelConfig{});
    CHECK(c.sim.replicates == 10000);
  }
  SUBCASE("rejections") {
    CHECK(error_kind([] { parse_config("{}"); }) == ErrorKind::Config);
    CHECK(error_kind([] { parse_config(R"({"seed": 1, "colour": "red"})"); }) == ErrorKind::Config);
    CHECK(error_kind([] { parse_config(R"({"seed": 1, "model": {"famly": "normal"}})"); }) == ErrorKind::Config);
    CHECK(error_kind([] { parse_config(R"({"seed": 1, "sim": {"n": "ten"}})"); }) == ErrorKind::Config);
    CHECK(error_kind([] { parse_config(R"({"seed": 1,)"); }) == ErrorKind::Config);
    CHECK(error_kind([] { parse_config(R"({"seed": -1})"); }) == ErrorKind::Config);
    CHECK(error_kind([] { load_config("/nonexistent/config.json"); }) == ErrorKind::Config);
  }
  SUBCASE("model validation") {
    ModelConfig m;
    m.family = "gamma";
    CHECK(error_kind([&] { build_pair(m); }) == ErrorKind::Config);
    m = ModelConfig{};
    m.phi = "student_t";
    CHECK(error_kind([&] { build_pair(m); }) != ErrorKind::Internal);
    m.nu = 3.0;
    CHECK(build_pair(m).family() == Family::LocationScale);
  }
}

TEST_CASE("property: config round trip") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    const ExperimentConfig c = random_config(rng);
    const std::string text = serialize_config(c);
    CAPTURE(text);
    CHECK(parse_config(text) == c);
    CHECK(serialize_config(parse_config(text)) == text);
  }
}

TEST_CASE("format_double keeps 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(-0.25) == "-0.25");
  CHECK(std::stod(format_double(M_PI)) == M_PI);
}

TEST_CASE("geom examples") {
  SUBCASE("Poisson predictive metric") {
    const ExperimentConfig c =
        parse_config(R"({"seed": 1, "model": {"family": "poisson", "s": [0.1, 0.2]}, "theta": [1, 1]})");
    std::ostringstream out, err;
    REQUIRE(cmd_geom(c, {out, err, "", 1}) == 0);
    const json j = json_lines(out.str()).at(0);
    CHECK(j["g_predictive"][0][0].get<double>() == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(j["g_predictive"][1][1].get<double>() == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(j["g_predictive"][0][1].get<double>() == 0.0);
  }
  SUBCASE("location-scale pi_P density at sigma = 1") {
    const ExperimentConfig c = parse_config(R"({"seed": 1, "theta": [0, 1]})");
    std::ostringstream out, err;
    REQUIRE(cmd_geom(c, {out, err, "", 1}) == 0);
    CHECK(json_lines(out.str()).at(0)["pi_P_density"].get<double>() == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("normal pair has vanishing traces") {
    const ExperimentConfig c = parse_config(
        R"({"seed": 1, "model": {"family": "normal", "sigma": [[2, 0.5], [0.5, 1]], "sigma_tilde": [[1, 0], [0, 3]]},
            "theta": [0.3, -0.2]})");
    std::ostringstream out, err;
    REQUIRE(cmd_geom(c, {out, err, "", 1}) == 0);
    const json j = json_lines(out.str()).at(0);
    for (const char* key : {"x_e", "x_m", "y_e", "y_m", "predictive_riemannian"})
      for (const json& v : j["connection_traces"][key]) CHECK(std::abs(v.get<double>()) < 1e-12);
  }
}

TEST_CASE("check examples") {
  SUBCASE("default suite passes") {
    const Result r = run_tool({"check"});
    CHECK(r.code == 0);
    const auto lines = json_lines(r.out);
    REQUIRE(!lines.empty());
    for (const json& j : lines)
      if (j.contains("pass")) CHECK_MESSAGE(j["pass"].get<bool>(), j.dump());
    CHECK(lines.back()["failures"] == 0);
  }
  SUBCASE("corrupted metric fails duality") {
    TempDir dir;
    const std::string path = dir.file(
        "c.json", R"({"seed": 1, "model": {"family": "poisson", "s": [0.5, 2]}, "fixture_metric_perturbation": 0.01})");
    const Result r = run_tool({"check", "--config", path});
    CHECK(r.code == 1);
    bool duality_failed = false;
    for (const json& j : json_lines(r.out))
      if (j.value("check", "") == "duality_x" && !j["pass"].get<bool>()) duality_failed = true;
    CHECK(duality_failed);
  }
  SUBCASE("equal models include the conventional checks") {
    TempDir dir;
    const std::string path = dir.file(
        "c.json", R"({"seed": 1, "model": {"phi": "logistic", "phi_tilde": "logistic"}})");
    const Result r = run_tool({"check", "--config", path});
    CHECK(r.code == 0);
    int conventional = 0;
    for (const json& j : json_lines(r.out)) {
      const std::string name = j.value("check", "");
      if (name.rfind("conventional", 0) == 0) {
        ++conventional;
        CHECK(j["pass"].get<bool>());
      }
    }
    CHECK(conventional == 2);
  }
}

TEST_CASE("figure1 examples") {
  const std::string csv = figure1_csv({});
  std::istringstream in(csv);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "rho,risk_piP,risk_piR,risk_piC,risk_c0_k1,risk_c1_k1");
  std::vector<double> row;
  std::stringstream fields(first);
  for (std::string f; std::getline(fields, f, ',');) row.push_back(std::stod(f));
  REQUIRE(row.size() == 6);
  const std::vector<double> expect{0.0, 0.0, -0.5, -0.5, -2.0, -1.0};
  for (std::size_t i = 0; i < 6; ++i) CHECK(row[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  std::string line, last;
  int rows = 1;
  while (std::getline(in, line)) {
    last = line;
    ++rows;
    std::stringstream fs(line);
    std::vector<double> v;
    for (std::string f; std::getline(fs, f, ',');) v.push_back(std::stod(f));
    CHECK(v[4] <= -0.5);
    CHECK(v[5] <= -0.5);
  }
  CHECK(rows == 101);
  Figure1Config far;
  far.rho_max = 40.0;
  const std::string tail = figure1_csv(far);
  const std::string end = tail.substr(tail.find_last_of('\n', tail.size() - 2) + 1);
  std::stringstream fs(end);
  std::vector<double> v;
  for (std::string f; std::getline(fs, f, ',');) v.push_back(std::stod(f));
  CHECK(v[4] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(v[5] == doctest::Approx(-0.5).epsilon(1e-12));

  const Result r = run_tool({"figure1"});
  CHECK(r.code == 0);
  CHECK(r.out == csv);
}

TEST_CASE("risk-asym examples") {
  TempDir dir;
  const std::string path = dir.file("c.json", R"({"seed": 3, "model": {"family": "poisson", "s": [1, 1, 1, 1]},
      "priors": [{"name": "pi_S"}], "probes": {"count": 8}, "output_dir": ")" + dir.str() + R"("})");
  const Result r = run_tool({"risk-asym", "--config", path});
  REQUIRE(r.code == 0);
  std::istringstream in(dir.read("risk_asym.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header == "probe,theta_1,theta_2,theta_3,theta_4,prior,risk_thm2,risk_thm1,closed_form");
  int rows = 0;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> f;
    std::stringstream fs(line);
    for (std::string x; std::getline(fs, x, ',');) f.push_back(x);
    REQUIRE(f.size() == 9);
    double sum = 0.0;
    for (int i = 1; i <= 4; ++i) sum += std::stod(f[static_cast<std::size_t>(i)]);
    if (f[5] == "pi_S") CHECK(std::stod(f[6]) == doctest::Approx(-0.5 / sum).epsilon(1e-6));
    if (f[5] == "pi_P") CHECK(std::stod(f[6]) == 0.0);
    ++rows;
  }
  CHECK(rows == 16);
}

TEST_CASE("risk-mc output and determinism") {
  TempDir dir;
  const std::string base = R"({"seed": 11, "priors": [{"name": "pi_R"}],
      "sim": {"n": 20, "replicates": 6, "kl": "quadrature"}, "output_dir": ")";
  const std::string path = dir.file("c.json", base + dir.str() + R"(/a"})");
  const Result one = run_tool({"risk-mc", "--config", path, "--threads", "1"});
  REQUIRE(one.code == 0);
  const Result two = run_tool({"risk-mc", "--config", path, "--threads", "3", "--out", dir.str() + "/b"});
  REQUIRE(two.code == 0);
  const std::string a = dir.read("a/risk_mc.csv"), b = dir.read("b/risk_mc.csv");
  CHECK(a == b);
  CHECK(a.substr(0, a.find('\n')) ==
        "prior,n,replicates,mean,se,diff,diff_se,unpaired_diff_se,scaled_diff,scaled_diff_se,asymptote");
  const json header = json_lines(one.out).at(0);
  CHECK(header["seed"] == 11);
  CHECK(header["substreams"].get<std::string>().find("splitmix64") != std::string::npos);
  const Result other = run_tool({"risk-mc", "--config", path, "--seed", "12", "--out", dir.str() + "/c"});
  REQUIRE(other.code == 0);
  CHECK(dir.read("c/risk_mc.csv") != a);

  const std::string sweep =
      dir.file("s.json", R"({"seed": 2, "priors": [{"name": "pi_R"}], "sim": {"n_list": [50, 100], "replicates": 3,
          "kl": "quadrature"}, "output_dir": ")" + dir.str() + R"(/s"})");
  REQUIRE(run_tool({"risk-mc", "--config", sweep}).code == 0);
  const std::string conv = dir.read("s/convergence.csv");
  CHECK(conv.substr(0, conv.find('\n')) ==
        "n,prior,scaled_diff,scaled_diff_se,asymptote,n_baseline_risk,n_baseline_risk_se,leading");
  CHECK(std::count(conv.begin(), conv.end(), '\n') == 5);
}

TEST_CASE("exit codes") {
  TempDir dir;
  CHECK(run_tool({}).code == 2);
  CHECK(run_tool({"frobnicate"}).code == 2);
  CHECK(run_tool({"geom"}).code == 2);
  CHECK(run_tool({"check", "--threads", "0"}).code == 2);
  CHECK(run_tool({"geom", "--config", dir.file("bad.json", "{\"seed\": 1, \"extra\": 2}")}).code == 2);
  CHECK(run_tool({"geom", "--config", dir.file("noseed.json", "{}")}).code == 2);
  CHECK(run_tool({"geom", "--config", dir.str() + "/missing.json"}).code == 2);
  const Result range =
      run_tool({"geom", "--config", dir.file("range.json", R"({"seed": 1, "priors": [{"name": "pi_R", "power": 2}]})")});
  CHECK(range.code == 2);
  CHECK(range.err.find("error:") != std::string::npos);
  CHECK(run_tool({"geom", "--config", dir.file("dom.json", R"({"seed": 1, "theta": [0, -1]})")}).code == 2);
  // Tiny samples push the pi_R posterior out of the quadrature window.
  const std::string leak = dir.file("leak.json", R"({"seed": 2, "priors": [{"name": "pi_R"}],
      "sim": {"n": 10, "replicates": 3, "kl": "quadrature"}, "output_dir": ")" + dir.str() + R"("})");
  const Result numeric = run_tool({"risk-mc", "--config", leak});
  CHECK(numeric.code == 3);
  CHECK(numeric.err.find("WindowError") != std::string::npos);
  CHECK(exit_code_for(Error(ErrorKind::Spec, "x")) == 2);
  CHECK(exit_code_for(Error(ErrorKind::Window, "x")) == 3);
  CHECK(run_tool({"--help"}).code == 0);
}
