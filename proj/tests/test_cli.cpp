#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "hj/cli.hpp"

namespace fs = std::filesystem;
using hj::cli::Request;
using hj::cli::run;
using json = nlohmann::ordered_json;

namespace {

const fs::path kConfigs = HJ_CONFIG_DIR;

fs::path root() { return fs::temp_directory_path() / "hjkit_cli_test"; }

fs::path scratch(const std::string& name) {
  fs::path p = root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
  fs::path p = scratch("configs") / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

Request request(const std::string& verb, const fs::path& config, const std::string& out) {
  Request r;
  r.verb = verb;
  r.config = config;
  r.out = scratch(out);
  r.quiet = true;
  return r;
}

const json& check_named(const json& report, const std::string& name) {
  for (const auto& c : report["checks"])
    if (c["name"] == name) return c;
  FAIL("no check named " << name);
  static json none;
  return none;
}

const char* kOscillatorHeader = R"(
[system]
type = "hamiltonian"
n = 1
H = "p1^2/2 + q1^2/2"
)";

}  // namespace

TEST_CASE("every bundled config exits as documented, deterministically and in time") {
  int count = 0;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(kConfigs))
    if (e.path().extension() == ".toml") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    const toml::table meta = toml::parse_file(f.string());
    const std::string verb = meta["meta"]["verb"].value_or(std::string());
    const int expected = static_cast<int>(meta["meta"]["expected_exit"].value_or(-1));
    CAPTURE(f.filename().string());
    const auto start = std::chrono::steady_clock::now();
    auto first = run(request(verb, f, "a_" + f.stem().string()));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    auto second = run(request(verb, f, "b_" + f.stem().string()));
    CHECK(first.exit_code == expected);
    CHECK(seconds < 60.0);
    const std::string a = slurp(root() / ("a_" + f.stem().string()) / "report.json");
    const std::string b = slurp(root() / ("b_" + f.stem().string()) / "report.json");
    CHECK(!a.empty());
    CHECK(a == b);
    ++count;
  }
  CHECK(count >= 8);
}

TEST_CASE("free particle reports a zero dH defect") {
  auto o = run(request("check-hj", kConfigs / "free_particle.toml", "fp"));
  CHECK(o.exit_code == hj::cli::kExitPass);
  CHECK(check_named(o.report, "dH_defect")["max_defect"].get<double>() == 0.0);
  CHECK(o.report["config_digest"].get<std::string>().size() == std::string("sha256:").size() + 64);
}

TEST_CASE("constant 1-form for the oscillator fails with a large dH defect") {
  auto o = run(request("check-hj", kConfigs / "oscillator_const_alpha.toml", "osc_const"));
  CHECK(o.exit_code == hj::cli::kExitFail);
  // H o alpha = 1/2 + q^2/2 has gradient q, so the defect is max |q| = 1 on [-1, 1]
  CHECK(check_named(o.report, "dH_defect")["max_defect"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(check_named(o.report, "dH_defect")["max_defect"].get<double>() > 0.4);
}

TEST_CASE("malformed expression is a configuration error with line and offset") {
  auto o = run(request("check-hj", kConfigs / "malformed.toml", "malformed"));
  CHECK(o.exit_code == hj::cli::kExitConfigError);
  CHECK(o.error.find("malformed.toml:9:") != std::string::npos);
  CHECK(o.error.find("SyntaxError") != std::string::npos);
  CHECK(o.error.find("offset 4") != std::string::npos);
  CHECK(o.report["error"]["line"] == 9);
  CHECK(fs::exists(root() / "malformed" / "report.json"));
}

TEST_CASE("configuration errors name the table, key and line") {
  SUBCASE("missing key") {
    auto p = write_config("missing.toml", std::string(kOscillatorHeader) + "\n[check]\nlo = [-1.0]\nhi = [1.0]\ncounts = [3]\n");
    auto o = run(request("check-hj", p, "missing"));
    CHECK(o.exit_code == 3);
    CHECK(o.error.find("[solution]") != std::string::npos);
  }
  SUBCASE("wrong value type") {
    auto p = write_config("type.toml", "[system]\ntype = \"hamiltonian\"\nn = \"one\"\nH = \"p1^2\"\n");
    auto o = run(request("check-hj", p, "type"));
    CHECK(o.exit_code == 3);
    CHECK(o.error.find(":3:") != std::string::npos);
    CHECK(o.error.find("n: expected an integer") != std::string::npos);
  }
  SUBCASE("TOML syntax") {
    auto p = write_config("toml.toml", "[system]\ntype = \n");
    auto o = run(request("check-hj", p, "toml"));
    CHECK(o.exit_code == 3);
    CHECK(o.report["error"]["line"] == 2);
  }
  SUBCASE("unknown identifier") {
    auto p = write_config("ident.toml", std::string(kOscillatorHeader) +
                                            "[solution]\nalpha = [\"z9\"]\n[check]\nlo = [-1.0]\nhi = [1.0]\ncounts = [3]\n");
    auto o = run(request("check-hj", p, "ident"));
    CHECK(o.exit_code == 3);
    CHECK(o.error.find("UnknownIdentifier") != std::string::npos);
  }
  SUBCASE("system type does not fit the verb") {
    auto o = run(request("check-lag-hj", kConfigs / "oscillator.toml", "wrong_verb"));
    CHECK(o.exit_code == 3);
    CHECK(o.error.find("lagrangian") != std::string::npos);
  }
  SUBCASE("unreadable file") {
    auto o = run(request("check-hj", kConfigs / "does_not_exist.toml", "nofile"));
    CHECK(o.exit_code == 3);
  }
}

TEST_CASE("numerical failures are reported, not thrown") {
  // sqrt(2 - q^2) leaves its domain on most of [-3, 3]
  auto p = write_config("domain.toml", std::string(kOscillatorHeader) +
                                           "[solution]\nalpha = [\"sqrt(2 - q1^2)\"]\n"
                                           "[check]\nlo = [-3.0]\nhi = [3.0]\ncounts = [13]\n");
  auto o = run(request("check-hj", p, "domain"));
  CHECK(o.exit_code == hj::cli::kExitInconclusive);
  const json& dh = check_named(o.report, "dH_defect");
  CHECK(dh["status"] == "inconclusive");
  CHECK(dh["detail"]["n_skipped"].get<int>() > 0);
}

TEST_CASE("flags override tolerance and sampling") {
  SUBCASE("tolerance") {
    auto r = request("check-hj", kConfigs / "oscillator_const_alpha.toml", "tol");
    r.tolerance = 2.0;
    auto o = run(r);
    CHECK(o.exit_code == hj::cli::kExitPass);
    CHECK(check_named(o.report, "dH_defect")["tolerance"] == 2.0);
  }
  SUBCASE("random samples are seeded") {
    auto r = request("check-hj", kConfigs / "oscillator.toml", "s1");
    r.samples = 17;
    r.seed = 5;
    auto a = run(r);
    r.out = scratch("s2");
    auto b = run(r);
    r.out = scratch("s3");
    r.seed = 6;
    auto c = run(r);
    CHECK(a.exit_code == 0);
    CHECK(a.report["sampling"]["base"]["kind"] == "random");
    CHECK(a.report["sampling"]["base"]["prng"] == "mt19937_64");
    CHECK(a.report["sampling"]["base"]["count"] == 17);
    CHECK(a.report.dump() == b.report.dump());
    CHECK(a.report.dump() != c.report.dump());
  }
}

TEST_CASE("trajectory verbs write CSV with a header row") {
  auto o = run(request("reconstruct", kConfigs / "oscillator_reconstruct.toml", "recon"));
  REQUIRE(o.exit_code == 0);
  REQUIRE(!o.report["files"].empty());
  const std::string csv = slurp(root() / "recon" / o.report["files"][0].get<std::string>());
  CHECK(csv.rfind("t,lifted_q1,lifted_p1,direct_q1,direct_p1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') > 100);
  CHECK(fs::exists(root() / "recon" / "timing.json"));
}

TEST_CASE("the literal wave jet field leaves a Lagrangian residual of 2 a^2") {
  auto o = run(request("field-check", kConfigs / "wave_field_same_psi.toml", "wave_same"));
  CHECK(o.exit_code == 1);
  // a ranges over [-1, 1]
  CHECK(check_named(o.report, "lag_field_hj_residual")["max_defect"].get<double>() == doctest::Approx(2.0));
  CHECK(check_named(o.report, "ham_field_hj_residual")["status"] == "pass");
}

TEST_CASE("executable exit codes") {
  const std::string exe = HJ_CLI_EXE;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(s);
  };
  const std::string out = " --quiet --out " + scratch("exe").string();
  CHECK(status(exe + " check-hj " + (kConfigs / "free_particle.toml").string() + out) == 0);
  CHECK(status(exe + " check-hj " + (kConfigs / "oscillator_const_alpha.toml").string() + out) == 1);
  CHECK(status(exe + " check-hj " + (kConfigs / "malformed.toml").string() + out) == 3);
  CHECK(status(exe + " no-such-verb " + (kConfigs / "free_particle.toml").string() + out) == 3);
  CHECK(status(exe + " check-hj") == 3);
  CHECK(status(exe + " --help") == 0);
}
