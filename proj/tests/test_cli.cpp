#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <sys/wait.h>

#include "cli.hpp"
#include "doctest.h"
#include "stef/rng.hpp"

namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = stef::cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("stef_cli_" + name); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Last non-comment line of csv output.
std::string last_row(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') last = line;
  return last;
}

int exit_status(const std::string& cmd) {
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

}  // namespace

TEST_CASE("boundary example prints 1.298") {
  const auto r = run({"boundary", "--profile", "gaussian", "--nu", "1", "--epsilon", "0.1", "--t", "4"});
  CHECK(r.code == 0);
  CHECK(r.err.empty());
  CHECK(last_row(r.out).rfind("4,1.298", 0) == 0);
  CHECK(r.out.find("d_star_km") != std::string::npos);
  CHECK(r.out.find("# seed:") != std::string::npos);
}

TEST_CASE("numbers carry ten significant digits") {
  // 1 / (4 pi) = 0.079577471545947...
  const auto r = run({"exposure", "--r", "1"});
  REQUIRE(r.code == 0);
  CHECK(last_row(r.out).find(",0.07957747155") != std::string::npos);
}

TEST_CASE("json output parses and mirrors the rows") {
  const auto r = run({"boundary", "--t", "1,4", "--format", "json"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["command"] == "boundary");
  CHECK(j["config"]["epsilon"].get<double>() == 0.1);
  REQUIRE(j["rows"].size() == 2);
  CHECK(j["rows"][1]["d_star_km"].get<double>() == doctest::Approx(1.298371384).epsilon(1e-9));
  CHECK(j["rows"][0]["non_unique"] == false);
}

TEST_CASE("usage errors exit 1 with a message") {
  auto r = run({"boundary", "--bogus", "3"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--bogus") != std::string::npos);
  r = run({"frobnicate"});
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());
  r = run({});
  CHECK(r.code == 1);
  r = run({"boundary", "--epsilon", "0.1", "--fraction", "0.2"});
  CHECK(r.code == 1);
  r = run({"field", "--profile", "cubic"});
  CHECK(r.code == 1);
}

TEST_CASE("help exits 0") {
  const auto r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("montecarlo") != std::string::npos);
  CHECK(run({"estimate", "--help"}).code == 0);
}

TEST_CASE("data and numerical errors exit 2") {
  auto r = run({"estimate", "--input", "missing.csv"});
  CHECK(r.code == 2);
  CHECK(r.err.find("missing.csv") != std::string::npos);
  CHECK(r.err.find("not found") != std::string::npos);
  CHECK(r.out.empty());

  const auto bad = temp("bad.csv");
  std::ofstream(bad) << "distance_km,outcome\n1,2\n3,x\n";
  r = run({"diagnose", "--input", bad.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 3") != std::string::npos);

  r = run({"boundary", "--nu", "-1"});
  CHECK(r.code == 2);
}

TEST_CASE("montecarlo reruns give identical bytes") {
  const auto a = temp("mc_a.csv");
  const auto b = temp("mc_b.csv");
  const std::vector<std::string> base{"montecarlo", "--dgp", "flat", "--reps", "12", "--n", "1000", "--seed", "7"};
  auto args = base;
  args.insert(args.end(), {"--output", a.string()});
  REQUIRE(run(args).code == 0);
  args = base;
  args.insert(args.end(), {"--output", b.string()});
  REQUIRE(run(args).code == 0);
  const auto text = slurp(a);
  CHECK(text == slurp(b));
  CHECK(text.find("# seed: 7") != std::string::npos);
  CHECK(text.find("flat,nonparametric") != std::string::npos);

  args = base;
  args[8] = "8";
  CHECK(run(args).out != text);
}

TEST_CASE("config file fills flags and the command line wins") {
  const auto cfg = temp("cfg.json");
  std::ofstream(cfg) << R"({"t": [1, 4], "nu": 2, "epsilon": 0.1})";
  auto r = run({"boundary", "--config", cfg.string(), "--nu", "1", "--format", "json"});
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(r.out);
  CHECK(j["config"]["nu"].get<double>() == 1.0);
  REQUIRE(j["rows"].size() == 2);
  CHECK(j["rows"][1]["d_star_km"].get<double>() == doctest::Approx(1.298371384).epsilon(1e-9));

  r = run({"boundary", "--config", cfg.string(), "--format", "json"});
  j = nlohmann::json::parse(r.out);
  CHECK(j["config"]["nu"].get<double>() == 2.0);

  const auto flags = temp("flags.json");
  std::ofstream(flags) << R"({"recovery": true, "reps": 10, "n": 100, "seed": 4})";
  r = run({"montecarlo", "--config", flags.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("# recovery: true") != std::string::npos);
  CHECK(r.out.find("# seed: 4") != std::string::npos);

  const auto unknown = temp("unknown.json");
  std::ofstream(unknown) << R"({"temperature": 3})";
  r = run({"boundary", "--config", unknown.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("temperature") != std::string::npos);
}

TEST_CASE("ingest output feeds estimate and diagnose") {
  const auto sources = temp("sources.csv");
  const auto obs = temp("obs.csv");
  const auto sample = temp("sample.csv");
  std::ofstream(sources) << "id,lat,lon,capacity_mw\nbig,10,20,600\nsmall,11,21,50\n";
  {
    std::ofstream o(obs);
    o << "lat,lon,period,outcome\n";
    stef::Rng rng(5);
    for (int c = 0; c < 40; ++c) {
      const double lat = 10.0 + 0.03 * c;  // up to ~130 km north
      for (int m = 1; m <= 12; ++m) {
        const double d = 111.2 * (lat - 10.0);
        o << lat << ",20,2020-" << (m < 10 ? "0" : "") << m << ',' << std::exp(-0.01 * d + 0.05 * rng.normal()) << '\n';
      }
    }
  }
  auto r = run({"ingest", "--sources", sources.string(), "--observations", obs.string(), "--output", sample.string()});
  REQUIRE(r.code == 0);
  const auto text = slurp(sample);
  CHECK(text.find("# sample_size = 480") != std::string::npos);
  CHECK(text.find("# sources_kept = 1") != std::string::npos);
  CHECK(text.find("\"big\"") == std::string::npos);  // plain ids are not quoted

  r = run({"estimate", "--input", sample.string(), "--format", "json"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  double kappa = 0.0;
  for (const auto& row : j["rows"])
    if (row["quantity"] == "kappa_s") kappa = row["value"].get<double>();
  CHECK(kappa == doctest::Approx(0.01).epsilon(0.05));

  r = run({"diagnose", "--input", sample.string(), "--bins", "4"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("# decision = framework_applies") != std::string::npos);
}

TEST_CASE("estimate drops non-positive outcomes and flags extrapolation") {
  const auto in = temp("est.csv");
  {
    std::ofstream o(in);
    o << "distance,outcome\n";
    stef::Rng rng(9);
    for (int i = 0; i < 300; ++i) {
      const double d = 200.0 * rng.uniform();
      o << d << ',' << (i < 3 ? 0.0 : std::exp(1.0 - 0.004 * d + 0.1 * rng.normal())) << '\n';
    }
  }
  const auto r = run({"estimate", "--input", in.string(), "--nonparametric", "--n-boot", "50"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("3 non-positive outcomes") != std::string::npos);
  CHECK(r.out.find("extrapolates") != std::string::npos);
  CHECK(r.out.find("nonparametric,reject_null,true") != std::string::npos);
}

TEST_CASE("field table skips the singular origin") {
  auto r = run({"field", "--profile", "bessel", "--r-max", "2", "--n-r", "3"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("singular") != std::string::npos);
  CHECK(r.out.find("\n1,0,") == std::string::npos);
  r = run({"field", "--n-r", "3", "--r-max", "2", "--t", "1,2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\n2,0,") != std::string::npos);  // gaussian keeps r = 0
  CHECK(run({"moments", "--t", "2", "--k", "0"}).out.find("\n2,0,1,") != std::string::npos);
}

TEST_CASE("binary exit codes") {
  const std::string bin = STEF_BINARY;
  CHECK(exit_status(bin + " boundary --t 4 > /dev/null") == 0);
  CHECK(exit_status(bin + " boundary --nope 2> /dev/null") == 1);
  CHECK(exit_status(bin + " estimate --input missing.csv 2> /dev/null") == 2);
}
