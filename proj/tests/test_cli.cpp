#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "sensaipw/commands.hpp"
#include "sensaipw/csv.hpp"
#include "sensaipw/errors.hpp"
#include "sensaipw/ingest.hpp"
#include "sensaipw/simulate.hpp"

using namespace sensaipw;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sensaipw_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

CsvTable parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in);
}

// Selection-model data with a categorical and a 0/1 covariate appended.
fs::path write_sample(const fs::path& dir, Index n = 400) {
  SimScenario s;
  s.n = n;
  s.p = 4;
  s.rho = 0.3;
  s.rho0 = -0.2;
  s.intercept0 = 1.5;
  const SimDraw d = generate(s, 0);
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> level(0, 2);
  CsvTable t;
  t.header = {"treat", "y", "x1", "x2", "x3", "x4", "grp", "flag"};
  for (Index i = 0; i < n; ++i) {
    std::vector<std::string> row{format_number(d.data.treatment(i)), format_number(d.data.outcome(i))};
    for (Index j = 0; j < 4; ++j) row.push_back(format_number(d.data.covariates(i, j)));
    row.push_back(std::string(1, static_cast<char>('a' + level(rng))));
    row.push_back(i % 3 == 0 ? "1" : "0");
    t.rows.push_back(row);
  }
  const fs::path path = dir / "sample.csv";
  write_file_atomic(path, format_csv(t));
  return path;
}

AnalysisConfig sample_config(const fs::path& input, const fs::path& out) {
  AnalysisConfig c;
  c.input = input;
  c.output_dir = out;
  c.roles.treatment = "treat";
  c.roles.outcome = "y";
  c.roles.covariates = {"x1", "x2", "x3", "x4", "grp", "flag"};
  c.roles.categorical = {"grp"};
  c.rho1 = {-0.2, 0.2, 5};
  c.rho0 = {-0.1, 0.1, 3};
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + SENSAIPW_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("csv parsing") {
  const CsvTable t = parse_text("\xEF\xBB\xBF" "a,b,c\r\n1,\"x, y\",\"say \"\"hi\"\"\"\r\n2,\"two\nlines\",\r\n");
  REQUIRE(t.header.size() == 3);
  CHECK(t.header[0] == "a");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x, y");
  CHECK(t.rows[0][2] == "say \"hi\"");
  CHECK(t.rows[1][1] == "two\nlines");
  CHECK(t.rows[1][2].empty());
  CHECK(t.column("c") == 2u);
  CHECK(!t.column("d"));

  CHECK(parse_text(format_csv(t)).rows == t.rows);
  CHECK(parse_text("a,b\n1,2").rows.size() == 1);
  CHECK_THROWS_AS(parse_text("a,b\n1,2,3\n"), DataError);
  CHECK_THROWS_AS(parse_text("a,b\n1,\"2\n"), DataError);
  CHECK_THROWS_AS(parse_text(""), DataError);
}

TEST_CASE("numbers") {
  for (double v : {0.1, -1e-300, 1.0 / 3.0, 123456789.0, 2.5e17}) {
    CHECK(*parse_number(format_number(v)) == v);
  }
  CHECK(format_number(std::nan("")) == "NA");
  CHECK(!parse_number(""));
  CHECK(!parse_number("NA"));
  CHECK(!parse_number("."));
  CHECK(*parse_number(" 4 ") == 4.0);
  CHECK_THROWS_AS(parse_number("4kg"), DataError);
}

TEST_CASE("ingest") {
  const CsvTable t = parse_text("t,y,age,educ\n1,2.5,30,hs\n0,1.2,41,college\n1,3.0,25,none\n0,1,,hs\n0,,30,hs\n");
  ColumnRoles roles{"t", "y", {"age", "educ"}, {"educ"}};
  IngestSummary summary;
  const Dataset d = ingest(t, roles, &summary);
  CHECK(summary.rows_read == 5);
  CHECK(summary.rows_dropped == 2);
  CHECK(d.rows() == 3);
  REQUIRE(d.columns.size() == 3);
  CHECK(d.columns[1].name == "educ=hs");
  CHECK(d.columns[2].name == "educ=none");
  CHECK(d.columns[1].kind == CovariateKind::Dummy);
  CHECK(d.outcome(1) == 1.2);
  CHECK(d.treated_count() == 2);

  const CsvTable bad = parse_text("t,y,age\n1,2,3\n2,1,4\n0.5,1,2\n");
  try {
    ingest(bad, {"t", "y", {"age"}, {}});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('2') != std::string::npos);
    CHECK(msg.find("0.5") != std::string::npos);
  }
  CHECK_THROWS_AS(ingest(t, {"t", "y", {"weight"}, {}}, nullptr), DataError);
  CHECK_THROWS_AS(ingest(parse_text("t,y,a\n1,2,x\n"), {"t", "y", {"a"}, {}}), DataError);

  const Dataset b = ingest(parse_text("t,y,m\n1,2,1\n0,1,0\n"), {"t", "y", {"m"}, {}});
  CHECK(b.columns[0].kind == CovariateKind::Binary);
}

TEST_CASE("covariate expansion") {
  Dataset d;
  d.covariates = Eigen::MatrixXd::Random(6, 2);
  d.treatment = Eigen::VectorXd::Ones(6);
  d.outcome = Eigen::VectorXd::Zero(6);
  d.columns = {{"a", "a", CovariateKind::Numeric}, {"b", "b", CovariateKind::Numeric}};

  const DesignMatrix one = expand_covariates(d, {});
  CHECK(one.cols() == 3);
  CHECK(one.values.rightCols(2) == d.covariates);

  ExpansionSpec cubic;
  cubic.degree = 3;
  const DesignMatrix x = expand_covariates(d, cubic);
  CHECK(x.cols() == 10);
  CHECK(x.column_names[3] == "a^2");
  for (Index i = 0; i < 6; ++i) {
    CHECK(x.values(i, 0) == 1.0);
  }
  const auto col = [&](const std::string& name) {
    return std::find(x.column_names.begin(), x.column_names.end(), name) - x.column_names.begin();
  };
  REQUIRE(col("a^2:b") < x.cols());
  CHECK(x.values(2, col("a^2:b")) ==
        doctest::Approx(d.covariates(2, 0) * d.covariates(2, 0) * d.covariates(2, 1)));

  Dataset mixed = d;
  mixed.covariates.conservativeResize(6, 4);
  mixed.covariates.col(2) << 1, 0, 1, 0, 1, 0;
  mixed.covariates.col(3) << 0, 1, 1, 0, 0, 1;
  mixed.columns.push_back({"m", "m", CovariateKind::Binary});
  mixed.columns.push_back({"g=x", "g", CovariateKind::Dummy});
  ExpansionSpec full;
  full.degree = 2;
  full.numeric_dummy_degree = 1;
  full.numeric_binary_degree = 2;
  full.dummy_interactions = true;
  // 1 + 5 numeric monomials + 2 indicators + 2 (a, b) x g + 4 (a, a^2, b, b^2) x m + m:g.
  CHECK(expand_covariates(mixed, full).cols() == 15);

  Dataset dup = d;
  dup.columns[1].name = "a";
  CHECK_THROWS_AS(expand_covariates(dup, cubic), ConfigError);
  ExpansionSpec bad;
  bad.degree = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("penalty parsing") {
  CHECK(parse_penalty("auto").is_auto());
  CHECK(parse_penalty("0.5").value() == 0.5);
  CHECK(std::isinf(parse_penalty("inf").value()));
  CHECK_THROWS_AS(parse_penalty("-1"), ConfigError);
  CHECK_THROWS_AS(parse_penalty("lots"), ConfigError);
}

TEST_CASE("estimate writes stable, parseable outputs") {
  const fs::path dir = scratch("estimate");
  const fs::path input = write_sample(dir);
  AnalysisConfig c = sample_config(input, dir / "a");
  std::ostringstream log;
  cmd_estimate(c, log);
  c.output_dir = dir / "b";
  cmd_estimate(c, log);
  const std::string report_a = slurp(dir / "a" / "report.json");
  std::string report_b = slurp(dir / "b" / "report.json");
  const auto out_pos = report_b.find((dir / "b").string());
  REQUIRE(out_pos != std::string::npos);
  report_b.replace(out_pos, (dir / "b").string().size(), (dir / "a").string());
  CHECK(report_a == report_b);
  CHECK(slurp(dir / "a" / "intervals.csv") == slurp(dir / "b" / "intervals.csv"));

  const auto report = nlohmann::json::parse(report_a);
  CHECK(report["command"] == "estimate");
  REQUIRE(report["results"].size() == 3);
  for (const auto& r : report["results"]) {
    CHECK(r["ui"]["lower"].get<double>() <= r["unconfounded"]["lower"].get<double>() + 1e-12);
    CHECK(r["ui"]["upper"].get<double>() >= r["unconfounded"]["upper"].get<double>() - 1e-12);
  }

  const CsvTable intervals = read_csv(dir / "a" / "intervals.csv");
  CHECK(intervals.rows.size() == 5 + 3 + 15);
  const CsvTable plot = read_csv(dir / "a" / "plotdata.csv");
  CHECK(plot.rows.size() == 5 + 3);
  for (const auto& row : plot.rows) {
    for (std::size_t k = 1; k < row.size(); ++k) CHECK(parse_number(row[k]));
  }

  AnalysisConfig zero = sample_config(input, dir / "zero");
  zero.rho1 = RhoRange::point(0.0);
  zero.rho0 = RhoRange::point(0.0);
  cmd_estimate(zero, log);
  const auto z = nlohmann::json::parse(slurp(dir / "zero" / "report.json"));
  for (const auto& r : z["results"]) {
    CHECK(r["ui"]["lower"].get<double>() == r["unconfounded"]["lower"].get<double>());
    CHECK(r["ui"]["upper"].get<double>() == r["unconfounded"]["upper"].get<double>());
  }
}

TEST_CASE("bounds") {
  const fs::path dir = scratch("bounds");
  const fs::path input = write_sample(dir);
  AnalysisConfig c = sample_config(input, dir / "out");
  c.bounds.step = 0.05;
  std::ostringstream log;
  const int code = cmd_bounds(c, log);
  CHECK((code == kExitOk || code == kExitInfeasible));
  const auto j = nlohmann::json::parse(slurp(dir / "out" / "bounds.json"));
  CHECK(j["command"] == "bounds");
  CHECK(j["mean_y_treated"].is_number());
  const CsvTable data = read_csv(dir / "out" / "boundsdata.csv");
  CHECK(data.rows.size() == 40);
  CHECK(code == ((j["rho1"].is_null() || j["rho0"].is_null()) ? kExitInfeasible : kExitOk));
}

TEST_CASE("configuration validation") {
  AnalysisConfig c = sample_config("x.csv", "out");
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = sample_config("x.csv", "out");
  c.roles.categorical = {"nope"};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = sample_config("x.csv", "out");
  c.rho1 = {0.5, -0.5, 3};
  CHECK_THROWS_AS(c.validate(), ConfigError);

  SimulateConfig s;
  s.output_dir = "out";
  s.rhos = {1.0};
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("simulate outputs are byte-identical on rerun") {
  const fs::path dir = scratch("simulate");
  SimulateConfig s;
  s.scenario.p = 30;
  s.scenario.n_reps = 3;
  s.ns = {80, 120};
  s.rhos = {0.6, 0.2};
  s.diagnostics = true;
  std::ostringstream log;
  for (const char* name : {"a", "b"}) {
    s.output_dir = dir / name;
    s.threads = name[0] == 'a' ? 1 : 3;
    cmd_simulate(s, log);
  }
  for (const char* file : {"coverage.csv", "coverage.txt", "diagnostics.csv"}) {
    CHECK(slurp(dir / "a" / file) == slurp(dir / "b" / file));
  }
  CHECK(read_csv(dir / "a" / "coverage.csv").rows.size() == 2 * 2 * 3);
  CHECK(read_csv(dir / "a" / "diagnostics.csv").rows.size() == 2 * 3);
  const auto j = nlohmann::json::parse(slurp(dir / "a" / "simulate.json"));
  CHECK(j["coverage"].size() == 12);
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = scratch("cli");
  const fs::path input = write_sample(dir);
  const std::string roles = "--input \"" + input.string() + "\" --treatment treat --outcome y --covariates x1,x2,x3,x4,grp,flag --categorical grp";
  const std::string out = " --output \"" + (dir / "out").string() + "\"";

  CHECK(run_cli("estimate " + roles + out + " --rho-min -0.1 --rho-max 0.1 --rho-grid 3") == 0);
  CHECK(fs::exists(dir / "out" / "report.json"));
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("estimate " + roles + out + " --alpha 2") == 2);
  CHECK(run_cli("estimate " + roles + out + " --strategy fancy") == 2);
  CHECK(run_cli("estimate " + roles + out + " --targets mean_y2") == 2);
  CHECK(run_cli("estimate --input \"" + (dir / "missing.csv").string() +
                "\" --treatment treat --outcome y --covariates x1" + out) == 3);
  CHECK(run_cli("estimate --input \"" + input.string() + "\" --treatment x1 --outcome y --covariates x2" + out) == 3);
  CHECK(run_cli("estimate --input \"" + input.string() + "\" --treatment treat --outcome y --covariates nope" +
                out) == 3);

  const fs::path ini = dir / "run.ini";
  write_file_atomic(ini, "[simulate]\nn = 60\np = 20\nrho = [0.5]\nreps = 2\nestimators = [oracle]\n");
  CHECK(run_cli("--config \"" + ini.string() + "\" simulate --reps 1 --output \"" + (dir / "sim").string() +
                "\"") == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "sim" / "simulate.json"));
  CHECK(j["config"]["reps"] == 1);
  CHECK(j["config"]["n"][0] == 60);
}

TEST_CASE("shipped scenario files parse") {
  const fs::path dir = scratch("scenarios");
  for (const char* name : {"coverage_n500.ini", "coverage_full.ini", "smoke.ini"}) {
    const fs::path ini = fs::path(SENSAIPW_SCENARIO_DIR) / name;
    // Zero replications is rejected only after the config file has been read.
    CHECK(run_cli("--config \"" + ini.string() + "\" simulate --reps 0 --output \"" + (dir / "x").string() +
                  "\"") == 2);
    CHECK(run_cli("--config \"" + ini.string() + "\" simulate --help") == 0);
  }
}
