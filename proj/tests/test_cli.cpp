#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vicm/cli.hpp"
#include "vicm/config.hpp"
#include "vicm/csv.hpp"
#include "vicm/errors.hpp"
#include "vicm/simlab.hpp"

using namespace vicm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("vicm_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dataset_csv(int n, std::uint64_t seed) {
  SimRng rng(seed);
  auto [data, truth] = gen_example1(n, ErrorLaw{}, rng, 0.5);
  std::string text = "y,x2,x3,z1,z2,z3\n";
  for (int i = 0; i < n; ++i) {
    text += format_double(data.y[i]) + "," + format_double(data.x(i, 1)) + "," +
            format_double(data.x(i, 2)) + "," + format_double(data.z(i, 0)) + "," +
            format_double(data.z(i, 1)) + "," + format_double(data.z(i, 2)) + "\n";
  }
  return text;
}

const char* kSchemaConfig =
    "[model]\n"
    "response = y\n"
    "x_cols = x2, x3\n"
    "z_cols = z1, z2, z3\n"
    "add_intercept = true\n";

}  // namespace

TEST_CASE("dataset loading") {
  fs::path dir = temp_dir("load");

  SUBCASE("small file with intercept") {
    write_file(dir / "d.csv",
               "y,x2,z1,z2,z3\n"
               "1.0,0.5,0.1,0.2,0.3\n"
               "2.0,-0.5,0.4,0.5,0.6\n"
               "0.5,0.1,0.7,0.8,0.9\n");
    DatasetSchema schema{"y", {"x2"}, {"z1", "z2", "z3"}, true, false};
    Dataset data = load_dataset((dir / "d.csv").string(), schema);
    CHECK(data.n() == 3);
    CHECK(data.d() == 2);
    CHECK(data.p() == 3);
    CHECK(data.x.col(0).cwiseEqual(1.0).all());
    CHECK(data.x(1, 1) == -0.5);
  }

  SUBCASE("blank cell names the row and column") {
    write_file(dir / "blank.csv",
               "y,x2,z1,z2\n"
               "1.0,0.5,0.1,0.2\n"
               "2.0,-0.5,0.4,\n");
    DatasetSchema schema{"y", {"x2"}, {"z1", "z2"}, true, false};
    try {
      load_dataset((dir / "blank.csv").string(), schema);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      std::string msg = e.what();
      CHECK(msg.find("row 2") != std::string::npos);
      CHECK(msg.find("z2") != std::string::npos);
    }
  }

  SUBCASE("non-numeric cell is addressed") {
    write_file(dir / "bad.csv",
               "y,x2,z1\n"
               "1.0,abc,0.1\n");
    DatasetSchema schema{"y", {"x2"}, {"z1"}, true, false};
    try {
      load_dataset((dir / "bad.csv").string(), schema);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      std::string msg = e.what();
      CHECK(msg.find("abc") != std::string::npos);
      CHECK(msg.find("x2") != std::string::npos);
    }
  }

  SUBCASE("missing column is named") {
    write_file(dir / "cols.csv", "y,x2\n1.0,2.0\n");
    DatasetSchema schema{"y", {"x2"}, {"z9"}, true, false};
    CHECK_THROWS_WITH_AS(load_dataset((dir / "cols.csv").string(), schema),
                         doctest::Contains("z9"), DataError);
  }

  SUBCASE("z standardization zeroes the means") {
    write_file(dir / "std.csv", dataset_csv(80, 5));
    DatasetSchema schema{"y", {"x2", "x3"}, {"z1", "z2", "z3"}, true, true};
    Dataset data = load_dataset((dir / "std.csv").string(), schema);
    CHECK(data.z_standardized);
    for (int j = 0; j < 3; ++j) {
      CHECK(std::abs(data.z.col(j).mean()) < 1e-12);
      double var = data.z.col(j).squaredNorm() / (data.n() - 1);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("config parsing") {
  fs::path dir = temp_dir("config");
  write_file(dir / "run.conf",
             "# comment line\n"
             "[model]\n"
             "response = y\n"
             "z_cols = z1, z2\n"
             "[fit]\n"
             "tau = 0.75\n"
             "knots = 3   # trailing comment\n"
             "[penalty]\n"
             "alpha1 = 0.1\n"
             "[io]\n"
             "threads = 2\n");
  RunConfig cfg = parse_config_file((dir / "run.conf").string());
  CHECK(cfg.tau == 0.75);
  CHECK(cfg.fit.interior_knots == 3);
  CHECK(cfg.alpha1 == 0.1);
  CHECK(cfg.threads == 2);
  CHECK(cfg.schema.z_cols == std::vector<std::string>{"z1", "z2"});

  write_file(dir / "bad.conf", "[fit]\nnot_a_key = 1\n");
  CHECK_THROWS_WITH_AS(parse_config_file((dir / "bad.conf").string()),
                       doctest::Contains("not_a_key"), DataError);
  write_file(dir / "loose.conf", "tau = 0.5\n");
  CHECK_THROWS_AS(parse_config_file((dir / "loose.conf").string()), DataError);
  write_file(dir / "badsec.conf", "[nope]\nx = 1\n");
  CHECK_THROWS_AS(parse_config_file((dir / "badsec.conf").string()), DataError);
}

TEST_CASE("cli fit emits reloadable results") {
  fs::path dir = temp_dir("fit");
  write_file(dir / "d.csv", dataset_csv(220, 9));
  write_file(dir / "run.conf", kSchemaConfig);
  int code = run_command({"fit", "--config", (dir / "run.conf").string(), "--data",
                          (dir / "d.csv").string(), "--out", (dir / "out").string(),
                          "--tau", "0.5", "--seed", "4"});
  REQUIRE(code == 0);

  nlohmann::json j = nlohmann::json::parse(read_file(dir / "out" / "fit.json"));
  CHECK(j["n"] == 220);
  CHECK(j["tau"] == 0.5);
  // loadings reload to identical doubles
  Eigen::MatrixXd beta(3, 3);
  for (int l = 0; l < 3; ++l)
    for (int c = 0; c < 3; ++c) beta(l, c) = j["loadings"][l][c].get<double>();
  std::string again = nlohmann::json::parse(read_file(dir / "out" / "fit.json"))
                          .dump();
  CHECK(again == j.dump());
  for (int l = 0; l < 3; ++l)
    CHECK(beta.row(l).norm() == doctest::Approx(1.0).epsilon(1e-12));

  // golden headers
  std::string coeffs = read_file(dir / "out" / "coeffs.csv");
  CHECK(coeffs.rfind("component,s,lambda\n", 0) == 0);
  std::string curves = read_file(dir / "out" / "curves.csv");
  CHECK(curves.rfind("component,u,m_hat,se,lo,hi\n", 0) == 0);

  // predictions from the stored fit run against the same file
  int pcode = run_command({"predict", "--model", (dir / "out" / "fit.json").string(),
                           "--data", (dir / "d.csv").string(), "--out",
                           (dir / "pred").string()});
  REQUIRE(pcode == 0);
  std::string preds = read_file(dir / "pred" / "predictions.csv");
  CHECK(preds.rfind("row,y_hat\n", 0) == 0);
  int lines = static_cast<int>(std::count(preds.begin(), preds.end(), '\n'));
  CHECK(lines == 221);
}

TEST_CASE("cli error paths use the documented exit codes") {
  fs::path dir = temp_dir("errors");
  CHECK(run_command({"nonsense"}) == 1);
  CHECK(run_command({"fit", "--data", (dir / "missing.csv").string()}) == 2);

  // too few observations for the basis: numeric failure
  write_file(dir / "tiny.csv", dataset_csv(12, 2));
  write_file(dir / "run.conf", kSchemaConfig);
  CHECK(run_command({"fit", "--config", (dir / "run.conf").string(), "--data",
                     (dir / "tiny.csv").string(), "--out", (dir / "out").string()}) == 3);
}

TEST_CASE("simulate is byte-identical under a repeated seed") {
  fs::path dir = temp_dir("sim");
  auto args = [&](const std::string& out) {
    return std::vector<std::string>{
        "simulate", "--example", "1",  "--error", "sn",  "--tau", "0.5",
        "--n",      "120",       "--replications", "2",  "--seed", "7",
        "--pipeline", "fit_only", "--out", out};
  };
  REQUIRE(run_command(args((dir / "a").string())) == 0);
  REQUIRE(run_command(args((dir / "b").string())) == 0);
  CHECK(read_file(dir / "a" / "simsummary.json") == read_file(dir / "b" / "simsummary.json"));
  CHECK(read_file(dir / "a" / "simreport.csv") == read_file(dir / "b" / "simreport.csv"));
  std::string report = read_file(dir / "a" / "simreport.csv");
  CHECK(report.rfind("rep,quantity,i,j,value\n", 0) == 0);
}

TEST_CASE("identify pipeline flags the linear components end to end") {
  fs::path dir = temp_dir("identify");
  SimRng rng(3);
  auto [data, truth] = gen_example3(420, 4, ErrorLaw{}, 0.5, rng, 0.0);
  std::string text = "y,x2,x3,x4,z1,z2,z3,z4\n";
  for (int i = 0; i < data.n(); ++i) {
    text += format_double(data.y[i]);
    for (int l = 1; l < 4; ++l) text += "," + format_double(data.x(i, l));
    for (int j = 0; j < 4; ++j) text += "," + format_double(data.z(i, j));
    text += "\n";
  }
  write_file(dir / "d.csv", text);
  write_file(dir / "run.conf",
             "[model]\n"
             "response = y\n"
             "x_cols = x2, x3, x4\n"
             "z_cols = z1, z2, z3, z4\n");
  int code = run_command({"identify", "--config", (dir / "run.conf").string(), "--data",
                          (dir / "d.csv").string(), "--out", (dir / "out").string(),
                          "--tau", "0.5", "--seed", "11", "--alpha1", "0.05"});
  REQUIRE(code == 0);
  nlohmann::json st = nlohmann::json::parse(read_file(dir / "out" / "structure.json"));
  REQUIRE(st["is_linear"].size() == 4);
  CHECK(st["is_linear"][0] == false);
  CHECK(st["is_linear"][1] == false);
  CHECK(st["is_linear"][2] == true);
  CHECK(st["is_linear"][3] == true);
  nlohmann::json sel = nlohmann::json::parse(read_file(dir / "out" / "selection.json"));
  CHECK(sel["support"][0][3] == false);  // the padded zero coordinate
}
