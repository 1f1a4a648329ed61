#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "cels/dataset.hpp"
#include "cels/metrics.hpp"
#include "support/synth.hpp"

using namespace cels;
using nlohmann::json;

namespace {

#ifndef CELS_CLI_PATH
#error "CELS_CLI_PATH must be defined"
#endif

const std::string kCli = CELS_CLI_PATH;
const std::string kDir = "/tmp/cels_cli_test";

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >" + kDir + "/stdout.txt 2>" +
                          kDir + "/stderr.txt";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool exists(const std::string& path) { return std::ifstream(path).good(); }

struct CliFixture {
  CliFixture() {
    std::system(("rm -rf " + kDir + " && mkdir -p " + kDir).c_str());
    const auto train = testing::make_separable(8, 16, 1.5, 0.3, 77, "clitest");
    const auto test = testing::make_separable(5, 16, 1.5, 0.3, 78, "clitest");
    save_ucr(train, kDir + "/train.tsv");
    save_ucr(test, kDir + "/test.tsv");
    REQUIRE(run("train --train-file " + kDir + "/train.tsv --out-dir " + kDir +
                "/train_out --desk-scale --epochs 80 --seed 5") == 0);
  }
};

const CliFixture& fixture() {
  static const CliFixture f;
  return f;
}

}  // namespace

TEST_CASE("train writes checkpoint, log and config echo; reruns are identical") {
  fixture();
  CHECK(exists(kDir + "/train_out/model.fcn"));
  CHECK(exists(kDir + "/train_out/run_config.json"));
  const std::string log = slurp(kDir + "/train_out/training_log.csv");
  CHECK(log.rfind("epoch,loss,accuracy\n", 0) == 0);

  REQUIRE(run("train --train-file " + kDir + "/train.tsv --out-dir " + kDir +
              "/train_out2 --desk-scale --epochs 80 --seed 5") == 0);
  CHECK(slurp(kDir + "/train_out/model.fcn") ==
        slurp(kDir + "/train_out2/model.fcn"));
  CHECK(slurp(kDir + "/train_out/training_log.csv") ==
        slurp(kDir + "/train_out2/training_log.csv"));
}

TEST_CASE("usage errors exit with code 2") {
  fixture();
  CHECK(run("train --train-file " + kDir + "/nope.tsv --out-dir " + kDir +
            "/x") == 2);
  const std::string err = slurp(kDir + "/stderr.txt");
  CHECK(err.find("nope.tsv") != std::string::npos);

  CHECK(run("explain --model " + kDir + "/train_out/model.fcn --train-file " +
            kDir + "/train.tsv --test-file " + kDir +
            "/test.tsv --method nonsense --out-dir " + kDir + "/x") == 2);
  CHECK(run("definitely-not-a-subcommand") == 2);
}

TEST_CASE("corrupt checkpoint is a runtime failure (exit 1)") {
  fixture();
  {
    std::ofstream f(kDir + "/broken.fcn", std::ios::binary);
    f << "FCN1 this is not a checkpoint";
  }
  CHECK(run("explain --model " + kDir + "/broken.fcn --train-file " + kDir +
            "/train.tsv --test-file " + kDir + "/test.tsv --out-dir " + kDir +
            "/x") == 1);
}

TEST_CASE("explain/evaluate/ood/plot pipeline produces valid artifacts") {
  fixture();
  REQUIRE(run("explain --model " + kDir + "/train_out/model.fcn --train-file " +
              kDir + "/train.tsv --test-file " + kDir +
              "/test.tsv --method info-cels --max-epochs 120 --seed 4 "
              "--out-dir " + kDir + "/info") == 0);
  const json records = json::parse(slurp(kDir + "/info/records.json"));
  CHECK(records.at("schema_version") == 1);
  CHECK(records.at("method") == "info-cels");
  CHECK(records.at("records").size() == 10);
  for (const auto& r : records.at("records")) {
    CHECK(r.at("target_probability").get<double>() >= 0.0);
    CHECK(r.at("target_probability").get<double>() <= 1.0);
    CHECK(r.at("epochs_run").get<int>() >= 1);
  }

  // cels mode with a high threshold produces strictly binary saliency files
  REQUIRE(run("explain --model " + kDir + "/train_out/model.fcn --train-file " +
              kDir + "/train.tsv --test-file " + kDir +
              "/test.tsv --method cels --threshold-k 0.99 --max-epochs 120 "
              "--seed 4 --out-dir " + kDir + "/cels") == 0);
  std::ifstream sal(kDir + "/cels/saliency.tsv");
  std::string tok;
  while (sal >> tok) CHECK((tok == "0" || tok == "1"));

  REQUIRE(run("evaluate --explain-dir " + kDir + "/info --out-dir " + kDir +
              "/eval") == 0);
  const auto rep = report_from_json(slurp(kDir + "/eval/report.json"));
  CHECK(rep.n == 10);
  CHECK(rep.method == "info-cels");
  const std::string csv = slurp(kDir + "/eval/report.csv");
  CHECK(csv.find("method,dataset,lambda,n,flip_rate") == 0);

  REQUIRE(run("ood --train-file " + kDir + "/train.tsv --cf-dir " + kDir +
              "/info --cf-dir " + kDir + "/cels --lof-k 4 --out-dir " + kDir +
              "/ood") == 0);
  const std::string ood_csv = slurp(kDir + "/ood/ood_report.csv");
  CHECK(ood_csv.find("method,if_rate,lof_rate\n") == 0);
  CHECK(ood_csv.find("info-cels,") != std::string::npos);
  CHECK(ood_csv.find("cels,") != std::string::npos);

  REQUIRE(run("plot --explain-dir " + kDir + "/info --index 2 --out-dir " +
              kDir + "/plots") == 0);
  const std::string svg = slurp(kDir + "/plots/instance_2.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("counterfactual") != std::string::npos);
}

TEST_CASE("sweep emits one row per lambda plus charts") {
  fixture();
  REQUIRE(run("sweep --model " + kDir + "/train_out/model.fcn --train-file " +
              kDir + "/train.tsv --test-file " + kDir +
              "/test.tsv --lambdas 0.25,0.5,1.0 --max-epochs 100 --lof-k 4 "
              "--seed 4 --out-dir " + kDir + "/sweep") == 0);
  const std::string csv = slurp(kDir + "/sweep/sweep.csv");
  int lines = 0;
  for (const char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 4);  // header + 3 rows
  CHECK(exists(kDir + "/sweep/sweep.svg"));
  CHECK(exists(kDir + "/sweep/sweep_l1.svg"));
  const json sj = json::parse(slurp(kDir + "/sweep/sweep.json"));
  CHECK(sj.at("points").size() == 3);

  REQUIRE(run("plot --sweep-json " + kDir + "/sweep/sweep.json --out-dir " +
              kDir + "/sweep_plots") == 0);
  CHECK(exists(kDir + "/sweep_plots/sweep.svg"));
}

TEST_CASE("wcf method runs end to end") {
  fixture();
  REQUIRE(run("explain --model " + kDir + "/train_out/model.fcn --train-file " +
              kDir + "/train.tsv --test-file " + kDir +
              "/test.tsv --method wcf --l1-weight 0 --max-epochs 150 --seed 4 "
              "--out-dir " + kDir + "/wcf") == 0);
  const json records = json::parse(slurp(kDir + "/wcf/records.json"));
  CHECK(records.at("method") == "wcf");
  for (const auto& r : records.at("records"))
    CHECK(r.at("nun_index").get<long long>() == -1);
  REQUIRE(run("evaluate --explain-dir " + kDir + "/wcf --out-dir " + kDir +
              "/wcf_eval") == 0);
}
