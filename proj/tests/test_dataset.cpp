#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "cels/dataset.hpp"

using namespace cels;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/cels_dataset_") + name;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  f << content;
}

}  // namespace

TEST_CASE("load_ucr parses a tab-separated line and remaps labels") {
  const auto path = temp_path("basic.tsv");
  write_file(path, "1\t0.5\t0.3\t-0.1\n2\t1.0\t2.0\t3.0\n");
  const auto ds = load_ucr(path);
  REQUIRE(ds.size() == 2);
  CHECK(ds.length == 3);
  CHECK(ds.num_classes == 2);
  CHECK(*ds.series[0].label == 0);  // raw "1" seen first
  CHECK(*ds.series[1].label == 1);
  CHECK(ds.label_map == std::vector<long long>{1, 2});
  CHECK(ds.series[0].values == std::vector<double>{0.5, 0.3, -0.1});
}

TEST_CASE("load_ucr auto-detects commas and honors forced delimiters") {
  const auto path = temp_path("comma.csv");
  write_file(path, "-1,0.5,0.25\n1,1.5,2.5\n");
  const auto ds = load_ucr(path);
  CHECK(ds.length == 2);
  CHECK(ds.label_map == std::vector<long long>{-1, 1});
  CHECK_THROWS_AS(load_ucr(path, Delimiter::Tab), ParseError);
}

TEST_CASE("load_ucr rejects malformed input") {
  const auto ragged = temp_path("ragged.tsv");
  write_file(ragged, "1\t1\t2\t3\n2\t1\t2\n");
  CHECK_THROWS_WITH_AS(load_ucr(ragged), doctest::Contains("line 2"), ParseError);

  const auto nonnum = temp_path("nonnum.tsv");
  write_file(nonnum, "1\t1\tfoo\t3\n2\t0\t0\t0\n");
  CHECK_THROWS_AS(load_ucr(nonnum), ParseError);

  const auto empty = temp_path("empty.tsv");
  write_file(empty, "");
  CHECK_THROWS_AS(load_ucr(empty), ParseError);

  const auto nan_file = temp_path("nan.tsv");
  write_file(nan_file, "1\tnan\t1\t2\n2\t0\t0\t0\n");
  CHECK_THROWS_AS(load_ucr(nan_file), ParseError);

  const auto one_class = temp_path("oneclass.tsv");
  write_file(one_class, "1\t1\t2\t3\n1\t4\t5\t6\n");
  CHECK_THROWS_AS(load_ucr(one_class), ParseError);
}

TEST_CASE("load then re-serialize then load is identity on values") {
  const auto path = temp_path("roundtrip_src.tsv");
  write_file(path, "3\t0.123456789\t-2.5\t1e-7\n7\t4\t5\t6\n3\t7\t8\t9.25\n");
  const auto ds = load_ucr(path);
  const auto path2 = temp_path("roundtrip_dst.tsv");
  save_ucr(ds, path2);
  const auto ds2 = load_ucr(path2);
  REQUIRE(ds2.size() == ds.size());
  CHECK(ds2.label_map == ds.label_map);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(*ds2.series[i].label == *ds.series[i].label);
    for (std::size_t t = 0; t < ds.series[i].values.size(); ++t)
      CHECK(ds2.series[i].values[t] ==
            doctest::Approx(ds.series[i].values[t]).epsilon(1e-9));
  }
}

TEST_CASE("z_normalize matches hand arithmetic and guards constant series") {
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.length = 3;
  ds.label_map = {0, 1};
  ds.series.push_back({{1.0, 2.0, 3.0}, 0});
  ds.series.push_back({{5.0, 5.0, 5.0}, 1});
  const auto z = z_normalize(ds);
  CHECK(z.series[0].values[0] == doctest::Approx(-1.2247448714).epsilon(1e-9));
  CHECK(z.series[0].values[1] == doctest::Approx(0.0));
  CHECK(z.series[0].values[2] == doctest::Approx(1.2247448714).epsilon(1e-9));
  CHECK(z.series[1].values == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("z_normalize output has mean 0 and sd 1, and is idempotent") {
  std::vector<double> v = {4.0, 9.0, -3.0, 2.2, 8.8, 0.5, -7.0, 3.3};
  const auto z = z_normalize(v);
  double mean = 0.0, var = 0.0;
  for (const double x : z) mean += x;
  mean /= z.size();
  for (const double x : z) var += (x - mean) * (x - mean);
  var /= z.size();
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);

  const auto zz = z_normalize(z);
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(std::abs(zz[i] - z[i]) < 1e-9);
}

TEST_CASE("subsample is deterministic, order preserving and validates n") {
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.length = 2;
  ds.label_map = {0, 1};
  for (int i = 0; i < 900; ++i)
    ds.series.push_back({{static_cast<double>(i), 0.0}, i % 2});

  const auto s1 = subsample(ds, 100, 7);
  const auto s2 = subsample(ds, 100, 7);
  REQUIRE(s1.size() == 100);
  for (std::size_t i = 0; i < 100; ++i)
    CHECK(s1.series[i].values == s2.series[i].values);
  // selection order preserved
  for (std::size_t i = 1; i < 100; ++i)
    CHECK(s1.series[i].values[0] > s1.series[i - 1].values[0]);

  const auto s3 = subsample(ds, 100, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < 100 && !any_diff; ++i)
    any_diff = s1.series[i].values != s3.series[i].values;
  CHECK(any_diff);

  const auto all = subsample(ds, 2000, 7);
  CHECK(all.size() == 900);
  CHECK_THROWS_AS(subsample(ds, 0, 7), std::invalid_argument);
}

TEST_CASE("relabel aligns a split with a reference label map") {
  LabeledDataset test;
  test.num_classes = 2;
  test.length = 2;
  test.label_map = {2, 1};  // raw 2 seen first in the test file
  test.series.push_back({{0.0, 0.0}, 0});
  test.series.push_back({{1.0, 1.0}, 1});

  const std::vector<long long> train_map = {1, 2};
  const auto aligned = relabel(test, train_map);
  CHECK(*aligned.series[0].label == 1);
  CHECK(*aligned.series[1].label == 0);
  CHECK_THROWS(relabel(test, {5, 6}));
}
