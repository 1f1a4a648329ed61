#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "cels/metrics.hpp"
#include "cels/rng.hpp"
#include "support/synth.hpp"

using namespace cels;

namespace {

CounterfactualResult make_result(bool flipped, double target_prob,
                                 std::vector<double> cf) {
  CounterfactualResult r;
  r.flipped = flipped;
  r.target_probability = target_prob;
  r.cf.values = std::move(cf);
  return r;
}

}  // namespace

TEST_CASE("flip_rate arithmetic") {
  std::vector<CounterfactualResult> rs;
  for (int i = 0; i < 1000; ++i) rs.push_back(make_result(i < 786, 0.5, {0.0}));
  CHECK(flip_rate(rs) == 0.786);

  std::vector<CounterfactualResult> all;
  for (int i = 0; i < 10; ++i) all.push_back(make_result(true, 0.9, {0.0}));
  CHECK(flip_rate(all) == 1.0);

  CHECK_THROWS_AS(flip_rate({}), std::invalid_argument);
}

TEST_CASE("l1 distance examples and symmetry") {
  CHECK(l1_distance({1.0, 2.0}, {1.0, 2.0}) == 0.0);
  CHECK(l1_distance({0.0, 0.0}, {1.0, -1.0}) == 2.0);
  Rng rng(4);
  const auto a = testing::random_vector(rng, 20, -2.0, 2.0);
  const auto b = testing::random_vector(rng, 20, -2.0, 2.0);
  CHECK(l1_distance(a, b) == l1_distance(b, a));
  CHECK(l1_distance(a, b) >= 0.0);
}

TEST_CASE("sparsity examples and monotonicity in epsilon") {
  const std::vector<double> x = {0.0, 0.0, 0.0, 0.0};
  CHECK(sparsity(x, x, 0.0) == 1.0);
  CHECK(sparsity(x, {1.0, 1.0, 1.0, 1.0}, 0.5) == 0.0);
  CHECK(sparsity(x, {1.0, 1.0, 0.0, 0.0}, 0.5) == 0.5);

  Rng rng(5);
  const auto a = testing::random_vector(rng, 30, -1.0, 1.0);
  const auto b = testing::random_vector(rng, 30, -1.0, 1.0);
  double prev = sparsity(a, b, 0.0);
  for (const double eps : {0.01, 0.1, 0.5, 1.0, 3.0}) {
    const double s = sparsity(a, b, eps);
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("segment_count counts maximal changed runs") {
  const std::vector<double> x = {0.0, 0.0, 0.0, 0.0};
  CHECK(segment_count(x, x, 0.0) == 0);
  CHECK(segment_count(x, {1.0, 1.0, 0.0, 1.0}, 0.5) == 2);
  CHECK(segment_count(x, {1.0, 1.0, 1.0, 1.0}, 0.5) == 1);

  // segment count is at most ceil(T/2)
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.below(21);
    const auto a = testing::random_vector(rng, n, -1.0, 1.0);
    std::vector<double> b = a;
    for (auto& v : b)
      if (rng.below(2)) v += 1.0;
    const int seg = segment_count(a, b, 0.5);
    CHECK(seg >= 0);
    CHECK(seg <= static_cast<int>((n + 1) / 2));
  }
}

TEST_CASE("binary saliency changed set matches theta support") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rng.below(30);
    const auto x = testing::random_vector(rng, n, -2.0, 2.0);
    auto nun = testing::random_vector(rng, n, -2.0, 2.0);
    // force a few exact matches so nun_t == x_t cases are covered
    for (std::size_t t = 0; t < n; ++t)
      if (rng.below(4) == 0) nun[t] = x[t];
    SaliencyMap th;
    th.theta.resize(n);
    for (auto& v : th.theta) v = rng.below(2) ? 1.0 : 0.0;

    const auto cf = perturb(x, nun, th);
    for (std::size_t t = 0; t < n; ++t) {
      const bool changed = cf[t] != x[t];
      const bool expected = th.theta[t] == 1.0 && nun[t] != x[t];
      CHECK(changed == expected);
    }
  }
}

TEST_CASE("evaluate aggregates and round-trips through JSON") {
  std::vector<TimeSeries> originals(2);
  originals[0].values = {0.0, 0.0};
  originals[1].values = {0.0, 0.0};
  std::vector<CounterfactualResult> rs;
  rs.push_back(make_result(true, 0.9, {1.0, 0.0}));   // L1 = 1
  rs.push_back(make_result(false, 0.4, {2.0, -1.0}));  // L1 = 3

  const auto rep = evaluate(rs, originals, 0.01, "info-cels", "unit");
  CHECK(rep.n == 2);
  CHECK(rep.flip_rate == 0.5);
  CHECK(rep.mean_l1 == 2.0);
  CHECK(rep.mean_target_probability == doctest::Approx(0.65));
  CHECK(rep.mean_sparsity == doctest::Approx((0.5 + 0.0) / 2.0));
  // {1,0}: one changed run; {2,-1}: one contiguous changed run
  CHECK(rep.mean_segments == doctest::Approx(1.0));

  const auto text = report_to_json(rep);
  const auto back = report_from_json(text);
  CHECK(back.method == rep.method);
  CHECK(back.dataset == rep.dataset);
  CHECK(back.n == rep.n);
  CHECK(back.flip_rate == rep.flip_rate);
  CHECK(back.mean_target_probability == rep.mean_target_probability);
  CHECK(back.mean_l1 == rep.mean_l1);
  CHECK(back.mean_sparsity == rep.mean_sparsity);
  CHECK(back.mean_segments == rep.mean_segments);
  CHECK(back.epsilon == rep.epsilon);

  CHECK_THROWS_AS(evaluate({}, {}, 0.01, "m", "d"), std::invalid_argument);
}

TEST_CASE("evaluate is permutation invariant") {
  Rng rng(8);
  std::vector<TimeSeries> originals;
  std::vector<CounterfactualResult> rs;
  for (int i = 0; i < 12; ++i) {
    TimeSeries x;
    x.values = testing::random_vector(rng, 10, -1.0, 1.0);
    originals.push_back(x);
    rs.push_back(make_result(rng.below(2) != 0, rng.uniform(),
                             testing::random_vector(rng, 10, -1.0, 1.0)));
  }
  const auto a = evaluate(rs, originals, 0.01, "m", "d");

  std::vector<std::size_t> perm(rs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (std::size_t i = 0; i + 1 < perm.size(); ++i)
    std::swap(perm[i], perm[i + rng.below(perm.size() - i)]);
  std::vector<TimeSeries> o2;
  std::vector<CounterfactualResult> r2;
  for (const auto i : perm) {
    o2.push_back(originals[i]);
    r2.push_back(rs[i]);
  }
  const auto b = evaluate(r2, o2, 0.01, "m", "d");
  CHECK(a.flip_rate == b.flip_rate);
  CHECK(a.mean_l1 == doctest::Approx(b.mean_l1).epsilon(1e-12));
  CHECK(a.mean_sparsity == doctest::Approx(b.mean_sparsity).epsilon(1e-12));
  CHECK(a.mean_segments == doctest::Approx(b.mean_segments).epsilon(1e-12));
  CHECK(a.mean_target_probability ==
        doctest::Approx(b.mean_target_probability).epsilon(1e-12));
}

TEST_CASE("spearman rank correlation") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  // monotone nonlinear mapping still gives 1
  CHECK(spearman({1, 2, 3, 4, 5}, {1, 8, 27, 64, 125}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("lambda_sweep: single lambda equals a direct evaluate run") {
  const auto train_set = testing::make_separable(8, 20, 1.5, 0.25, 90);
  TrainConfig tc;
  tc.desk_scale = true;
  tc.epochs = 120;
  tc.seed = 3;
  const auto model = train(train_set, tc).model;

  LabeledDataset testset = train_set;
  testset.series.resize(4);

  CelsConfig base;
  base.seed = 17;
  base.max_epochs = 150;

  SweepOptions opts;
  opts.iforest.seed = 5;
  opts.lof_k = 3;

  const auto pts = lambda_sweep(model, testset, train_set, {1.0}, base, opts);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].lambda == 1.0);

  CelsConfig direct = base;
  direct.lambda = 1.0;
  direct.mode = ExplainMode::InfoCels;
  const auto results = explain_many(model, testset, train_set, direct, 1);
  const auto rep = evaluate(results, testset.series, opts.epsilon, "info-cels",
                            testset.name);
  CHECK(pts[0].report.flip_rate == rep.flip_rate);
  CHECK(pts[0].report.mean_l1 == rep.mean_l1);
  CHECK(pts[0].report.mean_target_probability == rep.mean_target_probability);

  // full grid produces one report per lambda, in order
  const std::vector<double> grid = {0.2, 0.6, 1.0};
  const auto sweep = lambda_sweep(model, testset, train_set, grid, base, opts);
  REQUIRE(sweep.size() == 3);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(sweep[i].lambda == grid[i]);

  CHECK_THROWS_AS(lambda_sweep(model, testset, train_set, {}, base, opts),
                  std::invalid_argument);
  CHECK_THROWS_AS(lambda_sweep(model, testset, train_set, {-0.5}, base, opts),
                  std::invalid_argument);
}
