#include "cels/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace cels {

namespace {

constexpr int kReportSchemaVersion = 1;

void check_pair(const std::vector<double>& x, const std::vector<double>& xp) {
  if (x.size() != xp.size())
    throw std::invalid_argument("series length mismatch");
}

std::vector<double> ranks_with_ties(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double flip_rate(const std::vector<CounterfactualResult>& results) {
  if (results.empty()) throw std::invalid_argument("flip_rate: empty result set");
  int flipped = 0;
  for (const auto& r : results)
    if (r.flipped) ++flipped;
  return static_cast<double>(flipped) / results.size();
}

double l1_distance(const std::vector<double>& x,
                   const std::vector<double>& xprime) {
  check_pair(x, xprime);
  double acc = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) acc += std::abs(x[t] - xprime[t]);
  return acc;
}

double sparsity(const std::vector<double>& x, const std::vector<double>& xprime,
                double epsilon) {
  check_pair(x, xprime);
  if (x.empty()) throw std::invalid_argument("sparsity: empty series");
  std::size_t changed = 0;
  for (std::size_t t = 0; t < x.size(); ++t)
    if (std::abs(x[t] - xprime[t]) > epsilon) ++changed;
  return 1.0 - static_cast<double>(changed) / static_cast<double>(x.size());
}

int segment_count(const std::vector<double>& x,
                  const std::vector<double>& xprime, double epsilon) {
  check_pair(x, xprime);
  int segments = 0;
  bool in_run = false;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const bool changed = std::abs(x[t] - xprime[t]) > epsilon;
    if (changed && !in_run) ++segments;
    in_run = changed;
  }
  return segments;
}

EvalReport evaluate(const std::vector<CounterfactualResult>& results,
                    const std::vector<TimeSeries>& originals, double epsilon,
                    const std::string& method, const std::string& dataset) {
  if (results.empty()) throw std::invalid_argument("evaluate: empty result set");
  if (results.size() != originals.size())
    throw std::invalid_argument("evaluate: results and originals differ in size");

  EvalReport rep;
  rep.method = method;
  rep.dataset = dataset;
  rep.n = static_cast<int>(results.size());
  rep.epsilon = epsilon;
  rep.flip_rate = flip_rate(results);

  double tp = 0.0, l1 = 0.0, sp = 0.0, seg = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& x = originals[i].values;
    const auto& cf = results[i].cf.values;
    tp += results[i].target_probability;
    l1 += l1_distance(x, cf);
    sp += sparsity(x, cf, epsilon);
    seg += segment_count(x, cf, epsilon);
  }
  const double n = static_cast<double>(results.size());
  rep.mean_target_probability = tp / n;
  rep.mean_l1 = l1 / n;
  rep.mean_sparsity = sp / n;
  rep.mean_segments = seg / n;
  return rep;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["method"] = r.method;
  j["dataset"] = r.dataset;
  j["n"] = r.n;
  j["flip_rate"] = r.flip_rate;
  j["mean_target_probability"] = r.mean_target_probability;
  j["mean_l1"] = r.mean_l1;
  j["mean_sparsity"] = r.mean_sparsity;
  j["mean_segments"] = r.mean_segments;
  j["epsilon"] = r.epsilon;
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("schema_version").get<int>() != kReportSchemaVersion)
    throw std::runtime_error("unsupported report schema_version");
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.n = j.at("n").get<int>();
  r.flip_rate = j.at("flip_rate").get<double>();
  r.mean_target_probability = j.at("mean_target_probability").get<double>();
  r.mean_l1 = j.at("mean_l1").get<double>();
  r.mean_sparsity = j.at("mean_sparsity").get<double>();
  r.mean_segments = j.at("mean_segments").get<double>();
  r.epsilon = j.at("epsilon").get<double>();
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length series");
  const std::vector<double> ra = ranks_with_ties(a);
  const std::vector<double> rb = ranks_with_ties(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0)
    throw std::invalid_argument("spearman: constant input");
  return cov / std::sqrt(va * vb);
}

std::vector<SweepPoint> lambda_sweep(const FcnModel& m,
                                     const LabeledDataset& testset,
                                     const LabeledDataset& background,
                                     const std::vector<double>& lambdas,
                                     const CelsConfig& base,
                                     const SweepOptions& opts) {
  if (lambdas.empty()) throw std::invalid_argument("lambda_sweep: empty grid");
  for (const double l : lambdas)
    if (l < 0.0) throw std::invalid_argument("lambda must be >= 0");

  const auto train_points = to_points(background);
  const IsolationForest iforest = IsolationForest::fit(train_points, opts.iforest);
  const Lof lof = Lof::fit(train_points, opts.lof_k);

  std::vector<SweepPoint> out;
  out.reserve(lambdas.size());
  for (const double lambda : lambdas) {
    CelsConfig cfg = base;
    cfg.lambda = lambda;
    cfg.mode = ExplainMode::InfoCels;
    const auto results =
        explain_many(m, testset, background, cfg, opts.workers);

    SweepPoint pt;
    pt.lambda = lambda;
    pt.report =
        evaluate(results, testset.series, opts.epsilon, "info-cels", testset.name);
    std::vector<TimeSeries> cfs;
    cfs.reserve(results.size());
    for (const auto& r : results) cfs.push_back(r.cf);
    pt.ood.if_rate = ood_rate(iforest, cfs);
    pt.ood.lof_rate = ood_rate(lof, cfs);
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace cels
