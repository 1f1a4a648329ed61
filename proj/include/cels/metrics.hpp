#pragma once

#include <string>
#include <vector>

#include "cels/dataset.hpp"
#include "cels/explain.hpp"
#include "cels/ood.hpp"

namespace cels {

// Validity/proximity/sparsity/contiguity metrics over a counterfactual set.

double flip_rate(const std::vector<CounterfactualResult>& results);
double l1_distance(const std::vector<double>& x,
                   const std::vector<double>& xprime);
// Fraction of timesteps left unchanged: 1 - #{t : |x_t - x'_t| > eps} / T.
double sparsity(const std::vector<double>& x, const std::vector<double>& xprime,
                double epsilon);
// Maximal runs of consecutive changed points.
int segment_count(const std::vector<double>& x,
                  const std::vector<double>& xprime, double epsilon);

struct EvalReport {
  std::string method;
  std::string dataset;
  int n = 0;
  double flip_rate = 0.0;
  double mean_target_probability = 0.0;
  double mean_l1 = 0.0;
  double mean_sparsity = 0.0;
  double mean_segments = 0.0;
  double epsilon = 0.01;
};

EvalReport evaluate(const std::vector<CounterfactualResult>& results,
                    const std::vector<TimeSeries>& originals, double epsilon,
                    const std::string& method, const std::string& dataset);

// JSON round-trip (schema_version 1).
std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);

// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct OodRates {
  double if_rate = 0.0;
  double lof_rate = 0.0;
};

struct SweepPoint {
  double lambda = 0.0;
  EvalReport report;
  OodRates ood;
};

struct SweepOptions {
  IsoForestParams iforest;
  int lof_k = 20;
  double epsilon = 0.01;
  int workers = 1;
};

// Info-CELS across the lambda grid with otherwise identical config and
// per-instance seeds; detectors are fit once on the background set.
std::vector<SweepPoint> lambda_sweep(const FcnModel& m,
                                     const LabeledDataset& testset,
                                     const LabeledDataset& background,
                                     const std::vector<double>& lambdas,
                                     const CelsConfig& base,
                                     const SweepOptions& opts);

}  // namespace cels
