#pragma once

#include <cstdint>
#include <vector>

#include "cels/dataset.hpp"

namespace cels {

// Plausibility detectors, fit on training data only. A fitted detector is
// immutable and concurrently queryable.

struct IsoForestParams {
  int num_trees = 100;
  int subsample = 256;  // psi; clipped to the training size
  double contamination = 0.05;
  std::uint64_t seed = 0;
};

class IsolationForest {
 public:
  static IsolationForest fit(const std::vector<std::vector<double>>& points,
                             const IsoForestParams& params);

  // Anomaly score in (0,1): 2^(-E[path length]/c(psi)).
  double score(const std::vector<double>& x) const;
  bool is_outlier(const std::vector<double>& x) const {
    return score(x) > threshold_;
  }
  double threshold() const { return threshold_; }
  const std::vector<double>& train_scores() const { return train_scores_; }
  int psi() const { return psi_; }

 private:
  struct Node {
    int split_dim = -1;  // -1: external
    double split_value = 0.0;
    int left = -1, right = -1;
    int size = 0;
  };
  double path_length(const std::vector<Node>& tree,
                     const std::vector<double>& x) const;

  std::vector<std::vector<Node>> trees_;
  int psi_ = 0;
  std::size_t dim_ = 0;
  double threshold_ = 0.0;
  std::vector<double> train_scores_;
};

// Local outlier factor in novelty mode: queries are scored against the fixed
// reference set; reference lrds come from fit time (leave-self-out).
class Lof {
 public:
  // k is clipped to |points| - 1. Needs |points| >= 2.
  static Lof fit(const std::vector<std::vector<double>>& points, int k);

  double score(const std::vector<double>& x) const;
  bool is_outlier(const std::vector<double>& x) const {
    return score(x) > threshold_;
  }
  // max(1.5, 95th percentile of the leave-one-out training LOFs).
  double threshold() const { return threshold_; }
  const std::vector<double>& train_scores() const { return train_scores_; }
  int k() const { return k_; }

 private:
  std::vector<std::vector<double>> points_;
  std::vector<double> kdist_, lrd_;
  std::vector<double> train_scores_;
  double threshold_ = 1.5;
  int k_ = 0;
};

std::vector<std::vector<double>> to_points(const LabeledDataset& ds);

// Fraction of counterfactuals flagged out-of-distribution.
double ood_rate(const IsolationForest& detector,
                const std::vector<TimeSeries>& counterfactuals);
double ood_rate(const Lof& detector,
                const std::vector<TimeSeries>& counterfactuals);

}  // namespace cels
