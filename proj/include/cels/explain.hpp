#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cels/dataset.hpp"
#include "cels/fcn.hpp"
#include "cels/nun.hpp"

namespace cels {

// Per-timestep importance in [0,1], learned by gradient descent.
struct SaliencyMap {
  std::vector<double> theta;

  std::size_t size() const { return theta.size(); }
};

enum class ExplainMode { Cels, InfoCels };

struct CelsConfig {
  double lambda = 1.0;
  double learning_rate = 0.1;
  int max_epochs = 1000;
  ExplainMode mode = ExplainMode::InfoCels;
  double threshold_k = 0.5;  // CELS mode only
  int patience = 100;
  double min_delta = 1e-6;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool record_trace = false;  // keep per-epoch theta and loss (tests only)
};

struct CounterfactualResult {
  TimeSeries cf;                  // x', labeled with the model's prediction
  SaliencyMap saliency;           // final theta (binary in CELS mode)
  SaliencyMap pre_norm_saliency;  // theta before thresholding
  int original_class = 0;         // z = argmax f(x)
  int target_class = 0;           // z'
  double target_probability = 0.0;  // P(z' | x')
  bool flipped = false;             // argmax f(x') != z
  int epochs_run = 0;
  double final_loss = 0.0;  // total loss at the final pre-threshold theta
  long long nun_index = -1;
  double nun_distance = 0.0;
  std::string method;
  std::vector<double> loss_trace;                // record_trace only
  std::vector<std::vector<double>> theta_trace;  // record_trace only
};

// x'_t = x_t * (1 - theta_t) + nun_t * theta_t
std::vector<double> perturb(const std::vector<double>& x,
                            const std::vector<double>& nun,
                            const SaliencyMap& theta);

// 1 - P(z' | x')
double loss_max(const std::vector<double>& probs, int target);
// mean(theta)
double loss_budget(const SaliencyMap& theta);
// (1/T) * sum of squared neighbor differences (T-1 terms, divisor T)
double loss_treg(const SaliencyMap& theta);
double total_loss(const std::vector<double>& probs, const SaliencyMap& theta,
                  int target, double lambda);

// dL/dtheta via the chain rule through the perturbation and the frozen
// classifier's input gradient.
std::vector<double> grad_theta(const FcnModel& m, const std::vector<double>& x,
                               const std::vector<double>& nun,
                               const SaliencyMap& theta, int target,
                               double lambda);

// theta_t > k -> 1, else 0 (strict inequality).
SaliencyMap normalize_saliency(const SaliencyMap& theta, double k);

CounterfactualResult explain(const FcnModel& m, const TimeSeries& x,
                             const LabeledDataset& background,
                             const CelsConfig& cfg);

// Explains every member of `testset` with per-instance seeds derived from
// cfg.seed. `workers` threads fan out over instances; results are in dataset
// order and identical to a sequential run.
std::vector<CounterfactualResult> explain_many(const FcnModel& m,
                                               const LabeledDataset& testset,
                                               const LabeledDataset& background,
                                               const CelsConfig& cfg,
                                               int workers = 1);

}  // namespace cels
