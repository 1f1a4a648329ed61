#pragma once

#include <cstdint>

#include "cels/explain.hpp"

namespace cels {

// Wachter-style gradient baseline: perturbs x' directly under
// L = (1 - P(z'|x'))^2 + l1_weight * sum |x_t - x'_t|.
struct WcfConfig {
  double learning_rate = 0.1;
  int max_epochs = 1000;
  double l1_weight = 0.1;
  int patience = 100;
  double min_delta = 1e-6;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool record_trace = false;
};

double wcf_loss(const FcnModel& m, const std::vector<double>& x,
                const std::vector<double>& xprime, int target, double beta);

// dL/dx'; the L1 subgradient is 0 at exact equality.
std::vector<double> wcf_grad(const FcnModel& m, const std::vector<double>& x,
                             const std::vector<double>& xprime, int target,
                             double beta);

CounterfactualResult explain_wcf(const FcnModel& m, const TimeSeries& x,
                                 const LabeledDataset& background,
                                 const WcfConfig& cfg);

std::vector<CounterfactualResult> explain_wcf_many(
    const FcnModel& m, const LabeledDataset& testset,
    const LabeledDataset& background, const WcfConfig& cfg, int workers = 1);

}  // namespace cels
