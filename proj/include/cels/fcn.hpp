#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cels/dataset.hpp"

namespace cels {

// Fully-convolutional classifier: conv blocks (same zero-padding, optional
// batch norm, ReLU) -> global average pooling over time -> dense -> softmax.

struct ConvBlockSpec {
  int filters = 0;
  int kernel = 0;
};

struct FcnArch {
  std::vector<ConvBlockSpec> blocks;
  bool batch_norm = true;

  // 128/256/128 filters, kernel widths 8/5/3, batch norm on.
  static FcnArch full();
  // 32/64/32 filters, batch norm off; fast enough for tests.
  static FcnArch desk();
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 500;
  int batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  bool desk_scale = false;
};

struct ConvBlock {
  int in_channels = 0;
  int filters = 0;
  int kernel = 0;
  std::vector<float> w;  // [filters][in_channels][kernel]
  std::vector<float> b;  // [filters]
  bool bn = false;
  std::vector<float> gamma, beta, run_mean, run_var;  // [filters]
};

struct FcnModel {
  int input_len = 0;
  int num_classes = 0;
  bool batch_norm = false;
  std::vector<ConvBlock> blocks;
  std::vector<float> dense_w;  // [num_classes][last_filters]
  std::vector<float> dense_b;  // [num_classes]

  int last_filters() const { return blocks.empty() ? 0 : blocks.back().filters; }
  std::string describe() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  FcnModel model;
  std::vector<EpochStats> history;
  double final_accuracy = 0.0;  // inference-mode accuracy of the saved model
};

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seeded Glorot-uniform initialization; biases zero, BN at identity.
FcnModel init_model(int input_len, int num_classes, const FcnArch& arch,
                    std::uint64_t seed);

// ADAM + categorical cross-entropy. Deterministic given the seed. Throws
// TrainError naming the epoch if the loss diverges to NaN.
TrainResult train(const LabeledDataset& ds, const TrainConfig& cfg);
// Same, with an explicit architecture (cfg.desk_scale is ignored).
TrainResult train(const LabeledDataset& ds, const TrainConfig& cfg,
                  const FcnArch& arch);

struct Prediction {
  std::vector<double> probs;
  int label = 0;  // argmax, smallest index on ties
};

Prediction predict(const FcnModel& m, const TimeSeries& x);

// d P(class_id | x) / dx_t for every t, by exact reverse-mode through
// softmax, dense, pooling and conv layers (batch norm in inference mode).
std::vector<double> input_gradient(const FcnModel& m, const TimeSeries& x,
                                   int class_id);

// Checkpoint: magic "FCN1", u16 version (little-endian), textual architecture
// header terminated by a blank line, then f32 little-endian tensors in
// declaration order. Round-trips bit-exactly.
void save_model(const FcnModel& m, const std::string& path);
FcnModel load_model(const std::string& path);

// Reusable forward/backward scratch for one model. Not thread-safe; create
// one per thread. The model itself is immutable and may be shared.
class FcnRunner {
 public:
  explicit FcnRunner(const FcnModel& m);

  // Inference-mode forward; returns the class probabilities.
  const std::vector<double>& forward(const double* x);
  const std::vector<double>& probs() const { return probs_; }

  // d P(class_id | x) / dx for the series passed to the last forward().
  void prob_input_gradient(int class_id, double* dx);

 private:
  const FcnModel* model_;
  std::vector<std::vector<double>> pre_act_;   // per block, pre-ReLU [F][T]
  std::vector<std::vector<double>> post_act_;  // per block, post-ReLU [F][T]
  std::vector<double> input_;                  // [1][T]
  std::vector<double> gap_;
  std::vector<double> logits_;
  std::vector<double> probs_;
  std::vector<double> pad_buf_, grad_a_, grad_b_, dpad_;
};

int argmax_smallest(const std::vector<double>& v);

namespace detail {

// Test hook: one training-mode forward/backward over the full set, with the
// parameters optionally shifted by `param_delta` (flattened declaration
// order: per block w, b[, gamma, beta], then dense w, b). Lets tests check
// the analytic parameter gradients against finite differences of the loss,
// including through batch statistics.
struct GradProbe {
  double loss = 0.0;
  std::vector<double> grads;
  std::size_t param_count = 0;
};
GradProbe training_grad_probe(const LabeledDataset& ds, const FcnArch& arch,
                              std::uint64_t seed,
                              const std::vector<double>& param_delta = {});

}  // namespace detail

}  // namespace cels
