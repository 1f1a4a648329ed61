#pragma once

#include "cels/dataset.hpp"
#include "cels/fcn.hpp"

namespace cels {

// Nearest unlike neighbor: the replacement series anchoring the perturbation.
struct NunResult {
  TimeSeries nun;
  int target_class = 0;
  double distance = 0.0;
  std::size_t index = 0;  // position in the background dataset
};

// Binary: the class other than the argmax. Multi-class: the second-highest
// probability, ties broken by smallest index.
int target_class_from_probs(const std::vector<double>& probs);
int target_class(const FcnModel& m, const TimeSeries& x);

// Member of `background` labeled `target` with minimum Euclidean distance to
// x; ties broken by dataset order. Throws if no member has that label.
NunResult find_nun(const TimeSeries& x, const LabeledDataset& background,
                   int target);

}  // namespace cels
