#include "cels/nun.hpp"

#include <cmath>
#include <limits>

#include "cels/kernels.hpp"

namespace cels {

int target_class_from_probs(const std::vector<double>& probs) {
  if (probs.size() < 2)
    throw std::invalid_argument("need >= 2 classes to pick a target");
  const int top = argmax_smallest(probs);
  int second = -1;
  for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
    if (i == top) continue;
    if (second < 0 || probs[i] > probs[second]) second = i;
  }
  return second;
}

int target_class(const FcnModel& m, const TimeSeries& x) {
  return target_class_from_probs(predict(m, x).probs);
}

NunResult find_nun(const TimeSeries& x, const LabeledDataset& background,
                   int target) {
  const std::size_t t_len = x.values.size();
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_idx = background.size();

  for (std::size_t i = 0; i < background.size(); ++i) {
    const TimeSeries& cand = background.series[i];
    if (!cand.label || *cand.label != target) continue;
    if (cand.values.size() != t_len)
      throw std::invalid_argument("background series length mismatch");
    const double d2 =
        kern::ops().l2sq_dist(x.values.data(), cand.values.data(), t_len);
    if (d2 < best) {
      best = d2;
      best_idx = i;
    }
  }
  if (best_idx == background.size())
    throw std::runtime_error("no background member of class " +
                             std::to_string(target));

  NunResult r;
  r.nun = background.series[best_idx];
  r.target_class = target;
  r.distance = std::sqrt(best);
  r.index = best_idx;
  return r;
}

}  // namespace cels
