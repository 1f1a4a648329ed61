#pragma once

// Synthetic data builders shared by the unit and acceptance suites.

#include <cstdint>
#include <vector>

#include "cels/dataset.hpp"
#include "cels/rng.hpp"

namespace cels::testing {

// Two well-separated classes: class 0 around -offset, class 1 around +offset,
// plus Gaussian noise. Labels alternate so both classes are seen early.
inline LabeledDataset make_separable(int per_class, int t_len, double offset,
                                     double noise_sigma, std::uint64_t seed,
                                     const std::string& name = "synthetic") {
  Rng rng(seed);
  LabeledDataset ds;
  ds.name = name;
  ds.num_classes = 2;
  ds.length = t_len;
  ds.label_map = {0, 1};
  for (int i = 0; i < per_class; ++i) {
    for (int cls = 0; cls < 2; ++cls) {
      TimeSeries ts;
      ts.label = cls;
      ts.values.resize(t_len);
      const double mean = cls == 0 ? -offset : offset;
      for (int t = 0; t < t_len; ++t)
        ts.values[t] = rng.normal(mean, noise_sigma);
      ds.series.push_back(std::move(ts));
    }
  }
  return ds;
}

// Class signal confined to one contiguous segment: class 0 is noise around a
// flat baseline, class 1 adds `offset` on [seg_start, seg_start + seg_len).
inline LabeledDataset make_segment_separable(int per_class, int t_len,
                                             double offset, double noise_sigma,
                                             int seg_start, int seg_len,
                                             std::uint64_t seed,
                                             const std::string& name = "synthetic-segment") {
  Rng rng(seed);
  LabeledDataset ds;
  ds.name = name;
  ds.num_classes = 2;
  ds.length = t_len;
  ds.label_map = {0, 1};
  for (int i = 0; i < per_class; ++i) {
    for (int cls = 0; cls < 2; ++cls) {
      TimeSeries ts;
      ts.label = cls;
      ts.values.resize(t_len);
      for (int t = 0; t < t_len; ++t) {
        const bool in_seg = t >= seg_start && t < seg_start + seg_len;
        const double mean = cls == 1 && in_seg ? offset : 0.0;
        ts.values[t] = rng.normal(mean, noise_sigma);
      }
      ds.series.push_back(std::move(ts));
    }
  }
  return ds;
}

// Constant-valued toy set: class 0 all -1, class 1 all +1.
inline LabeledDataset make_constant_classes(int per_class, int t_len) {
  LabeledDataset ds;
  ds.name = "toy-constant";
  ds.num_classes = 2;
  ds.length = t_len;
  ds.label_map = {0, 1};
  for (int i = 0; i < per_class; ++i) {
    for (int cls = 0; cls < 2; ++cls) {
      TimeSeries ts;
      ts.label = cls;
      ts.values.assign(t_len, cls == 0 ? -1.0 : 1.0);
      ds.series.push_back(std::move(ts));
    }
  }
  return ds;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo,
                                         double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace cels::testing
