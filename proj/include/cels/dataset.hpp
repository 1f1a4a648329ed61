#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cels {

// One univariate series. `label` is the dense class id after remapping.
struct TimeSeries {
  std::vector<double> values;
  std::optional<int> label;

  std::size_t length() const { return values.size(); }
};

struct LabeledDataset {
  std::vector<TimeSeries> series;
  int num_classes = 0;
  int length = 0;
  std::string name;
  // Dense id -> raw label from the source file, in first-seen order.
  std::vector<long long> label_map;

  std::size_t size() const { return series.size(); }
  const TimeSeries& operator[](std::size_t i) const { return series[i]; }
};

enum class Delimiter { Auto, Tab, Comma };

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// UCR layout: one series per line, raw integer label first, then the T
// values. Tab is preferred when auto-detecting.
LabeledDataset load_ucr(const std::string& path, Delimiter delim = Delimiter::Auto,
                        const std::string& name = "");

// Re-serialize with the raw (inverse-mapped) labels, 9 significant digits.
void save_ucr(const LabeledDataset& ds, const std::string& path,
              Delimiter delim = Delimiter::Tab);

// Per-series z-normalization using the population standard deviation.
// Constant series become all-zeros.
LabeledDataset z_normalize(const LabeledDataset& ds);
std::vector<double> z_normalize(const std::vector<double>& values);

// n distinct members drawn without replacement, deterministic per seed and
// kept in original order. n >= size returns the dataset unchanged.
LabeledDataset subsample(const LabeledDataset& ds, std::size_t n,
                         std::uint64_t seed);
// The index selection behind subsample (ascending original indices).
std::vector<std::size_t> subsample_indices(std::size_t population, std::size_t n,
                                           std::uint64_t seed);

// Re-express a dataset's labels in another dataset's label map (used to align
// a test split with the train split the classifier saw). Throws if a raw
// label is absent from the map.
LabeledDataset relabel(const LabeledDataset& ds,
                       const std::vector<long long>& label_map);

// Rows of a UCR-layout file without the dataset invariants (counterfactual
// artifacts may carry a single class).
struct SeriesRow {
  long long raw_label = 0;
  std::vector<double> values;
};
std::vector<SeriesRow> load_series_rows(const std::string& path,
                                        Delimiter delim = Delimiter::Auto);

}  // namespace cels
