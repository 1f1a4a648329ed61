#include "cels/ood.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cels/kernels.hpp"
#include "cels/rng.hpp"

namespace cels {

namespace {

constexpr double kEulerGamma = 0.5772156649015329;
constexpr double kDistFloor = 1e-12;

// Average path length of an unsuccessful BST search over n points; the
// standard isolation-forest adjustment (harmonic number approximated by
// ln + Euler-Mascheroni).
double avg_path(int n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double h = std::log(n - 1.0) + kEulerGamma;
  return 2.0 * h - 2.0 * (n - 1.0) / n;
}

// Empirical upper quantile: sorted ascending, index floor(q*n), clipped.
double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const std::size_t idx = std::min(
      values.size() - 1, static_cast<std::size_t>(q * values.size()));
  return values[idx];
}

double floored_dist(const std::vector<double>& a, const std::vector<double>& b) {
  const double d =
      std::sqrt(kern::ops().l2sq_dist(a.data(), b.data(), a.size()));
  return std::max(d, kDistFloor);
}

}  // namespace

std::vector<std::vector<double>> to_points(const LabeledDataset& ds) {
  std::vector<std::vector<double>> out;
  out.reserve(ds.size());
  for (const auto& ts : ds.series) out.push_back(ts.values);
  return out;
}

// ---------------------------------------------------------------------------
// Isolation forest
// ---------------------------------------------------------------------------

IsolationForest IsolationForest::fit(
    const std::vector<std::vector<double>>& points,
    const IsoForestParams& params) {
  const int n = static_cast<int>(points.size());
  if (n < 2) throw std::invalid_argument("isolation forest needs >= 2 points");
  if (params.num_trees < 1) throw std::invalid_argument("num_trees must be >= 1");
  if (!(params.contamination > 0.0 && params.contamination < 1.0))
    throw std::invalid_argument("contamination must be in (0,1)");

  IsolationForest f;
  f.dim_ = points[0].size();
  for (const auto& p : points)
    if (p.size() != f.dim_)
      throw std::invalid_argument("inconsistent point dimensions");
  f.psi_ = std::min(params.subsample, n);
  if (f.psi_ < 2) throw std::invalid_argument("subsample must be >= 2");
  const int height_limit =
      static_cast<int>(std::ceil(std::log2(static_cast<double>(f.psi_))));

  Rng rng(params.seed);
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);

  struct Builder {
    const std::vector<std::vector<double>>& pts;
    Rng& rng;
    int limit;
    std::vector<Node>& tree;

    int build(std::vector<int>& idx, int lo, int hi, int depth) {
      const int count = hi - lo;
      const int me = static_cast<int>(tree.size());
      tree.push_back(Node{});
      tree[me].size = count;
      if (depth >= limit || count <= 1) return me;

      // Coordinates with spread; degenerate nodes become external.
      const std::size_t dim = pts[idx[lo]].size();
      std::vector<int> usable;
      for (std::size_t d = 0; d < dim; ++d) {
        double mn = pts[idx[lo]][d], mx = mn;
        for (int i = lo + 1; i < hi; ++i) {
          mn = std::min(mn, pts[idx[i]][d]);
          mx = std::max(mx, pts[idx[i]][d]);
        }
        if (mx > mn) usable.push_back(static_cast<int>(d));
      }
      if (usable.empty()) return me;

      const int d = usable[rng.below(usable.size())];
      double mn = pts[idx[lo]][d], mx = mn;
      for (int i = lo + 1; i < hi; ++i) {
        mn = std::min(mn, pts[idx[i]][d]);
        mx = std::max(mx, pts[idx[i]][d]);
      }
      const double split = rng.uniform(mn, mx);
      const auto mid_it =
          std::partition(idx.begin() + lo, idx.begin() + hi,
                         [&](int i) { return pts[i][d] < split; });
      const int mid = static_cast<int>(mid_it - idx.begin());
      if (mid == lo || mid == hi) return me;  // degenerate split

      tree[me].split_dim = d;
      tree[me].split_value = split;
      tree[me].left = build(idx, lo, mid, depth + 1);
      tree[me].right = build(idx, mid, hi, depth + 1);
      return me;
    }
  };

  f.trees_.resize(params.num_trees);
  for (int t = 0; t < params.num_trees; ++t) {
    // Draw psi distinct indices.
    for (int i = 0; i < f.psi_; ++i) {
      const int j = i + static_cast<int>(rng.below(n - i));
      std::swap(pool[i], pool[j]);
    }
    std::vector<int> idx(pool.begin(), pool.begin() + f.psi_);
    Builder b{points, rng, height_limit, f.trees_[t]};
    b.build(idx, 0, f.psi_, 0);
  }

  f.train_scores_.reserve(n);
  for (const auto& p : points) f.train_scores_.push_back(f.score(p));
  f.threshold_ = quantile(f.train_scores_, 1.0 - params.contamination);
  return f;
}

double IsolationForest::path_length(const std::vector<Node>& tree,
                                    const std::vector<double>& x) const {
  int node = 0;
  int depth = 0;
  while (tree[node].split_dim >= 0) {
    node = x[tree[node].split_dim] < tree[node].split_value ? tree[node].left
                                                            : tree[node].right;
    ++depth;
  }
  return depth + avg_path(tree[node].size);
}

double IsolationForest::score(const std::vector<double>& x) const {
  if (x.size() != dim_)
    throw std::invalid_argument("query dimension does not match training data");
  double total = 0.0;
  for (const auto& tree : trees_) total += path_length(tree, x);
  const double mean_path = total / trees_.size();
  return std::pow(2.0, -mean_path / avg_path(psi_));
}

// ---------------------------------------------------------------------------
// Local outlier factor
// ---------------------------------------------------------------------------

Lof Lof::fit(const std::vector<std::vector<double>>& points, int k) {
  const int n = static_cast<int>(points.size());
  if (n < 2) throw std::invalid_argument("LOF needs >= 2 points");
  if (k < 1) throw std::invalid_argument("k must be >= 1");

  Lof m;
  m.points_ = points;
  m.k_ = std::min(k, n - 1);

  // Pairwise floored distances.
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      d[i][j] = d[j][i] = floored_dist(points[i], points[j]);

  // k-distance and neighborhood of each reference point (self excluded).
  m.kdist_.resize(n);
  std::vector<std::vector<int>> nbr(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> row;
    row.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) row.push_back(d[i][j]);
    std::sort(row.begin(), row.end());
    m.kdist_[i] = row[m.k_ - 1];
    for (int j = 0; j < n; ++j)
      if (j != i && d[i][j] <= m.kdist_[i]) nbr[i].push_back(j);
  }

  m.lrd_.resize(n);
  for (int i = 0; i < n; ++i) {
    double reach_sum = 0.0;
    for (const int o : nbr[i]) reach_sum += std::max(m.kdist_[o], d[i][o]);
    m.lrd_[i] = static_cast<double>(nbr[i].size()) / reach_sum;
  }

  m.train_scores_.resize(n);
  for (int i = 0; i < n; ++i) {
    double ratio_sum = 0.0;
    for (const int o : nbr[i]) ratio_sum += m.lrd_[o];
    m.train_scores_[i] = ratio_sum / (nbr[i].size() * m.lrd_[i]);
  }

  m.threshold_ = std::max(1.5, quantile(m.train_scores_, 0.95));
  return m;
}

double Lof::score(const std::vector<double>& x) const {
  const int n = static_cast<int>(points_.size());
  if (x.size() != points_[0].size())
    throw std::invalid_argument("query dimension does not match training data");

  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) d[i] = floored_dist(x, points_[i]);

  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  const double kd = sorted[k_ - 1];

  double reach_sum = 0.0, lrd_sum = 0.0;
  int count = 0;
  for (int i = 0; i < n; ++i) {
    if (d[i] > kd) continue;
    reach_sum += std::max(kdist_[i], d[i]);
    lrd_sum += lrd_[i];
    ++count;
  }
  const double lrd_x = count / reach_sum;
  return lrd_sum / (count * lrd_x);
}

// ---------------------------------------------------------------------------

namespace {

template <typename Detector>
double ood_rate_impl(const Detector& det,
                     const std::vector<TimeSeries>& counterfactuals) {
  if (counterfactuals.empty())
    throw std::invalid_argument("ood_rate: empty counterfactual set");
  int flagged = 0;
  for (const auto& ts : counterfactuals)
    if (det.is_outlier(ts.values)) ++flagged;
  return static_cast<double>(flagged) / counterfactuals.size();
}

}  // namespace

double ood_rate(const IsolationForest& detector,
                const std::vector<TimeSeries>& counterfactuals) {
  return ood_rate_impl(detector, counterfactuals);
}

double ood_rate(const Lof& detector,
                const std::vector<TimeSeries>& counterfactuals) {
  return ood_rate_impl(detector, counterfactuals);
}

}  // namespace cels
