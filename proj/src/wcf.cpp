#include "cels/wcf.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "cels/kernels.hpp"
#include "cels/rng.hpp"

namespace cels {

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_same_len(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("length mismatch");
}

}  // namespace

double wcf_loss(const FcnModel& m, const std::vector<double>& x,
                const std::vector<double>& xprime, int target, double beta) {
  check_same_len(x.size(), xprime.size());
  FcnRunner runner(m);
  const auto& probs = runner.forward(xprime.data());
  const double shortfall = 1.0 - probs[target];
  const double l1 = kern::ops().l1_dist(x.data(), xprime.data(), x.size());
  return shortfall * shortfall + beta * l1;
}

std::vector<double> wcf_grad(const FcnModel& m, const std::vector<double>& x,
                             const std::vector<double>& xprime, int target,
                             double beta) {
  check_same_len(x.size(), xprime.size());
  FcnRunner runner(m);
  const auto& probs = runner.forward(xprime.data());
  const double shortfall = 1.0 - probs[target];
  std::vector<double> g(x.size());
  runner.prob_input_gradient(target, g.data());
  for (std::size_t t = 0; t < x.size(); ++t)
    g[t] = -2.0 * shortfall * g[t] + beta * sign0(xprime[t] - x[t]);
  return g;
}

CounterfactualResult explain_wcf(const FcnModel& m, const TimeSeries& x,
                                 const LabeledDataset& /*background*/,
                                 const WcfConfig& cfg) {
  if (static_cast<int>(x.values.size()) != m.input_len)
    throw std::invalid_argument("series length does not match model");
  if (!(cfg.learning_rate > 0.0))
    throw std::invalid_argument("learning rate must be > 0");
  if (cfg.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (cfg.l1_weight < 0.0) throw std::invalid_argument("l1_weight must be >= 0");

  const std::size_t t_len = x.values.size();
  const auto& K = kern::ops();
  FcnRunner runner(m);

  const std::vector<double> probs0 = runner.forward(x.values.data());
  const int z = argmax_smallest(probs0);
  const int target = target_class_from_probs(probs0);

  std::vector<double> xp = x.values;  // initialized at x
  std::vector<double> adam_m(t_len, 0.0), adam_v(t_len, 0.0), grad(t_len),
      dprob(t_len);

  CounterfactualResult res;
  res.original_class = z;
  res.target_class = target;
  res.method = "wcf";

  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  int step = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    res.epochs_run = epoch;
    const std::vector<double>& probs = runner.forward(xp.data());
    for (const double p : probs)
      if (!std::isfinite(p))
        throw std::runtime_error("classifier produced a non-finite probability");
    const double shortfall = 1.0 - probs[target];
    const double loss =
        shortfall * shortfall +
        cfg.l1_weight * K.l1_dist(x.values.data(), xp.data(), t_len);
    if (cfg.record_trace) res.loss_trace.push_back(loss);

    if (loss < best - cfg.min_delta) {
      best = loss;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }

    runner.prob_input_gradient(target, dprob.data());
    for (std::size_t t = 0; t < t_len; ++t)
      grad[t] = -2.0 * shortfall * dprob[t] +
                cfg.l1_weight * sign0(xp[t] - x.values[t]);

    ++step;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, step);
    K.adam_step(xp.data(), adam_m.data(), adam_v.data(), grad.data(),
                cfg.learning_rate, bc1, bc2, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps, t_len);
  }

  const std::vector<double>& probs = runner.forward(xp.data());
  const double shortfall = 1.0 - probs[target];
  res.final_loss = shortfall * shortfall +
                   cfg.l1_weight * K.l1_dist(x.values.data(), xp.data(), t_len);

  // Reporting-only saliency: |x' - x| rescaled to [0,1].
  SaliencyMap sal;
  sal.theta.resize(t_len);
  double mx = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    sal.theta[t] = std::abs(xp[t] - x.values[t]);
    mx = std::max(mx, sal.theta[t]);
  }
  if (mx > 0.0)
    for (auto& v : sal.theta) v /= mx;
  res.saliency = sal;
  res.pre_norm_saliency = sal;

  res.cf.values = xp;
  const int cf_label = argmax_smallest(probs);
  res.cf.label = cf_label;
  res.flipped = cf_label != z;
  res.target_probability = probs[target];
  return res;
}

std::vector<CounterfactualResult> explain_wcf_many(
    const FcnModel& m, const LabeledDataset& testset,
    const LabeledDataset& background, const WcfConfig& cfg, int workers) {
  const std::size_t n = testset.size();
  std::vector<CounterfactualResult> results(n);
  if (n == 0) return results;

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        WcfConfig local = cfg;
        local.seed = derive_seed(cfg.seed, i);
        results[i] = explain_wcf(m, testset.series[i], background, local);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  const int n_workers =
      std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

}  // namespace cels
