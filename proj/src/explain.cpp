#include "cels/explain.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "cels/kernels.hpp"
#include "cels/rng.hpp"

namespace cels {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    throw std::invalid_argument("length mismatch: " + std::to_string(a) +
                                " vs " + std::to_string(b));
}

// Adds dTReg/dtheta; endpoints use only their existing neighbor.
void add_treg_grad(const double* th, std::size_t t_len, double* g) {
  if (t_len < 2) return;
  const double scale = 2.0 / static_cast<double>(t_len);
  g[0] += scale * (th[0] - th[1]);
  for (std::size_t t = 1; t + 1 < t_len; ++t)
    g[t] += scale * ((th[t] - th[t - 1]) + (th[t] - th[t + 1]));
  g[t_len - 1] += scale * (th[t_len - 1] - th[t_len - 2]);
}

void check_probs_finite(const std::vector<double>& probs) {
  for (const double p : probs)
    if (!std::isfinite(p))
      throw std::runtime_error("classifier produced a non-finite probability");
}

}  // namespace

std::vector<double> perturb(const std::vector<double>& x,
                            const std::vector<double>& nun,
                            const SaliencyMap& theta) {
  check_lengths(x.size(), nun.size());
  check_lengths(x.size(), theta.theta.size());
  std::vector<double> out(x.size());
  kern::ops().lerp_blend(x.data(), nun.data(), theta.theta.data(), out.data(),
                         x.size());
  return out;
}

double loss_max(const std::vector<double>& probs, int target) {
  if (target < 0 || target >= static_cast<int>(probs.size()))
    throw std::invalid_argument("target class out of range");
  return 1.0 - probs[target];
}

double loss_budget(const SaliencyMap& theta) {
  const std::size_t t_len = theta.theta.size();
  return kern::ops().sum(theta.theta.data(), t_len) / static_cast<double>(t_len);
}

double loss_treg(const SaliencyMap& theta) {
  const std::size_t t_len = theta.theta.size();
  double acc = 0.0;
  for (std::size_t t = 0; t + 1 < t_len; ++t) {
    const double d = theta.theta[t] - theta.theta[t + 1];
    acc += d * d;
  }
  return acc / static_cast<double>(t_len);
}

double total_loss(const std::vector<double>& probs, const SaliencyMap& theta,
                  int target, double lambda) {
  return lambda * loss_max(probs, target) + loss_budget(theta) +
         loss_treg(theta);
}

std::vector<double> grad_theta(const FcnModel& m, const std::vector<double>& x,
                               const std::vector<double>& nun,
                               const SaliencyMap& theta, int target,
                               double lambda) {
  check_lengths(x.size(), nun.size());
  check_lengths(x.size(), theta.theta.size());
  const std::size_t t_len = x.size();

  const std::vector<double> xp = perturb(x, nun, theta);
  FcnRunner runner(m);
  runner.forward(xp.data());
  std::vector<double> dprob(t_len);
  runner.prob_input_gradient(target, dprob.data());

  std::vector<double> g(t_len);
  const double budget_term = 1.0 / static_cast<double>(t_len);
  for (std::size_t t = 0; t < t_len; ++t)
    g[t] = lambda * (-dprob[t]) * (nun[t] - x[t]) + budget_term;
  add_treg_grad(theta.theta.data(), t_len, g.data());
  return g;
}

SaliencyMap normalize_saliency(const SaliencyMap& theta, double k) {
  if (!(k > 0.0 && k < 1.0))
    throw std::invalid_argument("threshold k must be in (0,1)");
  SaliencyMap out;
  out.theta.resize(theta.theta.size());
  for (std::size_t t = 0; t < theta.theta.size(); ++t)
    out.theta[t] = theta.theta[t] > k ? 1.0 : 0.0;
  return out;
}

CounterfactualResult explain(const FcnModel& m, const TimeSeries& x,
                             const LabeledDataset& background,
                             const CelsConfig& cfg) {
  if (static_cast<int>(x.values.size()) != m.input_len)
    throw std::invalid_argument("series length does not match model");
  if (!(cfg.learning_rate > 0.0))
    throw std::invalid_argument("learning rate must be > 0");
  if (cfg.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (cfg.mode == ExplainMode::Cels && !(cfg.threshold_k > 0.0 && cfg.threshold_k < 1.0))
    throw std::invalid_argument("threshold k must be in (0,1)");

  const std::size_t t_len = x.values.size();
  const auto& K = kern::ops();
  FcnRunner runner(m);

  const std::vector<double> probs0 = runner.forward(x.values.data());
  check_probs_finite(probs0);
  const int z = argmax_smallest(probs0);
  const int target = target_class_from_probs(probs0);
  const NunResult nun = find_nun(x, background, target);

  Rng rng(cfg.seed);
  SaliencyMap theta;
  theta.theta.resize(t_len);
  for (auto& v : theta.theta) v = rng.uniform();

  CounterfactualResult res;
  res.original_class = z;
  res.target_class = target;
  res.nun_index = static_cast<long long>(nun.index);
  res.nun_distance = nun.distance;
  res.method = cfg.mode == ExplainMode::Cels ? "cels" : "info-cels";
  if (cfg.record_trace) res.theta_trace.push_back(theta.theta);

  std::vector<double> adam_m(t_len, 0.0), adam_v(t_len, 0.0);
  std::vector<double> xp(t_len), grad(t_len), dprob(t_len);
  const double budget_term = 1.0 / static_cast<double>(t_len);

  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  int step = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    res.epochs_run = epoch;
    K.lerp_blend(x.values.data(), nun.nun.values.data(), theta.theta.data(),
                 xp.data(), t_len);
    const std::vector<double>& probs = runner.forward(xp.data());
    check_probs_finite(probs);
    const double loss = total_loss(probs, theta, target, cfg.lambda);
    if (cfg.record_trace) res.loss_trace.push_back(loss);

    if (loss < best - cfg.min_delta) {
      best = loss;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }

    runner.prob_input_gradient(target, dprob.data());
    for (std::size_t t = 0; t < t_len; ++t)
      grad[t] = cfg.lambda * (-dprob[t]) * (nun.nun.values[t] - x.values[t]) +
                budget_term;
    add_treg_grad(theta.theta.data(), t_len, grad.data());

    ++step;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, step);
    K.adam_step(theta.theta.data(), adam_m.data(), adam_v.data(), grad.data(),
                cfg.learning_rate, bc1, bc2, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps, t_len);
    K.clamp01(theta.theta.data(), t_len);
    if (cfg.record_trace) res.theta_trace.push_back(theta.theta);
  }

  res.pre_norm_saliency = theta;
  // Loss at the converged (pre-threshold) saliency map.
  K.lerp_blend(x.values.data(), nun.nun.values.data(), theta.theta.data(),
               xp.data(), t_len);
  {
    const std::vector<double>& probs = runner.forward(xp.data());
    check_probs_finite(probs);
    res.final_loss = total_loss(probs, theta, target, cfg.lambda);
  }

  if (cfg.mode == ExplainMode::Cels) {
    theta = normalize_saliency(theta, cfg.threshold_k);
    K.lerp_blend(x.values.data(), nun.nun.values.data(), theta.theta.data(),
                 xp.data(), t_len);
    runner.forward(xp.data());
    check_probs_finite(runner.probs());
  }
  res.saliency = theta;
  res.cf.values = xp;
  const int cf_label = argmax_smallest(runner.probs());
  res.cf.label = cf_label;
  res.flipped = cf_label != z;
  res.target_probability = runner.probs()[target];
  return res;
}

std::vector<CounterfactualResult> explain_many(const FcnModel& m,
                                               const LabeledDataset& testset,
                                               const LabeledDataset& background,
                                               const CelsConfig& cfg,
                                               int workers) {
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
        CelsConfig local = cfg;
        local.seed = derive_seed(cfg.seed, i);
        results[i] = explain(m, testset.series[i], background, local);
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
