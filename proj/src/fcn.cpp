#include "cels/fcn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cels/kernels.hpp"
#include "cels/rng.hpp"

namespace cels {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;  // fraction of the batch statistic

int pad_left_of(int kernel) { return (kernel - 1) / 2; }

void pad_channel(const double* src, int t_len, int kernel, double* dst) {
  const int pl = pad_left_of(kernel);
  const int padded = t_len + kernel - 1;
  std::fill(dst, dst + padded, 0.0);
  std::copy(src, src + t_len, dst + pl);
}

// One-sample convolution, "same" zero padding. in: [cin][T], out: [f][T],
// xpad: scratch of cin*(T+k-1). Formulated as shifted axpys over the padded
// input so the whole inner loop is the axpy kernel.
template <typename WT>
void conv_forward_sample(const WT* w, const WT* b, int cin, int f, int k,
                         const double* in, int t_len, double* out,
                         double* xpad) {
  const auto& K = kern::ops();
  const int padded = t_len + k - 1;
  for (int c = 0; c < cin; ++c)
    pad_channel(in + c * t_len, t_len, k, xpad + c * padded);
  for (int fi = 0; fi < f; ++fi) {
    double* row = out + fi * t_len;
    std::fill(row, row + t_len, static_cast<double>(b[fi]));
    const WT* wf = w + fi * cin * k;
    for (int c = 0; c < cin; ++c) {
      const double* xp = xpad + c * padded;
      for (int kk = 0; kk < k; ++kk)
        K.axpy(static_cast<double>(wf[c * k + kk]), xp + kk, row, t_len);
    }
  }
}

// dx[c][t] from dout[f][t]; dpad: scratch of cin*(T+k-1).
template <typename WT>
void conv_backward_input(const WT* w, int cin, int f, int k,
                         const double* dout, int t_len, double* dx,
                         double* dpad) {
  const auto& K = kern::ops();
  const int padded = t_len + k - 1;
  const int pl = pad_left_of(k);
  std::fill(dpad, dpad + cin * padded, 0.0);
  for (int fi = 0; fi < f; ++fi) {
    const double* dr = dout + fi * t_len;
    const WT* wf = w + fi * cin * k;
    for (int c = 0; c < cin; ++c) {
      double* dp = dpad + c * padded;
      for (int kk = 0; kk < k; ++kk)
        K.axpy(static_cast<double>(wf[c * k + kk]), dr, dp + kk, t_len);
    }
  }
  for (int c = 0; c < cin; ++c)
    std::copy(dpad + c * padded + pl, dpad + c * padded + pl + t_len,
              dx + c * t_len);
}

// Accumulates dW/db for one sample given dout and the padded input.
void conv_param_grads(int cin, int f, int k, const double* dout,
                      const double* xpad, int t_len, double* gw, double* gb) {
  const auto& K = kern::ops();
  const int padded = t_len + k - 1;
  for (int fi = 0; fi < f; ++fi) {
    const double* dr = dout + fi * t_len;
    gb[fi] += K.sum(dr, t_len);
    double* gwf = gw + fi * cin * k;
    for (int c = 0; c < cin; ++c) {
      const double* xp = xpad + c * padded;
      for (int kk = 0; kk < k; ++kk)
        gwf[c * k + kk] += K.dot(dr, xp + kk, t_len);
    }
  }
}

void softmax(const double* logits, int n, double* probs) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    denom += probs[i];
  }
  for (int i = 0; i < n; ++i) probs[i] /= denom;
}

void check_model_input(const FcnModel& m, const TimeSeries& x) {
  if (static_cast<int>(x.values.size()) != m.input_len)
    throw std::invalid_argument(
        "series length " + std::to_string(x.values.size()) +
        " does not match model input length " + std::to_string(m.input_len));
}

}  // namespace

int argmax_smallest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

FcnArch FcnArch::full() {
  FcnArch a;
  a.blocks = {{128, 8}, {256, 5}, {128, 3}};
  a.batch_norm = true;
  return a;
}

FcnArch FcnArch::desk() {
  FcnArch a;
  a.blocks = {{32, 8}, {64, 5}, {32, 3}};
  a.batch_norm = false;
  return a;
}

std::string FcnModel::describe() const {
  std::ostringstream os;
  os << "fcn blocks=" << blocks.size() << " filters=";
  for (std::size_t i = 0; i < blocks.size(); ++i)
    os << (i ? "," : "") << blocks[i].filters;
  os << " kernels=";
  for (std::size_t i = 0; i < blocks.size(); ++i)
    os << (i ? "," : "") << blocks[i].kernel;
  os << " classes=" << num_classes << " input_len=" << input_len
     << " batch_norm=" << (batch_norm ? 1 : 0);
  return os.str();
}

FcnModel init_model(int input_len, int num_classes, const FcnArch& arch,
                    std::uint64_t seed) {
  if (input_len < 2) throw std::invalid_argument("input length must be >= 2");
  if (num_classes < 2) throw std::invalid_argument("need >= 2 classes");
  for (const auto& bs : arch.blocks)
    if (bs.kernel < 1 || bs.kernel > input_len)
      throw std::invalid_argument("kernel width must be in [1, input_len]");

  Rng rng(seed);
  FcnModel m;
  m.input_len = input_len;
  m.num_classes = num_classes;
  m.batch_norm = arch.batch_norm;

  int cin = 1;
  for (const auto& bs : arch.blocks) {
    ConvBlock blk;
    blk.in_channels = cin;
    blk.filters = bs.filters;
    blk.kernel = bs.kernel;
    const double bound =
        std::sqrt(6.0 / (cin * bs.kernel + bs.filters * bs.kernel));
    blk.w.resize(static_cast<std::size_t>(bs.filters) * cin * bs.kernel);
    for (auto& wv : blk.w)
      wv = static_cast<float>(rng.uniform(-bound, bound));
    blk.b.assign(bs.filters, 0.0f);
    blk.bn = arch.batch_norm;
    if (blk.bn) {
      blk.gamma.assign(bs.filters, 1.0f);
      blk.beta.assign(bs.filters, 0.0f);
      blk.run_mean.assign(bs.filters, 0.0f);
      blk.run_var.assign(bs.filters, 1.0f);
    }
    m.blocks.push_back(std::move(blk));
    cin = bs.filters;
  }

  // The dense head starts at zero so relabeling classes permutes the learned
  // outputs exactly; the conv stack carries the seeded Glorot init.
  m.dense_w.assign(static_cast<std::size_t>(num_classes) * cin, 0.0f);
  m.dense_b.assign(num_classes, 0.0f);
  return m;
}

// ---------------------------------------------------------------------------
// Inference runner
// ---------------------------------------------------------------------------

FcnRunner::FcnRunner(const FcnModel& m) : model_(&m) {
  const int t_len = m.input_len;
  pre_act_.resize(m.blocks.size());
  post_act_.resize(m.blocks.size());
  std::size_t max_pad = 0, max_ct = t_len;
  for (const auto& blk : m.blocks) {
    pre_act_[&blk - m.blocks.data()].resize(
        static_cast<std::size_t>(blk.filters) * t_len);
    post_act_[&blk - m.blocks.data()].resize(
        static_cast<std::size_t>(blk.filters) * t_len);
    max_pad = std::max(max_pad, static_cast<std::size_t>(blk.in_channels) *
                                    (t_len + blk.kernel - 1));
    max_ct = std::max(max_ct, static_cast<std::size_t>(blk.filters) * t_len);
    max_ct = std::max(max_ct, static_cast<std::size_t>(blk.in_channels) * t_len);
  }
  input_.resize(t_len);
  gap_.resize(m.last_filters());
  logits_.resize(m.num_classes);
  probs_.resize(m.num_classes);
  pad_buf_.resize(std::max<std::size_t>(max_pad, 1));
  dpad_.resize(std::max<std::size_t>(max_pad, 1));
  grad_a_.resize(max_ct);
  grad_b_.resize(max_ct);
}

const std::vector<double>& FcnRunner::forward(const double* x) {
  const FcnModel& m = *model_;
  const int t_len = m.input_len;
  const auto& K = kern::ops();
  std::copy(x, x + t_len, input_.begin());

  const double* cur = input_.data();
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const ConvBlock& blk = m.blocks[i];
    double* pre = pre_act_[i].data();
    conv_forward_sample(blk.w.data(), blk.b.data(), blk.in_channels,
                        blk.filters, blk.kernel, cur, t_len, pre,
                        pad_buf_.data());
    if (blk.bn) {
      // Inference-mode batch norm: a pure affine map per channel.
      for (int f = 0; f < blk.filters; ++f) {
        const double inv =
            1.0 / std::sqrt(static_cast<double>(blk.run_var[f]) + kBnEps);
        const double a = static_cast<double>(blk.gamma[f]) * inv;
        const double b = static_cast<double>(blk.beta[f]) -
                         a * static_cast<double>(blk.run_mean[f]);
        K.scale_shift(pre + f * t_len, a, b, pre + f * t_len, t_len);
      }
    }
    K.relu(pre, post_act_[i].data(), static_cast<std::size_t>(blk.filters) * t_len);
    cur = post_act_[i].data();
  }

  const int last_f = m.last_filters();
  for (int f = 0; f < last_f; ++f)
    gap_[f] = K.sum(cur + f * t_len, t_len) / t_len;

  for (int c = 0; c < m.num_classes; ++c) {
    double acc = static_cast<double>(m.dense_b[c]);
    const float* wr = m.dense_w.data() + static_cast<std::size_t>(c) * last_f;
    for (int f = 0; f < last_f; ++f) acc += static_cast<double>(wr[f]) * gap_[f];
    logits_[c] = acc;
  }
  softmax(logits_.data(), m.num_classes, probs_.data());
  return probs_;
}

void FcnRunner::prob_input_gradient(int class_id, double* dx) {
  const FcnModel& m = *model_;
  if (class_id < 0 || class_id >= m.num_classes)
    throw std::invalid_argument("class id out of range");
  const int t_len = m.input_len;
  const int last_f = m.last_filters();
  const auto& K = kern::ops();

  // d P(c|x) / d logits_j = p_c * (delta_cj - p_j)
  std::vector<double> dlogits(m.num_classes);
  const double pc = probs_[class_id];
  for (int j = 0; j < m.num_classes; ++j)
    dlogits[j] = pc * ((j == class_id ? 1.0 : 0.0) - probs_[j]);

  // Through the dense layer and GAP into the last block's activations.
  double* da = grad_a_.data();
  for (int f = 0; f < last_f; ++f) {
    double g = 0.0;
    for (int c = 0; c < m.num_classes; ++c)
      g += dlogits[c] *
           static_cast<double>(m.dense_w[static_cast<std::size_t>(c) * last_f + f]);
    const double per_step = g / t_len;
    std::fill(da + f * t_len, da + (f + 1) * t_len, per_step);
  }

  for (int i = static_cast<int>(m.blocks.size()) - 1; i >= 0; --i) {
    const ConvBlock& blk = m.blocks[i];
    const std::size_t n_elems = static_cast<std::size_t>(blk.filters) * t_len;
    // ReLU mask on the stored pre-activation.
    K.relu_backward(pre_act_[i].data(), da, da, n_elems);
    if (blk.bn) {
      for (int f = 0; f < blk.filters; ++f) {
        const double inv =
            1.0 / std::sqrt(static_cast<double>(blk.run_var[f]) + kBnEps);
        const double a = static_cast<double>(blk.gamma[f]) * inv;
        K.scale_shift(da + f * t_len, a, 0.0, da + f * t_len, t_len);
      }
    }
    double* dprev = i == 0 ? dx : grad_b_.data();
    conv_backward_input(blk.w.data(), blk.in_channels, blk.filters, blk.kernel,
                        da, t_len, dprev, dpad_.data());
    std::swap(grad_a_, grad_b_);
    da = grad_a_.data();
    if (i == 0) break;
  }
}

Prediction predict(const FcnModel& m, const TimeSeries& x) {
  check_model_input(m, x);
  FcnRunner runner(m);
  Prediction p;
  p.probs = runner.forward(x.values.data());
  p.label = argmax_smallest(p.probs);
  return p;
}

std::vector<double> input_gradient(const FcnModel& m, const TimeSeries& x,
                                   int class_id) {
  check_model_input(m, x);
  if (class_id < 0 || class_id >= m.num_classes)
    throw std::invalid_argument("class id out of range");
  FcnRunner runner(m);
  runner.forward(x.values.data());
  std::vector<double> dx(m.input_len);
  runner.prob_input_gradient(class_id, dx.data());
  return dx;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct PTensor {
  std::vector<double> v, g, m, a;
  void init(std::size_t n) {
    v.assign(n, 0.0);
    g = m = a = v;
  }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
  void adam(double lr, double bc1, double bc2, double b1, double b2,
            double eps) {
    kern::ops().adam_step(v.data(), m.data(), a.data(), g.data(), lr, bc1, bc2,
                          b1, b2, eps, v.size());
  }
};

struct TrainBlock {
  int cin = 0, f = 0, k = 0;
  bool bn = false;
  PTensor w, b, gamma, beta;
  std::vector<double> rmean, rvar;            // running stats
  std::vector<double> batch_mean, batch_inv;  // per-batch cache
};

struct Trainer {
  const LabeledDataset& ds;
  TrainConfig cfg;
  int t_len, n_classes, n_total;
  std::vector<TrainBlock> blocks;
  PTensor dense_w, dense_b;

  // Per-batch tensors, sized for the largest batch.
  std::vector<std::vector<double>> z, h, p;   // per block: [B][F][T]
  std::vector<double> input;                  // [B][1][T]
  std::vector<double> gap, logits, probs;     // [B][F*], [B][C]
  std::vector<double> ga, gb_buf, pad, dpad;  // grads + conv scratch

  Trainer(const LabeledDataset& d, const TrainConfig& c, const FcnModel& init)
      : ds(d), cfg(c) {
    t_len = ds.length;
    n_classes = ds.num_classes;
    n_total = static_cast<int>(ds.size());
    for (const auto& blk : init.blocks) {
      TrainBlock tb;
      tb.cin = blk.in_channels;
      tb.f = blk.filters;
      tb.k = blk.kernel;
      tb.bn = blk.bn;
      tb.w.init(blk.w.size());
      std::copy(blk.w.begin(), blk.w.end(), tb.w.v.begin());
      tb.b.init(blk.b.size());
      std::copy(blk.b.begin(), blk.b.end(), tb.b.v.begin());
      if (tb.bn) {
        tb.gamma.init(blk.filters);
        std::copy(blk.gamma.begin(), blk.gamma.end(), tb.gamma.v.begin());
        tb.beta.init(blk.filters);
        std::copy(blk.beta.begin(), blk.beta.end(), tb.beta.v.begin());
        tb.rmean.assign(blk.run_mean.begin(), blk.run_mean.end());
        tb.rvar.assign(blk.run_var.begin(), blk.run_var.end());
        tb.batch_mean.assign(blk.filters, 0.0);
        tb.batch_inv.assign(blk.filters, 0.0);
      }
      blocks.push_back(std::move(tb));
    }
    dense_w.init(init.dense_w.size());
    std::copy(init.dense_w.begin(), init.dense_w.end(), dense_w.v.begin());
    dense_b.init(init.dense_b.size());
    std::copy(init.dense_b.begin(), init.dense_b.end(), dense_b.v.begin());

    const int max_b = batch_capacity();
    z.resize(blocks.size());
    h.resize(blocks.size());
    p.resize(blocks.size());
    std::size_t max_ct = t_len, max_pad = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::size_t sz =
          static_cast<std::size_t>(max_b) * blocks[i].f * t_len;
      z[i].resize(sz);
      h[i].resize(sz);
      p[i].resize(sz);
      max_ct = std::max(max_ct, static_cast<std::size_t>(blocks[i].f) * t_len);
      max_pad = std::max(max_pad, static_cast<std::size_t>(blocks[i].cin) *
                                      (t_len + blocks[i].k - 1));
    }
    input.resize(static_cast<std::size_t>(max_b) * t_len);
    gap.resize(static_cast<std::size_t>(max_b) * blocks.back().f);
    logits.resize(static_cast<std::size_t>(max_b) * n_classes);
    probs.resize(static_cast<std::size_t>(max_b) * n_classes);
    ga.resize(static_cast<std::size_t>(max_b) * max_ct);
    gb_buf.resize(static_cast<std::size_t>(max_b) * max_ct);
    pad.resize(max_pad);
    dpad.resize(max_pad);
  }

  int batch_capacity() const {
    return cfg.batch_size <= 0 ? n_total : std::min(cfg.batch_size, n_total);
  }

  // Forward the batch in training mode; returns (loss, correct-count).
  std::pair<double, int> forward(const std::vector<int>& batch) {
    const auto& K = kern::ops();
    const int B = static_cast<int>(batch.size());
    const std::size_t ct = static_cast<std::size_t>(t_len);
    for (int n = 0; n < B; ++n)
      std::copy(ds.series[batch[n]].values.begin(),
                ds.series[batch[n]].values.end(), input.begin() + n * ct);

    const double* cur = input.data();
    int cur_ch = 1;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      TrainBlock& blk = blocks[i];
      const std::size_t stride = static_cast<std::size_t>(blk.f) * t_len;
      const std::size_t in_stride = static_cast<std::size_t>(cur_ch) * t_len;
      for (int n = 0; n < B; ++n)
        conv_forward_sample(blk.w.v.data(), blk.b.v.data(), blk.cin, blk.f,
                            blk.k, cur + n * in_stride, t_len,
                            z[i].data() + n * stride, pad.data());
      if (blk.bn) {
        const double m_count = static_cast<double>(B) * t_len;
        for (int f = 0; f < blk.f; ++f) {
          double s = 0.0, s2 = 0.0;
          for (int n = 0; n < B; ++n) {
            const double* row = z[i].data() + n * stride + f * ct;
            s += K.sum(row, t_len);
            s2 += K.sumsq(row, t_len);
          }
          const double mean = s / m_count;
          const double var = std::max(0.0, s2 / m_count - mean * mean);
          blk.batch_mean[f] = mean;
          blk.batch_inv[f] = 1.0 / std::sqrt(var + kBnEps);
          blk.rmean[f] = (1.0 - kBnMomentum) * blk.rmean[f] + kBnMomentum * mean;
          blk.rvar[f] = (1.0 - kBnMomentum) * blk.rvar[f] + kBnMomentum * var;
          const double a = blk.gamma.v[f] * blk.batch_inv[f];
          const double shift = blk.beta.v[f] - a * mean;
          for (int n = 0; n < B; ++n)
            K.scale_shift(z[i].data() + n * stride + f * ct, a, shift,
                          h[i].data() + n * stride + f * ct, t_len);
        }
      } else {
        std::copy(z[i].begin(), z[i].begin() + B * stride, h[i].begin());
      }
      K.relu(h[i].data(), p[i].data(), B * stride);
      cur = p[i].data();
      cur_ch = blk.f;
    }

    const int last_f = blocks.back().f;
    const std::size_t last_stride = static_cast<std::size_t>(last_f) * t_len;
    double loss = 0.0;
    int correct = 0;
    for (int n = 0; n < B; ++n) {
      for (int f = 0; f < last_f; ++f)
        gap[n * last_f + f] =
            K.sum(p.back().data() + n * last_stride + f * ct, t_len) / t_len;
      for (int c = 0; c < n_classes; ++c) {
        double acc = dense_b.v[c];
        const double* wr = dense_w.v.data() + static_cast<std::size_t>(c) * last_f;
        acc += K.dot(wr, gap.data() + n * last_f, last_f);
        logits[n * n_classes + c] = acc;
      }
      softmax(logits.data() + n * n_classes, n_classes,
              probs.data() + n * n_classes);
      const int y = *ds.series[batch[n]].label;
      loss -= std::log(probs[n * n_classes + y]);
      int am = 0;
      for (int c = 1; c < n_classes; ++c)
        if (probs[n * n_classes + c] > probs[n * n_classes + am]) am = c;
      if (am == y) ++correct;
    }
    return {loss / B, correct};
  }

  void backward(const std::vector<int>& batch) {
    const auto& K = kern::ops();
    const int B = static_cast<int>(batch.size());
    const std::size_t ct = static_cast<std::size_t>(t_len);
    const int last_f = blocks.back().f;

    // dlogits = (p - onehot) / B, reusing probs in place.
    for (int n = 0; n < B; ++n) {
      const int y = *ds.series[batch[n]].label;
      for (int c = 0; c < n_classes; ++c) {
        double& pp = probs[n * n_classes + c];
        pp = (pp - (c == y ? 1.0 : 0.0)) / B;
      }
    }

    for (int n = 0; n < B; ++n)
      for (int c = 0; c < n_classes; ++c) {
        const double dl = probs[n * n_classes + c];
        K.axpy(dl, gap.data() + n * last_f,
               dense_w.g.data() + static_cast<std::size_t>(c) * last_f, last_f);
        dense_b.g[c] += dl;
      }

    // dGAP -> last block activation grads.
    const std::size_t last_stride = static_cast<std::size_t>(last_f) * t_len;
    for (int n = 0; n < B; ++n)
      for (int f = 0; f < last_f; ++f) {
        double g = 0.0;
        for (int c = 0; c < n_classes; ++c)
          g += probs[n * n_classes + c] *
               dense_w.v[static_cast<std::size_t>(c) * last_f + f];
        double* row = ga.data() + n * last_stride + f * ct;
        std::fill(row, row + t_len, g / t_len);
      }

    for (int i = static_cast<int>(blocks.size()) - 1; i >= 0; --i) {
      TrainBlock& blk = blocks[i];
      const std::size_t stride = static_cast<std::size_t>(blk.f) * t_len;
      const double m_count = static_cast<double>(B) * t_len;
      // ga currently holds d(post-ReLU); mask through ReLU.
      K.relu_backward(h[i].data(), ga.data(), ga.data(), B * stride);
      if (blk.bn) {
        for (int f = 0; f < blk.f; ++f) {
          double dot_dz = 0.0, sum_d = 0.0;
          for (int n = 0; n < B; ++n) {
            const double* dr = ga.data() + n * stride + f * ct;
            const double* zr = z[i].data() + n * stride + f * ct;
            dot_dz += K.dot(dr, zr, t_len);
            sum_d += K.sum(dr, t_len);
          }
          const double mean = blk.batch_mean[f];
          const double inv = blk.batch_inv[f];
          const double gsum = inv * (dot_dz - mean * sum_d);  // sum dh*xhat
          blk.gamma.g[f] += gsum;
          blk.beta.g[f] += sum_d;
          const double gm = blk.gamma.v[f];
          const double c1 = gm * inv;
          const double c2 = -gm * inv * inv * gsum / m_count;
          const double c3 =
              -gm * inv * sum_d / m_count - c2 * mean;
          for (int n = 0; n < B; ++n) {
            double* dr = ga.data() + n * stride + f * ct;
            const double* zr = z[i].data() + n * stride + f * ct;
            // dz = c1*dh + c2*z + c3 (in place over dh)
            for (int t = 0; t < t_len; ++t)
              dr[t] = c1 * dr[t] + c2 * zr[t] + c3;
          }
        }
      }
      // Conv parameter grads + input grads per sample.
      const double* prev =
          i == 0 ? input.data() : p[static_cast<std::size_t>(i) - 1].data();
      const std::size_t prev_stride = static_cast<std::size_t>(blk.cin) * t_len;
      const int padded = t_len + blk.k - 1;
      for (int n = 0; n < B; ++n) {
        for (int c = 0; c < blk.cin; ++c)
          pad_channel(prev + n * prev_stride + c * ct, t_len, blk.k,
                      pad.data() + c * padded);
        conv_param_grads(blk.cin, blk.f, blk.k, ga.data() + n * stride,
                         pad.data(), t_len, blk.w.g.data(), blk.b.g.data());
        if (i > 0)
          conv_backward_input(blk.w.v.data(), blk.cin, blk.f, blk.k,
                              ga.data() + n * stride, t_len,
                              gb_buf.data() + n * prev_stride, dpad.data());
      }
      std::swap(ga, gb_buf);
    }
  }

  void zero_grads() {
    for (auto& blk : blocks) {
      blk.w.zero_grad();
      blk.b.zero_grad();
      if (blk.bn) {
        blk.gamma.zero_grad();
        blk.beta.zero_grad();
      }
    }
    dense_w.zero_grad();
    dense_b.zero_grad();
  }

  void adam_step(int step, double lr) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, step);
    const double bc2 = 1.0 - std::pow(b2, step);
    for (auto& blk : blocks) {
      blk.w.adam(lr, bc1, bc2, b1, b2, eps);
      blk.b.adam(lr, bc1, bc2, b1, b2, eps);
      if (blk.bn) {
        blk.gamma.adam(lr, bc1, bc2, b1, b2, eps);
        blk.beta.adam(lr, bc1, bc2, b1, b2, eps);
      }
    }
    dense_w.adam(lr, bc1, bc2, b1, b2, eps);
    dense_b.adam(lr, bc1, bc2, b1, b2, eps);
  }

  FcnModel snapshot(const FcnModel& proto) const {
    FcnModel m = proto;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const TrainBlock& tb = blocks[i];
      ConvBlock& blk = m.blocks[i];
      for (std::size_t j = 0; j < tb.w.v.size(); ++j)
        blk.w[j] = static_cast<float>(tb.w.v[j]);
      for (std::size_t j = 0; j < tb.b.v.size(); ++j)
        blk.b[j] = static_cast<float>(tb.b.v[j]);
      if (tb.bn)
        for (int f = 0; f < tb.f; ++f) {
          blk.gamma[f] = static_cast<float>(tb.gamma.v[f]);
          blk.beta[f] = static_cast<float>(tb.beta.v[f]);
          blk.run_mean[f] = static_cast<float>(tb.rmean[f]);
          blk.run_var[f] = static_cast<float>(tb.rvar[f]);
        }
    }
    for (std::size_t j = 0; j < dense_w.v.size(); ++j)
      m.dense_w[j] = static_cast<float>(dense_w.v[j]);
    for (std::size_t j = 0; j < dense_b.v.size(); ++j)
      m.dense_b[j] = static_cast<float>(dense_b.v[j]);
    return m;
  }
};

}  // namespace

TrainResult train(const LabeledDataset& ds, const TrainConfig& cfg) {
  return train(ds, cfg, cfg.desk_scale ? FcnArch::desk() : FcnArch::full());
}

TrainResult train(const LabeledDataset& ds, const TrainConfig& cfg,
                  const FcnArch& arch) {
  if (ds.series.empty()) throw std::invalid_argument("empty training set");
  if (ds.num_classes < 2) throw std::invalid_argument("need >= 2 classes");
  if (!(cfg.learning_rate > 0.0))
    throw std::invalid_argument("learning rate must be > 0");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  for (const auto& ts : ds.series) {
    if (!ts.label) throw std::invalid_argument("unlabeled series in training set");
    if (static_cast<int>(ts.values.size()) != ds.length)
      throw std::invalid_argument("inconsistent series length in dataset");
  }

  FcnModel proto = init_model(ds.length, ds.num_classes, arch, cfg.seed);
  Trainer tr(ds, cfg, proto);

  const int n = static_cast<int>(ds.size());
  const int bsz = tr.batch_capacity();
  Rng shuffle_rng(derive_seed(cfg.seed, 0x51ULL));

  TrainResult result;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  int step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (bsz < n) {
      for (int i = 0; i < n - 1; ++i) {
        const int j = i + static_cast<int>(shuffle_rng.below(n - i));
        std::swap(order[i], order[j]);
      }
    }
    double epoch_loss = 0.0;
    int correct = 0;
    for (int start = 0; start < n; start += bsz) {
      const int end = std::min(n, start + bsz);
      std::vector<int> batch(order.begin() + start, order.begin() + end);
      tr.zero_grads();
      const auto [loss, batch_correct] = tr.forward(batch);
      if (!std::isfinite(loss))
        throw TrainError("training diverged (non-finite loss) at epoch " +
                         std::to_string(epoch));
      epoch_loss += loss * batch.size();
      correct += batch_correct;
      tr.backward(batch);
      tr.adam_step(++step, cfg.learning_rate);
    }
    result.history.push_back(
        {epoch, epoch_loss / n, static_cast<double>(correct) / n});
  }

  result.model = tr.snapshot(proto);
  FcnRunner runner(result.model);
  int correct = 0;
  for (const auto& ts : ds.series) {
    const auto& probs = runner.forward(ts.values.data());
    if (argmax_smallest(probs) == *ts.label) ++correct;
  }
  result.final_accuracy = static_cast<double>(correct) / n;
  return result;
}

namespace detail {

GradProbe training_grad_probe(const LabeledDataset& ds, const FcnArch& arch,
                              std::uint64_t seed,
                              const std::vector<double>& param_delta) {
  TrainConfig cfg;  // full batch
  FcnModel proto = init_model(ds.length, ds.num_classes, arch, seed);
  Trainer tr(ds, cfg, proto);

  auto for_each_tensor = [&](auto&& fn) {
    for (auto& blk : tr.blocks) {
      fn(blk.w);
      fn(blk.b);
      if (blk.bn) {
        fn(blk.gamma);
        fn(blk.beta);
      }
    }
    fn(tr.dense_w);
    fn(tr.dense_b);
  };

  std::size_t total = 0;
  for_each_tensor([&](PTensor& t) { total += t.v.size(); });

  if (!param_delta.empty()) {
    if (param_delta.size() != total)
      throw std::invalid_argument("param_delta size mismatch");
    std::size_t off = 0;
    for_each_tensor([&](PTensor& t) {
      for (auto& v : t.v) v += param_delta[off++];
    });
  }

  std::vector<int> batch(ds.size());
  std::iota(batch.begin(), batch.end(), 0);
  tr.zero_grads();
  const auto [loss, correct] = tr.forward(batch);
  (void)correct;
  tr.backward(batch);

  GradProbe out;
  out.loss = loss;
  out.param_count = total;
  out.grads.reserve(total);
  for_each_tensor([&](PTensor& t) {
    out.grads.insert(out.grads.end(), t.g.begin(), t.g.end());
  });
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'C', 'N', '1'};
constexpr std::uint16_t kVersion = 1;

void put_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

class CheckpointReader {
 public:
  CheckpointReader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  void need(std::size_t n) const {
    if (off_ + n > data_.size())
      throw std::runtime_error("truncated checkpoint '" + path_ +
                               "' at byte offset " + std::to_string(off_));
  }
  const char* take(std::size_t n) {
    need(n);
    const char* p = data_.data() + off_;
    off_ += n;
    return p;
  }
  float take_f32() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::size_t offset() const { return off_; }
  std::size_t remaining() const { return data_.size() - off_; }
  const std::string& data() const { return data_; }

 private:
  std::string data_;
  std::string path_;
  std::size_t off_ = 0;
};

}  // namespace

void save_model(const FcnModel& m, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kVersion & 0xff));
  out.push_back(static_cast<char>((kVersion >> 8) & 0xff));

  std::ostringstream hdr;
  hdr << "blocks " << m.blocks.size() << "\nfilters";
  for (const auto& blk : m.blocks) hdr << ' ' << blk.filters;
  hdr << "\nkernels";
  for (const auto& blk : m.blocks) hdr << ' ' << blk.kernel;
  hdr << "\nclasses " << m.num_classes << "\ninput_length " << m.input_len
      << "\nbatch_norm " << (m.batch_norm ? 1 : 0) << "\n\n";
  out += hdr.str();

  for (const auto& blk : m.blocks) {
    for (const float v : blk.w) put_f32_le(out, v);
    for (const float v : blk.b) put_f32_le(out, v);
    if (blk.bn) {
      for (const float v : blk.gamma) put_f32_le(out, v);
      for (const float v : blk.beta) put_f32_le(out, v);
      for (const float v : blk.run_mean) put_f32_le(out, v);
      for (const float v : blk.run_var) put_f32_le(out, v);
    }
  }
  for (const float v : m.dense_w) put_f32_le(out, v);
  for (const float v : m.dense_b) put_f32_le(out, v);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

FcnModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  CheckpointReader r(buf.str(), path);

  if (std::memcmp(r.take(4), kMagic, 4) != 0)
    throw std::runtime_error("'" + path + "' is not an FCN checkpoint (bad magic)");
  const unsigned char* vp = reinterpret_cast<const unsigned char*>(r.take(2));
  const std::uint16_t version =
      static_cast<std::uint16_t>(vp[0]) | (static_cast<std::uint16_t>(vp[1]) << 8);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));

  // Textual architecture header, terminated by a blank line.
  const auto term = r.data().find("\n\n", r.offset());
  if (term == std::string::npos)
    throw std::runtime_error("truncated checkpoint '" + path +
                             "' at byte offset " + std::to_string(r.offset()));
  std::istringstream hdr(r.data().substr(r.offset(), term - r.offset()));
  r.take(term + 2 - r.offset());

  int n_blocks = -1, classes = -1, input_len = -1, bn_flag = -1;
  std::vector<int> filters, kernels;
  std::string line;
  while (std::getline(hdr, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "blocks") ls >> n_blocks;
    else if (key == "classes") ls >> classes;
    else if (key == "input_length") ls >> input_len;
    else if (key == "batch_norm") ls >> bn_flag;
    else if (key == "filters") { int v; while (ls >> v) filters.push_back(v); }
    else if (key == "kernels") { int v; while (ls >> v) kernels.push_back(v); }
    else throw std::runtime_error("unknown checkpoint header key '" + key + "'");
  }
  if (n_blocks < 1 || classes < 2 || input_len < 2 || bn_flag < 0 ||
      static_cast<int>(filters.size()) != n_blocks ||
      static_cast<int>(kernels.size()) != n_blocks)
    throw std::runtime_error("malformed checkpoint header in '" + path + "'");
  for (int i = 0; i < n_blocks; ++i)
    if (filters[i] < 1 || kernels[i] < 1 || kernels[i] > input_len)
      throw std::runtime_error("invalid architecture in '" + path + "'");

  FcnModel m;
  m.input_len = input_len;
  m.num_classes = classes;
  m.batch_norm = bn_flag != 0;
  int cin = 1;
  for (int i = 0; i < n_blocks; ++i) {
    ConvBlock blk;
    blk.in_channels = cin;
    blk.filters = filters[i];
    blk.kernel = kernels[i];
    blk.bn = m.batch_norm;
    blk.w.resize(static_cast<std::size_t>(filters[i]) * cin * kernels[i]);
    for (auto& v : blk.w) v = r.take_f32();
    blk.b.resize(filters[i]);
    for (auto& v : blk.b) v = r.take_f32();
    if (blk.bn) {
      blk.gamma.resize(filters[i]);
      for (auto& v : blk.gamma) v = r.take_f32();
      blk.beta.resize(filters[i]);
      for (auto& v : blk.beta) v = r.take_f32();
      blk.run_mean.resize(filters[i]);
      for (auto& v : blk.run_mean) v = r.take_f32();
      blk.run_var.resize(filters[i]);
      for (auto& v : blk.run_var) v = r.take_f32();
    }
    m.blocks.push_back(std::move(blk));
    cin = filters[i];
  }
  m.dense_w.resize(static_cast<std::size_t>(classes) * cin);
  for (auto& v : m.dense_w) v = r.take_f32();
  m.dense_b.resize(classes);
  for (auto& v : m.dense_b) v = r.take_f32();

  if (r.remaining() != 0)
    throw std::runtime_error("unexpected trailing bytes in '" + path + "'");
  return m;
}

}  // namespace cels
