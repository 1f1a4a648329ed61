#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops used by the classifier, the explainers and the
// evaluation metrics. Every operation has a scalar reference implementation
// and may have SIMD variants; the active table is picked once at startup
// (cpuid probe, overridable via the CELS_KERNELS environment variable or
// force_backend()). Elementwise kernels are bit-identical across backends;
// reductions and axpy may differ in the last bits because the SIMD variants
// reorder the accumulation and use FMA.

namespace cels::kern {

enum class Backend { Scalar, Avx2 };

struct Ops {
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*sumsq)(const double* x, std::size_t n);
  double (*l1_dist)(const double* a, const double* b, std::size_t n);
  double (*l2sq_dist)(const double* a, const double* b, std::size_t n);
  // out[i] = a[i] * (1 - t[i]) + b[i] * t[i]; exact at t = 0 and t = 1
  void (*lerp_blend)(const double* a, const double* b, const double* t,
                     double* out, std::size_t n);
  // y[i] = a * x[i] + b
  void (*scale_shift)(const double* x, double a, double b, double* y,
                      std::size_t n);
  void (*relu)(const double* x, double* y, std::size_t n);
  // dx[i] = x[i] > 0 ? dy[i] : 0
  void (*relu_backward)(const double* x, const double* dy, double* dx,
                        std::size_t n);
  void (*clamp01)(double* x, std::size_t n);
  // One ADAM update: m = b1*m + (1-b1)*g, v = b2*v + (1-b2)*g^2,
  // p -= lr * (m/bc1) / (sqrt(v/bc2) + eps), with bc1/bc2 the bias
  // corrections 1 - b1^t and 1 - b2^t.
  void (*adam_step)(double* p, double* m, double* v, const double* g,
                    double lr, double bc1, double bc2, double b1, double b2,
                    double eps, std::size_t n);
};

// Active table. First call probes the CPU (and CELS_KERNELS, values
// "scalar"/"avx2"); later calls are free.
const Ops& ops();

Backend active_backend();
bool backend_available(Backend b);
// Throws std::runtime_error if the backend is not available on this machine.
void force_backend(Backend b);
std::string_view backend_name(Backend b);
// Direct access for equivalence tests.
const Ops& ops_for(Backend b);

}  // namespace cels::kern
