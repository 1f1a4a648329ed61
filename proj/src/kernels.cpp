#include "cels/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace cels::kern {

const Ops& scalar_ops();
#if defined(CELS_HAVE_AVX2_TU)
const Ops& avx2_ops();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(CELS_HAVE_AVX2_TU)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect_backend() {
  if (const char* env = std::getenv("CELS_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return Backend::Scalar;
    if (want == "avx2" && cpu_has_avx2()) return Backend::Avx2;
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<const Ops*> g_active{nullptr};
std::atomic<Backend> g_backend{Backend::Scalar};

const Ops& table_for(Backend b) {
#if defined(CELS_HAVE_AVX2_TU)
  if (b == Backend::Avx2) return avx2_ops();
#endif
  return scalar_ops();
}

const Ops* init_active() {
  const Backend b = detect_backend();
  g_backend.store(b, std::memory_order_relaxed);
  const Ops* t = &table_for(b);
  g_active.store(t, std::memory_order_release);
  return t;
}

}  // namespace

const Ops& ops() {
  const Ops* t = g_active.load(std::memory_order_acquire);
  if (!t) t = init_active();
  return *t;
}

Backend active_backend() {
  ops();
  return g_backend.load(std::memory_order_relaxed);
}

bool backend_available(Backend b) {
  return b == Backend::Scalar || (b == Backend::Avx2 && cpu_has_avx2());
}

void force_backend(Backend b) {
  if (!backend_available(b))
    throw std::runtime_error("kernel backend not available: " +
                             std::string(backend_name(b)));
  g_backend.store(b, std::memory_order_relaxed);
  g_active.store(&table_for(b), std::memory_order_release);
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "?";
}

const Ops& ops_for(Backend b) {
  if (!backend_available(b))
    throw std::runtime_error("kernel backend not available: " +
                             std::string(backend_name(b)));
  return table_for(b);
}

}  // namespace cels::kern
