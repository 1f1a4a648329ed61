#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cels/kernels.hpp"
#include "cels/rng.hpp"

using namespace cels;

namespace {

// Sizes chosen to cover empty, sub-lane, one-lane, unrolled and remainder
// paths of the SIMD variants.
const std::vector<std::size_t> kSizes = {0, 1, 2, 3, 4, 5, 7, 8,
                                         9, 15, 16, 17, 63, 64, 100};

std::vector<double> rand_vec(Rng& rng, std::size_t n, double lo = -3.0,
                             double hi = 3.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool simd_present() {
  return kern::backend_available(kern::Backend::Avx2);
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  CHECK(kern::backend_available(kern::Backend::Scalar));
  CHECK(kern::backend_name(kern::Backend::Scalar) == "scalar");
  CHECK(kern::backend_name(kern::Backend::Avx2) == "avx2");
  // ops() resolves to some valid table
  CHECK(kern::ops().sum != nullptr);
}

TEST_CASE("scalar reference kernels compute the expected values") {
  const auto& K = kern::ops_for(kern::Backend::Scalar);

  std::vector<double> y = {1.0, 2.0, 3.0};
  const std::vector<double> x = {10.0, 20.0, 30.0};
  K.axpy(0.5, x.data(), y.data(), 3);
  CHECK(y[0] == doctest::Approx(6.0));
  CHECK(y[2] == doctest::Approx(18.0));

  CHECK(K.dot(x.data(), y.data(), 3) == doctest::Approx(10 * 6 + 20 * 12 + 30 * 18));
  CHECK(K.sum(x.data(), 3) == doctest::Approx(60.0));
  CHECK(K.sumsq(x.data(), 3) == doctest::Approx(1400.0));

  const std::vector<double> a = {0.0, 0.0}, b = {1.0, -1.0};
  CHECK(K.l1_dist(a.data(), b.data(), 2) == doctest::Approx(2.0));
  CHECK(K.l2sq_dist(a.data(), b.data(), 2) == doctest::Approx(2.0));

  const std::vector<double> t = {0.5, 0.25};
  const std::vector<double> p = {0.0, 2.0}, q = {2.0, 0.0};
  std::vector<double> out(2);
  K.lerp_blend(p.data(), q.data(), t.data(), out.data(), 2);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 1.5);

  std::vector<double> th = {-0.5, 0.3, 1.7};
  K.clamp01(th.data(), 3);
  CHECK(th == std::vector<double>{0.0, 0.3, 1.0});
}

TEST_CASE("relu pair behaves as mask") {
  const auto& K = kern::ops_for(kern::Backend::Scalar);
  const std::vector<double> x = {-1.0, 0.0, 2.0};
  const std::vector<double> dy = {5.0, 5.0, 5.0};
  std::vector<double> y(3), dx(3);
  K.relu(x.data(), y.data(), 3);
  K.relu_backward(x.data(), dy.data(), dx.data(), 3);
  CHECK(y == std::vector<double>{0.0, 0.0, 2.0});
  CHECK(dx == std::vector<double>{0.0, 0.0, 5.0});
}

TEST_CASE("adam_step matches a hand-stepped reference") {
  const auto& K = kern::ops_for(kern::Backend::Scalar);
  double p = 1.0, m = 0.0, v = 0.0;
  const double g = 0.5, lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  K.adam_step(&p, &m, &v, &g, lr, 1.0 - b1, 1.0 - b2, b1, b2, eps, 1);
  // First step: mhat = g, vhat = g^2 -> step ~ lr * g/(|g|+eps)
  CHECK(p == doctest::Approx(1.0 - lr * (0.5 / (0.5 + eps))));
  CHECK(m == doctest::Approx(0.05));
  CHECK(v == doctest::Approx(0.00025));
}

TEST_CASE("simd variants match the scalar reference") {
  if (!simd_present()) return;  // nothing to compare on this machine
  const auto& S = kern::ops_for(kern::Backend::Scalar);
  const auto& V = kern::ops_for(kern::Backend::Avx2);
  Rng rng(42);

  for (const std::size_t n : kSizes) {
    CAPTURE(n);
    const auto a = rand_vec(rng, n);
    const auto b = rand_vec(rng, n);
    const auto t = rand_vec(rng, n, 0.0, 1.0);

    // Reductions and axpy: FMA/reassociation allowed, compare with tolerance.
    CHECK(V.dot(a.data(), b.data(), n) ==
          doctest::Approx(S.dot(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(V.sum(a.data(), n) == doctest::Approx(S.sum(a.data(), n)).epsilon(1e-12));
    CHECK(V.sumsq(a.data(), n) ==
          doctest::Approx(S.sumsq(a.data(), n)).epsilon(1e-12));
    CHECK(V.l1_dist(a.data(), b.data(), n) ==
          doctest::Approx(S.l1_dist(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(V.l2sq_dist(a.data(), b.data(), n) ==
          doctest::Approx(S.l2sq_dist(a.data(), b.data(), n)).epsilon(1e-12));

    std::vector<double> ys(b), yv(b);
    S.axpy(1.7, a.data(), ys.data(), n);
    V.axpy(1.7, a.data(), yv.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(yv[i] == doctest::Approx(ys[i]).epsilon(1e-14));

    // Elementwise kernels keep the scalar operation order: bit-identical.
    std::vector<double> os(n), ov(n);
    S.lerp_blend(a.data(), b.data(), t.data(), os.data(), n);
    V.lerp_blend(a.data(), b.data(), t.data(), ov.data(), n);
    CHECK(os == ov);

    S.scale_shift(a.data(), 1.3, -0.2, os.data(), n);
    V.scale_shift(a.data(), 1.3, -0.2, ov.data(), n);
    CHECK(os == ov);

    S.relu(a.data(), os.data(), n);
    V.relu(a.data(), ov.data(), n);
    CHECK(os == ov);

    S.relu_backward(a.data(), b.data(), os.data(), n);
    V.relu_backward(a.data(), b.data(), ov.data(), n);
    CHECK(os == ov);

    std::vector<double> cs(a), cv(a);
    S.clamp01(cs.data(), n);
    V.clamp01(cv.data(), n);
    CHECK(cs == cv);

    std::vector<double> ps(a), pv(a), ms(n, 0.1), mv(n, 0.1), vs(n, 0.2),
        vv(n, 0.2);
    const auto g = rand_vec(rng, n);
    S.adam_step(ps.data(), ms.data(), vs.data(), g.data(), 0.1, 0.1, 0.001,
                0.9, 0.999, 1e-8, n);
    V.adam_step(pv.data(), mv.data(), vv.data(), g.data(), 0.1, 0.1, 0.001,
                0.9, 0.999, 1e-8, n);
    CHECK(ps == pv);
    CHECK(ms == mv);
    CHECK(vs == vv);
  }
}

TEST_CASE("lerp_blend endpoints are exact for both backends") {
  for (const auto backend : {kern::Backend::Scalar, kern::Backend::Avx2}) {
    if (!kern::backend_available(backend)) continue;
    const auto& K = kern::ops_for(backend);
    Rng rng(7);
    const std::size_t n = 37;
    const auto a = rand_vec(rng, n);
    const auto b = rand_vec(rng, n);
    std::vector<double> zeros(n, 0.0), ones(n, 1.0), out(n);
    K.lerp_blend(a.data(), b.data(), zeros.data(), out.data(), n);
    CHECK(out == a);
    K.lerp_blend(a.data(), b.data(), ones.data(), out.data(), n);
    CHECK(out == b);
  }
}

TEST_CASE("force_backend switches the active table") {
  const auto original = kern::active_backend();
  kern::force_backend(kern::Backend::Scalar);
  CHECK(kern::active_backend() == kern::Backend::Scalar);
  if (simd_present()) {
    kern::force_backend(kern::Backend::Avx2);
    CHECK(kern::active_backend() == kern::Backend::Avx2);
  }
  kern::force_backend(original);
}
