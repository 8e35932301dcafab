#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "testutil.hpp"
#include "url/numeric/kernels.hpp"
#include "url/rng.hpp"

namespace ker = url::numeric::kernels;
using url::RngStream;

namespace {

std::vector<double> randv(RngStream& rng, int64_t n, double sd = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.next_normal(0.0, sd);
  return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul_nn hand values") {
  // [[1,2],[3,4]] * [[5],[6]] = [[17],[39]]
  std::vector<double> a = {1, 2, 3, 4};
  std::vector<double> b = {5, 6};
  std::vector<double> c(2);
  ker::serial::matmul_nn(a.data(), b.data(), c.data(), 2, 2, 1, false);
  CHECK(c[0] == 17.0);
  CHECK(c[1] == 39.0);

  // identity * M = M
  std::vector<double> eye = {1, 0, 0, 1};
  std::vector<double> m = {1, 2, 3, 4};
  std::vector<double> out(4);
  ker::serial::matmul_nn(eye.data(), m.data(), out.data(), 2, 2, 2, false);
  CHECK(out == m);

  // M * zeros = zeros
  std::vector<double> z(6, 0.0);
  std::vector<double> out2(6, 7.0);
  ker::serial::matmul_nn(eye.data(), z.data(), out2.data(), 2, 2, 3, false);
  for (double v : out2) CHECK(v == 0.0);
}

TEST_CASE("matmul transpose variants agree with explicit transposition") {
  RngStream rng(11);
  int64_t m = 4, k = 3, n = 5;
  auto a = randv(rng, m * k);
  auto b = randv(rng, k * n);
  std::vector<double> c_ref(static_cast<size_t>(m * n));
  ker::serial::matmul_nn(a.data(), b.data(), c_ref.data(), m, k, n, false);

  // nt: B supplied as its transpose [n x k]
  std::vector<double> bt(static_cast<size_t>(n * k));
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < n; ++j) bt[static_cast<size_t>(j * k + i)] = b[static_cast<size_t>(i * n + j)];
  std::vector<double> c_nt(static_cast<size_t>(m * n));
  ker::serial::matmul_nt(a.data(), bt.data(), c_nt.data(), m, k, n, false);
  CHECK(testutil::max_abs_diff(c_ref, c_nt) < 1e-14);

  // tn: A supplied as its transpose [k x m]
  std::vector<double> at(static_cast<size_t>(k * m));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < k; ++j) at[static_cast<size_t>(j * m + i)] = a[static_cast<size_t>(i * k + j)];
  std::vector<double> c_tn(static_cast<size_t>(m * n));
  ker::serial::matmul_tn(at.data(), b.data(), c_tn.data(), m, k, n, false);
  CHECK(testutil::max_abs_diff(c_ref, c_tn) < 1e-14);

  // accumulate adds on top of existing values
  std::vector<double> c_acc = c_ref;
  ker::serial::matmul_nn(a.data(), b.data(), c_acc.data(), m, k, n, true);
  for (size_t i = 0; i < c_acc.size(); ++i) {
    CHECK(c_acc[i] == doctest::Approx(2.0 * c_ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("serial and parallel lanes are bit-identical across thread counts") {
  RngStream rng(12);
  int64_t m = 33, k = 17, n = 29;
  auto a = randv(rng, m * k);
  auto b = randv(rng, k * n);
  auto bt = randv(rng, n * k);
  auto at = randv(rng, k * m);

  std::vector<double> ref_nn(static_cast<size_t>(m * n));
  std::vector<double> ref_nt(static_cast<size_t>(m * n));
  std::vector<double> ref_tn(static_cast<size_t>(m * n));
  ker::serial::matmul_nn(a.data(), b.data(), ref_nn.data(), m, k, n, false);
  ker::serial::matmul_nt(a.data(), bt.data(), ref_nt.data(), m, k, n, false);
  ker::serial::matmul_tn(at.data(), b.data(), ref_tn.data(), m, k, n, false);

  auto x = randv(rng, m * n, 2.0);
  std::vector<double> ref_softmax(static_cast<size_t>(m * n));
  ker::serial::softmax_rows(x.data(), ref_softmax.data(), m, n);

  auto sq = randv(rng, n * n, 2.0);
  std::vector<double> ref_causal(static_cast<size_t>(n * n));
  ker::serial::causal_softmax(sq.data(), ref_causal.data(), n);

  auto gamma = randv(rng, n);
  auto beta = randv(rng, n);
  std::vector<double> ref_ln(static_cast<size_t>(m * n));
  std::vector<double> ref_mean(static_cast<size_t>(m));
  std::vector<double> ref_istd(static_cast<size_t>(m));
  ker::serial::layernorm_rows(x.data(), gamma.data(), beta.data(), ref_ln.data(),
                              ref_mean.data(), ref_istd.data(), m, n, 1e-5);

  auto dy = randv(rng, m * n);
  std::vector<double> ref_dg(static_cast<size_t>(n), 0.0);
  std::vector<double> ref_db(static_cast<size_t>(n), 0.0);
  ker::serial::layernorm_backward_params(x.data(), ref_mean.data(),
                                         ref_istd.data(), dy.data(),
                                         ref_dg.data(), ref_db.data(), m, n);

  std::vector<int> thread_counts = {1, 2, 3, 7};
  for (int threads : thread_counts) {
#ifdef _OPENMP
    omp_set_num_threads(threads);
#else
    (void)threads;
#endif
    std::vector<double> got(static_cast<size_t>(m * n));
    ker::par::matmul_nn(a.data(), b.data(), got.data(), m, k, n, false);
    CHECK(bits_equal(got, ref_nn));
    ker::par::matmul_nt(a.data(), bt.data(), got.data(), m, k, n, false);
    CHECK(bits_equal(got, ref_nt));
    ker::par::matmul_tn(at.data(), b.data(), got.data(), m, k, n, false);
    CHECK(bits_equal(got, ref_tn));
    ker::par::softmax_rows(x.data(), got.data(), m, n);
    CHECK(bits_equal(got, ref_softmax));

    std::vector<double> got_sq(static_cast<size_t>(n * n));
    ker::par::causal_softmax(sq.data(), got_sq.data(), n);
    CHECK(bits_equal(got_sq, ref_causal));

    std::vector<double> got_ln(static_cast<size_t>(m * n));
    std::vector<double> got_mean(static_cast<size_t>(m));
    std::vector<double> got_istd(static_cast<size_t>(m));
    ker::par::layernorm_rows(x.data(), gamma.data(), beta.data(), got_ln.data(),
                             got_mean.data(), got_istd.data(), m, n, 1e-5);
    CHECK(bits_equal(got_ln, ref_ln));

    std::vector<double> got_dg(static_cast<size_t>(n), 0.0);
    std::vector<double> got_db(static_cast<size_t>(n), 0.0);
    ker::par::layernorm_backward_params(x.data(), got_mean.data(),
                                        got_istd.data(), dy.data(),
                                        got_dg.data(), got_db.data(), m, n);
    CHECK(bits_equal(got_dg, ref_dg));
    CHECK(bits_equal(got_db, ref_db));
  }
#ifdef _OPENMP
  omp_set_num_threads(omp_get_num_procs());
#endif
}

TEST_CASE("softmax rows: stability, normalization, shift invariance") {
  // uniform logits
  std::vector<double> x = {0, 0, 0, 0};
  std::vector<double> y(4);
  ker::serial::softmax_rows(x.data(), y.data(), 1, 4);
  for (double v : y) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  // huge equal logits must not overflow
  std::vector<double> big = {1000, 1000};
  std::vector<double> yb(2);
  ker::serial::softmax_rows(big.data(), yb.data(), 1, 2);
  CHECK(yb[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(yb[1] == doctest::Approx(0.5).epsilon(1e-15));

  // closed form [0, ln 3] -> [0.25, 0.75]
  std::vector<double> lg = {0.0, std::log(3.0)};
  std::vector<double> yl(2);
  ker::serial::softmax_rows(lg.data(), yl.data(), 1, 2);
  CHECK(yl[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(yl[1] == doctest::Approx(0.75).epsilon(1e-12));

  // random rows: sum to 1 within 1e-12, invariant to constant shifts
  RngStream rng(13);
  auto xr = randv(rng, 6 * 9, 3.0);
  std::vector<double> yr(6 * 9);
  ker::serial::softmax_rows(xr.data(), yr.data(), 6, 9);
  for (int64_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < 9; ++j) s += yr[static_cast<size_t>(r * 9 + j)];
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
  auto shifted = xr;
  for (int64_t r = 0; r < 6; ++r) {
    for (int64_t j = 0; j < 9; ++j) shifted[static_cast<size_t>(r * 9 + j)] += 17.5;
  }
  std::vector<double> ys(6 * 9);
  ker::serial::softmax_rows(shifted.data(), ys.data(), 6, 9);
  CHECK(testutil::max_abs_diff(yr, ys) < 1e-12);
}

TEST_CASE("causal softmax: exact zeros above the diagonal, prefix rows sum to 1") {
  RngStream rng(14);
  int64_t t = 7;
  auto x = randv(rng, t * t, 2.0);
  std::vector<double> y(static_cast<size_t>(t * t));
  ker::serial::causal_softmax(x.data(), y.data(), t);
  for (int64_t r = 0; r < t; ++r) {
    double s = 0.0;
    for (int64_t j = 0; j <= r; ++j) s += y[static_cast<size_t>(r * t + j)];
    CHECK(std::fabs(s - 1.0) < 1e-12);
    for (int64_t j = r + 1; j < t; ++j) {
      CHECK(y[static_cast<size_t>(r * t + j)] == 0.0);  // exact
    }
  }
}

TEST_CASE("layernorm rows: normalized statistics") {
  RngStream rng(15);
  int64_t rows = 5, cols = 16;
  auto x = randv(rng, rows * cols, 3.0);
  std::vector<double> gamma(static_cast<size_t>(cols), 1.0);
  std::vector<double> beta(static_cast<size_t>(cols), 0.0);
  std::vector<double> y(static_cast<size_t>(rows * cols));
  std::vector<double> mean(static_cast<size_t>(rows));
  std::vector<double> istd(static_cast<size_t>(rows));
  ker::serial::layernorm_rows(x.data(), gamma.data(), beta.data(), y.data(),
                              mean.data(), istd.data(), rows, cols, 1e-8);
  for (int64_t r = 0; r < rows; ++r) {
    double m = 0.0, v = 0.0;
    for (int64_t j = 0; j < cols; ++j) m += y[static_cast<size_t>(r * cols + j)];
    m /= static_cast<double>(cols);
    for (int64_t j = 0; j < cols; ++j) {
      double d = y[static_cast<size_t>(r * cols + j)] - m;
      v += d * d;
    }
    v /= static_cast<double>(cols);
    CHECK(std::fabs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("dispatch honors forced lanes") {
  RngStream rng(16);
  auto a = randv(rng, 4);
  auto b = randv(rng, 4);
  std::vector<double> c1(4), c2(4);
  ker::set_lane(ker::Lane::kSerial);
  ker::matmul_nn(a.data(), b.data(), c1.data(), 2, 2, 2, false);
  ker::set_lane(ker::Lane::kParallel);
  ker::matmul_nn(a.data(), b.data(), c2.data(), 2, 2, 2, false);
  ker::set_lane(ker::Lane::kAuto);
  CHECK(bits_equal(c1, c2));
}
