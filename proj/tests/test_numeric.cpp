#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "testutil.hpp"
#include "url/errors.hpp"
#include "url/numeric/graph.hpp"
#include "url/numeric/optimizer.hpp"
#include "url/numeric/parameter.hpp"
#include "url/numeric/tensor.hpp"

using namespace url::numeric;
using url::NumericError;
using url::RngStream;
using url::ShapeError;

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({-1}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.shape_str() == "[2 x 3]");
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("graph matmul: examples and shape errors") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor({2, 1}, {5, 6}));
  Var c = matmul(a, b);
  CHECK(c.value().values() == std::vector<double>{17, 39});

  Var eye = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var m = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK(matmul(eye, m).value().values() == std::vector<double>{1, 2, 3, 4});

  Var z = tape.constant(Tensor({2, 3}));
  Var mz = matmul(eye, z);
  for (double v : mz.value().values()) CHECK(v == 0.0);

  Var bad = tape.constant(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_WITH_AS(matmul(a, bad) /* 2x2 * 3x2 */,
                       doctest::Contains("[2 x 2]"), ShapeError);
}

TEST_CASE("cross entropy: closed forms") {
  // uniform logits over V=259 -> exactly ln 259
  Tape tape;
  Var logits = tape.constant(Tensor({1, 259}));
  Var loss = cross_entropy(logits, {7}, {1});
  CHECK(loss.value().item() == std::log(259.0));  // exact

  // +30 on the target -> effectively zero loss
  Tensor confident({1, 5});
  confident.at(0, 2) = 30.0;
  Var l2 = cross_entropy(tape.constant(confident), {2}, {1});
  CHECK(l2.value().item() < 1e-12);

  // [0, ln 3], target 0 -> -ln 0.25 = ln 4
  Var l3 = cross_entropy(tape.constant(Tensor({1, 2}, {0.0, std::log(3.0)})), {0}, {1});
  CHECK(l3.value().item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // errors: all positions masked out; target out of range
  CHECK_THROWS_AS(cross_entropy(tape.constant(Tensor({1, 2})), {0}, {0}), ShapeError);
  CHECK_THROWS_AS(cross_entropy(tape.constant(Tensor({1, 2})), {5}, {1}), ShapeError);
}

TEST_CASE("backward: seeded gradients and closed-form CE gradient") {
  // loss = sum(p) -> grad(p) = ones
  Parameter p("p", Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  {
    Tape tape;
    Var loss = sum(tape.leaf(p));
    tape.backward(loss);
  }
  for (double g : p.grad().values()) CHECK(g == 1.0);

  // additive: second backward doubles the accumulated grads
  {
    Tape tape;
    Var loss = sum(tape.leaf(p));
    tape.backward(loss);
  }
  for (double g : p.grad().values()) CHECK(g == 2.0);
  p.zero_grad();

  // CE at uniform logits: grad = (1/V - onehot) / T_masked
  int64_t t_len = 3, v_sz = 5;
  Parameter logits("logits", Tensor({t_len, v_sz}));
  {
    Tape tape;
    Var loss = cross_entropy(tape.leaf(logits), {1, 4, 2}, {1, 1, 0});
    tape.backward(loss);
  }
  std::vector<int> targets = {1, 4, 2};
  for (int64_t r = 0; r < t_len; ++r) {
    for (int64_t v = 0; v < v_sz; ++v) {
      double expected = 0.0;
      if (r < 2) {
        expected = (1.0 / static_cast<double>(v_sz) -
                    (v == targets[static_cast<size_t>(r)] ? 1.0 : 0.0)) / 2.0;
      }
      CHECK(logits.grad().at(r, v) == doctest::Approx(expected).epsilon(1e-14));
    }
  }

  // non-scalar loss rejected
  {
    Tape tape;
    Var x = tape.leaf(p);
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
  }

  // frozen parameters keep identically-zero grads
  Parameter frozen("frozen", Tensor({2, 2}, {1, 1, 1, 1}), /*trainable=*/false);
  {
    Tape tape;
    Var loss = sum(mul(tape.leaf(frozen), tape.leaf(frozen)));
    tape.backward(loss);
  }
  for (double g : frozen.grad().values()) CHECK(g == 0.0);
}

TEST_CASE("gradient flows through frozen-weight matmuls to live inputs") {
  Parameter w("w", Tensor({2, 2}, {1, 2, 3, 4}), /*trainable=*/false);
  Parameter x("x", Tensor({1, 2}, {1, 1}));
  Tape tape;
  Var loss = sum(matmul(tape.leaf(x), tape.leaf(w)));
  tape.backward(loss);
  CHECK(x.grad().values() == std::vector<double>{3, 7});  // row sums of w
  for (double g : w.grad().values()) CHECK(g == 0.0);
}

TEST_CASE("randomized finite-difference suite") {
  auto result = gradcheck::run_op_suite(/*cases_per_op=*/12, /*seed=*/2024);
  INFO(result.first_failure);
  CHECK(result.failures == 0);
  CHECK(result.cases >= 12 * 17);
  CHECK(result.max_rel_err < 1e-3);
}

TEST_CASE("dropout: inverted scaling and p=0 identity") {
  RngStream rng(77);
  Tape tape;
  Tensor x = Tensor::full({50, 10}, 1.0);
  Var in = tape.constant(x);
  Var kept = dropout(in, 0.0, rng);
  CHECK(kept.id == in.id);  // no node added

  Var out = dropout(in, 0.4, rng);
  int zeros = 0;
  for (double v : out.value().values()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(1.0 / 0.6).epsilon(1e-12));
    }
  }
  CHECK(zeros > 100);
  CHECK(zeros < 300);
  CHECK_THROWS_AS(dropout(in, 1.0, rng), NumericError);
}

TEST_CASE("lr schedule: warmup then linear decay") {
  LrSchedule sched{0.1, 0.08, 62};
  CHECK(sched.warmup_steps() == 5);  // ceil(0.08 * 62)
  CHECK(sched.lr_at(0) == doctest::Approx(0.1 * 1.0 / 5.0));
  CHECK(sched.lr_at(4) == doctest::Approx(0.1));
  CHECK(sched.lr_at(5) == doctest::Approx(0.1 * 57.0 / 57.0));
  CHECK(sched.lr_at(61) == doctest::Approx(0.1 * 1.0 / 57.0));
  CHECK(sched.lr_at(5) > sched.lr_at(6));

  LrSchedule no_warmup{0.5, 0.0, 10};
  CHECK(no_warmup.warmup_steps() == 0);
  CHECK(no_warmup.lr_at(0) == doctest::Approx(0.5));
}

TEST_CASE("adamw: zero-grad step is a counted no-op") {
  Parameter p("w", Tensor::scalar(1.0));
  AdamW opt({&p}, LrSchedule{0.1, 0.08, 10});
  CHECK(opt.step() == StepStatus::kSkippedAllZero);
  CHECK(opt.step_count() == 1);
  CHECK(p.value().item() == 1.0);  // no decay, no moment update
}

TEST_CASE("adamw: constant grad descends strictly every scheduled step") {
  Parameter p("w", Tensor::scalar(1.0));
  AdamW opt({&p}, LrSchedule{0.1, 0.08, 10});
  double prev = p.value().item();
  for (int i = 0; i < 10; ++i) {
    p.grad().values()[0] = 1.0;
    CHECK(opt.step() == StepStatus::kApplied);
    CHECK(p.value().item() < prev);
    prev = p.value().item();
    CHECK(p.grad().values()[0] == 0.0);  // grads zeroed after step
  }
}

TEST_CASE("global norm clip") {
  Parameter a("a", Tensor({1, 2}, {3.0, 0.0}));
  Parameter b("b", Tensor({1, 2}, {0.0, 4.0}));
  a.grad().values() = {3.0, 0.0};
  b.grad().values() = {0.0, 4.0};
  std::vector<Parameter*> params = {&a, &b};
  double norm = clip_global_norm(params, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  double clipped = 0.0;
  for (double g : a.grad().values()) clipped += g * g;
  for (double g : b.grad().values()) clipped += g * g;
  CHECK(std::sqrt(clipped) == doctest::Approx(1.0).epsilon(1e-12));

  // below the threshold: untouched
  a.grad().values() = {0.1, 0.0};
  b.grad().values() = {0.0, 0.1};
  clip_global_norm(params, 1.0);
  CHECK(a.grad().values()[0] == 0.1);

  a.grad().values() = {std::numeric_limits<double>::infinity(), 0.0};
  CHECK_THROWS_AS(clip_global_norm(params, 1.0), NumericError);
}

TEST_CASE("ops reject non-finite production") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 2}, {700.0, 0.0}));
  // exp(700 - lse) is fine, but scale by inf-producing factor is not
  CHECK_THROWS_AS(scale(x, std::numeric_limits<double>::infinity()), NumericError);
  CHECK_THROWS_AS(tape.constant(Tensor({1}, {std::nan("")})), NumericError);
}
