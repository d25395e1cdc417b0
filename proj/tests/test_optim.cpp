#include "fgmae/optim.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace fgmae;

TEST_CASE("learning-rate schedule") {
  const Schedule s{10, 110, 2.0, 0.5};
  CHECK(lr_at(0, s) == 0.0);
  CHECK(lr_at(5, s) == doctest::Approx(1.0));
  CHECK(lr_at(10, s) == 2.0);
  CHECK(lr_at(60, s) == doctest::Approx(1.25));
  CHECK(lr_at(110, s) == doctest::Approx(0.5));
  CHECK(lr_at(0, Schedule{0, 10, 1.0, 0.0}) == 1.0);
  CHECK_THROWS_AS(lr_at(111, s), InvalidParam);
  CHECK_THROWS_AS(lr_at(-1, s), InvalidParam);
  CHECK_THROWS_AS(lr_at(0, Schedule{10, 10, 1.0, 0.0}), InvalidParam);
}

TEST_CASE("decoupled weight decay with zero gradients") {
  Parameter<double> p("p", Matrix<double>::Constant(2, 3, 4.0));
  Parameter<double> nd("nd", Matrix<double>::Constant(1, 3, 4.0), false);
  AdamW<double> opt({0.9, 0.999, 1e-8, 0.1});
  for (int i = 0; i < 3; ++i) opt.step({&p, &nd}, 0.5);
  CHECK(p.value.isApprox(Matrix<double>::Constant(2, 3, 4.0 * std::pow(1.0 - 0.05, 3))));
  CHECK(nd.value == Matrix<double>::Constant(1, 3, 4.0));

  Parameter<double> q("q", Matrix<double>::Constant(2, 2, 1.5));
  AdamW<double> plain({0.9, 0.999, 1e-8, 0.0});
  plain.step({&q}, 0.5);
  CHECK(q.value == Matrix<double>::Constant(2, 2, 1.5));
}

TEST_CASE("adam moments with bias correction") {
  Parameter<double> p("p", Matrix<double>::Constant(1, 1, 1.0));
  AdamW<double> opt({0.9, 0.999, 1e-8, 0.0});
  p.grad(0, 0) = 2.0;
  opt.step({&p}, 0.1);
  // first step: mhat = g, vhat = g^2, update = lr * g / (|g| + eps)
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)));
  p.grad(0, 0) = -1.0;
  opt.step({&p}, 0.1);
  const double m = (0.9 * 0.1 * 2.0 + 0.1 * -1.0) / (1 - 0.81);
  const double v = (0.999 * 0.001 * 4.0 + 0.001 * 1.0) / (1 - 0.999 * 0.999);
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * m / (std::sqrt(v) + 1e-8)));
}

TEST_CASE("non-finite gradients abort the step") {
  Parameter<float> a("a", Matrix<float>::Ones(1, 2)), b("b", Matrix<float>::Ones(1, 2));
  a.grad(0, 0) = 1.0f;
  b.grad(0, 1) = std::numeric_limits<float>::quiet_NaN();
  AdamW<float> opt({0.9, 0.999, 1e-8, 0.1});
  CHECK_THROWS_AS(opt.step({&a, &b}, 0.1), NonFiniteGradient);
  CHECK(a.value == Matrix<float>::Ones(1, 2));
  CHECK(all_finite<float>({&a}));
}

TEST_CASE("frozen parameters are skipped") {
  Parameter<double> p("p", Matrix<double>::Ones(1, 1));
  p.trainable = false;
  p.grad(0, 0) = 5.0;
  AdamW<double> opt({0.9, 0.999, 1e-8, 0.5});
  opt.step({&p}, 1.0);
  CHECK(p.value(0, 0) == 1.0);
}
