#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cam/tensor.hpp"

using namespace cam;

namespace {

std::vector<double> values(const Tape& tape, Var v) {
  auto s = tape.value(v);
  return {s.begin(), s.end()};
}

Var vec(Tape& tape, std::vector<double> v) { return tape.constant(v); }

Var mat(Tape& tape, std::vector<double> v, std::size_t r, std::size_t c) {
  return tape.constant(v, r, c);
}

}  // namespace

TEST(Elementwise, SigmoidOfZeroIsHalf) {
  Tape tape;
  EXPECT_EQ(values(tape, tape.sigmoid(vec(tape, {0, 0}))), (std::vector<double>{0.5, 0.5}));
}

TEST(Elementwise, TanhOfZeroIsZero) {
  Tape tape;
  EXPECT_EQ(values(tape, tape.tanh(vec(tape, {0}))), std::vector<double>{0.0});
}

TEST(Elementwise, MulIsPointwise) {
  Tape tape;
  EXPECT_EQ(values(tape, tape.mul(vec(tape, {2, 3}), vec(tape, {4, -1}))),
            (std::vector<double>{8, -3}));
}

TEST(Elementwise, DispatcherCoversAllKinds) {
  Tape tape;
  Var a = vec(tape, {1, -2});
  Var b = vec(tape, {3, 5});
  EXPECT_EQ(values(tape, elementwise(tape, Elementwise::Add, a, b)), (std::vector<double>{4, 3}));
  EXPECT_EQ(values(tape, elementwise(tape, Elementwise::Sub, a, b)), (std::vector<double>{-2, -7}));
  EXPECT_EQ(values(tape, elementwise(tape, Elementwise::Mul, a, b)), (std::vector<double>{3, -10}));
  EXPECT_DOUBLE_EQ(values(tape, elementwise(tape, Elementwise::Tanh, a))[0], std::tanh(1.0));
}

TEST(Elementwise, ShapeMismatchThrows) {
  Tape tape;
  try {
    tape.add(vec(tape, {1, 2}), vec(tape, {1, 2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Elementwise, NonFiniteOutputThrows) {
  Tape tape;
  Var big = vec(tape, {1e308});
  try {
    tape.add(big, big);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
}

TEST(Elementwise, SigmoidSaturatesWithoutOverflow) {
  Tape tape;
  auto v = values(tape, tape.sigmoid(vec(tape, {-800, 800})));
  EXPECT_GE(v[0], 0.0);
  EXPECT_LT(v[0], 1e-300);
  EXPECT_EQ(v[1], 1.0);
}

TEST(MatVec, IdentityMap) {
  Tape tape;
  EXPECT_EQ(values(tape, tape.matvec(mat(tape, {1, 0, 0, 1}, 2, 2), vec(tape, {3, 5}))),
            (std::vector<double>{3, 5}));
}

TEST(MatVec, ZeroMatrixAnnihilates) {
  Tape tape;
  EXPECT_EQ(values(tape, tape.matvec(mat(tape, std::vector<double>(6, 0.0), 2, 3), vec(tape, {7, -1, 2}))),
            (std::vector<double>{0, 0}));
}

TEST(MatVec, RowSums) {
  Tape tape;
  EXPECT_EQ(values(tape, tape.matvec(mat(tape, {1, 2, 3, 4}, 2, 2), vec(tape, {1, 1}))),
            (std::vector<double>{3, 7}));
}

TEST(MatVec, InnerDimensionMismatchThrows) {
  Tape tape;
  EXPECT_THROW(tape.matvec(mat(tape, {1, 2, 3, 4}, 2, 2), vec(tape, {1, 1, 1})), Error);
}

TEST(Softmax, UniformOnEqualScores) {
  Tape tape;
  for (double v : values(tape, tape.softmax(vec(tape, {0, 0, 0})))) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, SingletonIsOne) {
  Tape tape;
  EXPECT_EQ(values(tape, tape.softmax(vec(tape, {-42.5}))), std::vector<double>{1.0});
}

TEST(Softmax, LogRatio) {
  Tape tape;
  auto v = values(tape, tape.softmax(vec(tape, {std::log(1.0), std::log(3.0)})));
  EXPECT_NEAR(v[0], 0.25, 1e-15);
  EXPECT_NEAR(v[1], 0.75, 1e-15);
}

TEST(Softmax, EmptyInputThrows) {
  Tape tape;
  try {
    tape.softmax(tape.zeros(0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(Softmax, LargeScoresDoNotOverflow) {
  Tape tape;
  auto v = values(tape, tape.softmax(vec(tape, {1000, 1000 + std::log(3.0)})));
  EXPECT_NEAR(v[1], 0.75, 1e-12);
}

TEST(SoftmaxProperty, NormalizedAndInUnitInterval) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(1, 12);
  std::normal_distribution<double> g(0.0, 30.0);
  for (int trial = 0; trial < 500; ++trial) {
    Tape tape;
    std::vector<double> x(len(rng));
    for (double& v : x) v = g(rng);
    double total = 0.0;
    for (double z : values(tape, tape.softmax(vec(tape, x)))) {
      EXPECT_GE(z, 0.0);
      EXPECT_LE(z, 1.0);
      total += z;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(SoftmaxProperty, ShiftInvariance) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(6), y(6);
    const double c = g(rng) * 10.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = g(rng);
      y[i] = x[i] + c;
    }
    Tape tape;
    auto a = values(tape, tape.softmax(vec(tape, x)));
    auto b = values(tape, tape.softmax(vec(tape, y)));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Backward, SumOfSigmoid) {
  DiffArray w(Shape{1}, {0.0});
  Tape tape;
  tape.backward(tape.sum(tape.sigmoid(tape.param(w))));
  EXPECT_DOUBLE_EQ(w.grad[0], 0.25);
}

TEST(Backward, Square) {
  DiffArray w(Shape{1}, {3.0});
  Tape tape;
  Var x = tape.param(w);
  tape.backward(tape.dot(x, x));
  EXPECT_DOUBLE_EQ(w.grad[0], 6.0);
}

TEST(Backward, NonParticipatingParameterGetsZero) {
  DiffArray used(Shape{2}, {1.0, 2.0});
  DiffArray unused(Shape{3}, {1.0, 2.0, 3.0});
  Tape tape;
  Var a = tape.param(used);
  tape.param(unused);
  tape.backward(tape.sum(a));
  EXPECT_EQ(used.grad, (std::vector<double>{1, 1}));
  EXPECT_EQ(unused.grad, (std::vector<double>{0, 0, 0}));
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  Var v = vec(tape, {1, 2});
  try {
    tape.backward(v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotScalar);
  }
}

TEST(Backward, SecondBackwardThrows) {
  DiffArray w(Shape{1}, {2.0});
  Tape tape;
  Var loss = tape.sum(tape.param(w));
  tape.backward(loss);
  try {
    tape.backward(loss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TapeConsumed);
  }
  tape.reset();
  Var again = tape.sum(tape.param(w));
  EXPECT_NO_THROW(tape.backward(again));
}

TEST(Backward, GradientIsZeroBeforeBackwardAndAfterZeroing) {
  DiffArray w(Shape{2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(w.grad, std::vector<double>(4, 0.0));
  Tape tape;
  tape.backward(tape.sum(tape.param(w)));
  EXPECT_EQ(w.grad, std::vector<double>(4, 1.0));
  w.zero_grad();
  EXPECT_EQ(w.grad, std::vector<double>(4, 0.0));
}

TEST(Backward, DeterministicAcrossIdenticalTapes) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  DiffArray W(Shape{4, 3}), x(Shape{3});
  for (double& v : W.values) v = g(rng);
  for (double& v : x.values) v = g(rng);
  auto run = [&] {
    W.zero_grad();
    x.zero_grad();
    Tape tape;
    Var h = tape.tanh(tape.matvec(tape.param(W), tape.param(x)));
    tape.backward(tape.cross_entropy(h, 2));
    return std::make_pair(W.grad, x.grad);
  };
  EXPECT_EQ(run(), run());
}

TEST(CrossEntropy, UniformLogits) {
  Tape tape;
  EXPECT_NEAR(tape.scalar_value(tape.cross_entropy(vec(tape, {0, 0, 0, 0}), 1)), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, DominantTrueClass) {
  Tape tape;
  EXPECT_LT(tape.scalar_value(tape.cross_entropy(vec(tape, {900, 0, -3}), 0)), 1e-300);
}

TEST(CrossEntropy, TwoLogits) {
  Tape tape;
  EXPECT_NEAR(tape.scalar_value(tape.cross_entropy(vec(tape, {0, 10}), 0)),
              10.0 + std::log1p(std::exp(-10.0)), 1e-12);
  EXPECT_NEAR(10.0 + std::log1p(std::exp(-10.0)), 10.0000454, 1e-7);
}

TEST(CrossEntropy, LabelOutOfRange) {
  Tape tape;
  try {
    tape.cross_entropy(vec(tape, {0, 0}), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LabelOutOfRange);
  }
}

TEST(Outer, RowMajorRgbRows) {
  Tape tape;
  EXPECT_EQ(values(tape, tape.outer(vec(tape, {1, 0}), vec(tape, {0, 1}))),
            (std::vector<double>{0, 1, 0, 0}));
}

TEST(FiniteDiff, LinearIsExact) {
  DiffArray w(Shape{1}, {0.7});
  std::vector<DiffArray*> ps{&w};
  auto r = finite_diff_check([&](auto& tape) { return tape.sum(tape.axpby(3.0, tape.param(w), 0.0, tape.param(w))); },
                             ps, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-10);
}

TEST(FiniteDiff, QuadraticSymmetricDifference) {
  DiffArray w(Shape{1}, {1.0});
  std::vector<DiffArray*> ps{&w};
  auto r = finite_diff_check(
      [&](auto& tape) {
        Var x = tape.param(w);
        return tape.dot(x, x);
      },
      ps, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(FiniteDiff, RestoresValuesAndLeavesGradients) {
  DiffArray w(Shape{3}, {0.1, -0.2, 0.3});
  w.grad = {9, 9, 9};
  std::vector<DiffArray*> ps{&w};
  finite_diff_check([&](auto& tape) { return tape.sum(tape.tanh(tape.param(w))); }, ps, 1e-5);
  EXPECT_EQ(w.values, (std::vector<double>{0.1, -0.2, 0.3}));
  EXPECT_EQ(w.grad, (std::vector<double>{9, 9, 9}));
}

TEST(FiniteDiff, NonDeterministicFunctionRejected) {
  DiffArray w(Shape{1}, {1.0});
  std::vector<DiffArray*> ps{&w};
  int calls = 0;
  try {
    finite_diff_check(
        [&](auto& tape) { return tape.sum(tape.axpby(1.0, tape.param(w), 0.0, tape.scalar(++calls))); }, ps,
        1e-5);
    SUCCEED();
  } catch (...) {
    FAIL() << "a zero-weighted term must not count as non-determinism";
  }
  try {
    finite_diff_check([&](auto& tape) { return tape.sum(tape.add(tape.param(w), tape.scalar(++calls))); },
                      ps, 1e-5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonDeterministic);
  }
}

TEST(FiniteDiff, InvalidEpsilon) {
  DiffArray w(Shape{1}, {1.0});
  std::vector<DiffArray*> ps{&w};
  EXPECT_THROW(finite_diff_check([&](auto& tape) { return tape.sum(tape.param(w)); }, ps, 0.0), Error);
}

TEST(FiniteDiffProperty, RandomComposedExpressions) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  std::normal_distribution<double> g(0.0, 0.8);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = dim(rng), n = dim(rng);
    DiffArray W(Shape{m, n}), x(Shape{n}), b(Shape{m}), u(Shape{m});
    for (DiffArray* a : {&W, &x, &b, &u})
      for (double& v : a->values) v = g(rng);
    std::vector<DiffArray*> ps{&W, &x, &b, &u};
    auto r = finite_diff_check(
        [&](auto& tape) {
          Var h = tape.tanh(tape.add(tape.matvec(tape.param(W), tape.param(x)), tape.param(b)));
          Var s = tape.sigmoid(tape.mul(h, tape.param(u)));
          Var z = tape.softmax(s);
          Var o = tape.outer(z, tape.sub(s, h));
          return tape.add(tape.sum(o), tape.cross_entropy(tape.scale(h, tape.dot(z, s)), 0));
        },
        ps, 1e-5);
    worst = std::max(worst, r.max_relative_error);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(DiffArray, ValidateRejectsNonFinite) {
  DiffArray a(Shape{2}, {1.0, std::nan("")});
  try {
    a.validate("a");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
  EXPECT_THROW(DiffArray(Shape{2, 2}, {1, 2, 3}), Error);
}
