#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cam/attention.hpp"
#include "oracle.hpp"

using namespace cam;
using oracle::Vec;

namespace {

Vec values(const Tape& tape, Var v) {
  auto s = tape.value(v);
  return {s.begin(), s.end()};
}

std::vector<Vec> random_states(std::size_t T, std::size_t H, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<Vec> hs(T, Vec(H));
  for (Vec& h : hs)
    for (double& x : h) x = g(rng);
  return hs;
}

std::vector<Var> record(Tape& tape, const std::vector<Vec>& hs) {
  std::vector<Var> out;
  for (const Vec& h : hs) out.push_back(tape.constant(h));
  return out;
}

AttentionParams scrambled(std::size_t H, std::size_t A, std::mt19937_64& rng) {
  AttentionParams p = AttentionParams::zeros(H, A);
  oracle::scramble(p, rng, 1.0);
  return p;
}

}  // namespace

TEST(AttentionScores, SingleFrameIsOne) {
  std::mt19937_64 rng(0);
  AttentionParams p = scrambled(3, 3, rng);
  Tape tape;
  auto hs = record(tape, random_states(1, 3, rng));
  EXPECT_EQ(values(tape, attention_scores(tape, hs, p)), Vec{1.0});
}

TEST(AttentionScores, IdenticalStatesGiveUniform) {
  std::mt19937_64 rng(1);
  AttentionParams p = scrambled(3, 3, rng);
  const Vec h = random_states(1, 3, rng)[0];
  Tape tape;
  auto hs = record(tape, std::vector<Vec>(5, h));
  for (double z : values(tape, attention_scores(tape, hs, p))) EXPECT_NEAR(z, 0.2, 1e-15);
}

TEST(AttentionScores, MatchesDirectFormula) {
  std::mt19937_64 rng(0);
  AttentionParams p = scrambled(3, 3, rng);
  const auto states = random_states(4, 3, rng);
  Tape tape;
  auto hs = record(tape, states);
  const Vec got = values(tape, attention_scores(tape, hs, p));
  const Vec want = oracle::attention(states, p);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(got[t], want[t], 1e-12);
}

TEST(AttentionScores, EmptyInputThrows) {
  AttentionParams p = AttentionParams::zeros(2, 2);
  Tape tape;
  std::vector<Var> none;
  try {
    attention_scores(tape, none, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(AttentionProperty, TracesAreDistributions) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> len(1, 20);
  for (int trial = 0; trial < 300; ++trial) {
    AttentionParams p = scrambled(4, 3, rng);
    oracle::scramble(p, rng, 5.0);
    Tape tape;
    auto hs = record(tape, random_states(len(rng), 4, rng));
    AttentionTrace z = to_trace(tape, attention_scores(tape, hs, p));
    EXPECT_NO_THROW(z.validate(1e-9));
  }
}

TEST(AttentionProperty, NegatingContextInvertsOrdering) {
  // flipping u_w negates every logit, so the frame ranking reverses
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    AttentionParams p = scrambled(3, 4, rng);
    AttentionParams q = p;
    for (double& u : q.u_w.values) u = -u;
    const auto states = random_states(6, 3, rng);
    Tape tape;
    auto hs = record(tape, states);
    const Vec a = values(tape, attention_scores(tape, hs, p));
    const Vec b = values(tape, attention_scores(tape, hs, q));
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        if (a[i] > a[j] * (1 + 1e-9)) EXPECT_LT(b[i], b[j]);
  }
}

TEST(Attend, OneHotSelects) {
  std::mt19937_64 rng(4);
  const auto states = random_states(4, 3, rng);
  Tape tape;
  auto hs = record(tape, states);
  EXPECT_EQ(values(tape, attend(tape, hs, tape.constant(Vec{0, 0, 1, 0}))), states[2]);
}

TEST(Attend, UniformAverages) {
  std::mt19937_64 rng(5);
  const auto states = random_states(4, 3, rng);
  Tape tape;
  auto hs = record(tape, states);
  const Vec r = values(tape, attend(tape, hs, tape.constant(Vec(4, 0.25))));
  for (std::size_t k = 0; k < 3; ++k) {
    double mean = 0.0;
    for (const Vec& h : states) mean += h[k] / 4.0;
    EXPECT_NEAR(r[k], mean, 1e-15);
  }
}

TEST(Attend, DirectSum) {
  Tape tape;
  auto hs = record(tape, {{1, 0}, {0, 1}});
  EXPECT_EQ(values(tape, attend(tape, hs, tape.constant(Vec{0.25, 0.75}))), (Vec{0.25, 0.75}));
}

TEST(Attend, LengthMismatchThrows) {
  Tape tape;
  auto hs = record(tape, {{1, 0}, {0, 1}});
  try {
    attend(tape, hs, tape.constant(Vec{1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(AttendProperty, LinearInTheStates) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_states(5, 3, rng), b = random_states(5, 3, rng);
    const double alpha = g(rng);
    std::vector<Vec> mix(5, Vec(3));
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t k = 0; k < 3; ++k) mix[t][k] = a[t][k] + alpha * b[t][k];
    const Vec z = oracle::softmax(random_states(1, 5, rng)[0]);
    Tape tape;
    auto ha = record(tape, a), hb = record(tape, b), hm = record(tape, mix);
    Var zt = tape.constant(z);
    const Vec ra = values(tape, attend(tape, ha, zt)), rb = values(tape, attend(tape, hb, zt));
    const Vec rm = values(tape, attend(tape, hm, zt));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(rm[k], ra[k] + alpha * rb[k], 1e-12);
  }
}

TEST(AttentionTrace, ValidateRejectsBadTraces) {
  auto code = [](AttentionTrace z) {
    try {
      z.validate();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;  // sentinel: accepted
  };
  EXPECT_EQ(code({{0.5, 0.5}}), ErrorCode::Io);
  EXPECT_EQ(code({{0.5, 0.6}}), ErrorCode::NotNormalized);
  EXPECT_EQ(code({{1.5, -0.5}}), ErrorCode::NotNormalized);
  EXPECT_EQ(code({{}}), ErrorCode::EmptyInput);
}
