#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cam/matrix.hpp"
#include "cam/random.hpp"
#include "cam/recurrent.hpp"
#include "oracle.hpp"

using namespace cam;
using oracle::Vec;

namespace {

Vec values(const Tape& tape, Var v) {
  auto s = tape.value(v);
  return {s.begin(), s.end()};
}

void expect_near(const Vec& a, const Vec& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "entry " << i;
}

Vec random_vec(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (double& x : v) x = g(rng);
  return v;
}

LstmParams scrambled_lstm(std::size_t in, std::size_t hidden, std::mt19937_64& rng) {
  LstmParams p = LstmParams::zeros(in, hidden);
  oracle::scramble(p, rng);
  return p;
}

CollaboratorParams scrambled_collab(std::size_t dr, std::size_t dd, std::size_t hidden,
                                    std::mt19937_64& rng) {
  CollaboratorParams p = CollaboratorParams::zeros(dr, dd, hidden);
  oracle::scramble(p, rng);
  return p;
}

/// Trace-like weights: positive, summing to one.
Vec random_trace(std::size_t T, std::mt19937_64& rng) {
  return oracle::softmax(random_vec(T, rng));
}

/// Collaborator weights pushed so far negative or positive that every gate
/// saturates to exactly 0 or 1 in double precision.
CollaboratorParams saturated_collab(std::size_t dr, std::size_t dd, std::size_t hidden,
                                    double value) {
  CollaboratorParams p = CollaboratorParams::zeros(dr, dd, hidden);
  for (DiffArray* a : {&p.W_rd, &p.W_dr}) std::fill(a->values.begin(), a->values.end(), value);
  return p;
}

}  // namespace

TEST(LstmStep, ZeroParamsZeroState) {
  LstmParams p = LstmParams::zeros(3, 2);
  Tape tape;
  CellState s = lstm_step(tape, tape.constant(Vec{1, -2, 3}), zero_state(tape, 2), p);
  EXPECT_EQ(values(tape, s.h), (Vec{0, 0}));
  EXPECT_EQ(values(tape, s.c), (Vec{0, 0}));
}

TEST(LstmStep, ZeroParamsCarriesHalfTheCell) {
  LstmParams p = LstmParams::zeros(2, 1);
  Tape tape;
  CellState prev{tape.constant(Vec{0}), tape.constant(Vec{1})};
  CellState s = lstm_step(tape, tape.constant(Vec{0.3, 0.4}), prev, p);
  EXPECT_DOUBLE_EQ(values(tape, s.c)[0], 0.5);
  EXPECT_DOUBLE_EQ(values(tape, s.h)[0], 0.5 * std::tanh(0.5));
  EXPECT_NEAR(values(tape, s.h)[0], 0.2311, 5e-5);
}

TEST(LstmStep, MatchesOracle) {
  Rng init = make_rng(0, 0);
  LstmParams p = LstmParams::random(3, 4, init);
  std::mt19937_64 rng(0);
  oracle::State prev{random_vec(4, rng, 0.5), random_vec(4, rng)};
  Vec x = random_vec(3, rng);
  const oracle::State want = oracle::lstm_step(x, prev, p);
  Tape tape;
  CellState got = lstm_step(tape, tape.constant(x), {tape.constant(prev.h), tape.constant(prev.c)}, p);
  expect_near(values(tape, got.h), want.h, 1e-12);
  expect_near(values(tape, got.c), want.c, 1e-12);
}

TEST(LstmEncode, SingleFrameEqualsOneStep) {
  std::mt19937_64 rng(1);
  LstmParams p = scrambled_lstm(3, 4, rng);
  Matrix x = oracle::random_matrix(1, 3, rng);
  Tape tape;
  auto xs = frames(tape, x);
  auto states = lstm_encode(tape, xs, p);
  ASSERT_EQ(states.size(), 1u);
  CellState one = lstm_step(tape, xs[0], zero_state(tape, 4), p);
  EXPECT_EQ(values(tape, states[0].h), values(tape, one.h));
  EXPECT_EQ(values(tape, states[0].c), values(tape, one.c));
}

TEST(LstmEncode, ZeroEverythingStaysZero) {
  LstmParams p = LstmParams::zeros(2, 3);
  Tape tape;
  auto xs = frames(tape, Matrix(6, 2));
  for (const CellState& s : lstm_encode(tape, xs, p)) {
    EXPECT_EQ(values(tape, s.h), Vec(3, 0.0));
    EXPECT_EQ(values(tape, s.c), Vec(3, 0.0));
  }
}

TEST(LstmEncode, MatchesUnrolledOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    LstmParams p = scrambled_lstm(3, 4, rng);
    Matrix x = oracle::random_matrix(5, 3, rng);
    auto want = oracle::lstm_encode(x, p);
    Tape tape;
    auto xs = frames(tape, x);
    auto got = lstm_encode(tape, xs, p);
    ASSERT_EQ(got.size(), 5u);
    for (std::size_t t = 0; t < 5; ++t) {
      expect_near(values(tape, got[t].h), want[t].h, 1e-12);
      expect_near(values(tape, got[t].c), want[t].c, 1e-12);
    }
  }
}

TEST(LstmEncode, EmptySequenceThrows) {
  LstmParams p = LstmParams::zeros(2, 2);
  Tape tape;
  std::vector<Var> none;
  try {
    lstm_encode(tape, std::span<const Var>(none), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(LstmProperty, HiddenBoundedByOne) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    LstmParams p = scrambled_lstm(4, 5, rng);
    oracle::scramble(p, rng, 3.0);
    Matrix x = oracle::random_matrix(8, 4, rng, 4.0);
    Tape tape;
    auto xs = frames(tape, x);
    for (const CellState& s : lstm_encode(tape, xs, p))
      for (double h : values(tape, s.h)) {
        EXPECT_GT(h, -1.0);
        EXPECT_LT(h, 1.0);
      }
  }
}

TEST(CollaboratorGates, ZeroParamsGiveHalf) {
  CollaboratorParams p = CollaboratorParams::zeros(3, 2, 4);
  std::mt19937_64 rng(2);
  Tape tape;
  auto g = collaborator_gates(tape, tape.constant(random_vec(3, rng)), tape.constant(random_vec(2, rng)),
                              tape.constant(random_vec(4, rng)), tape.constant(random_vec(4, rng)), p);
  EXPECT_EQ(values(tape, g.rgb_to_depth), Vec(4, 0.5));
  EXPECT_EQ(values(tape, g.depth_to_rgb), Vec(4, 0.5));
}

TEST(CollaboratorGates, DroppedDepthTermIgnoresDepthHistory) {
  std::mt19937_64 rng(3);
  CollaboratorParams p = scrambled_collab(3, 2, 4, rng);
  std::fill(p.W_d.values.begin(), p.W_d.values.end(), 0.0);
  const Vec xr = random_vec(3, rng), xd = random_vec(2, rng), hr = random_vec(4, rng);
  Tape tape;
  auto a = collaborator_gates(tape, tape.constant(xr), tape.constant(xd), tape.constant(hr),
                              tape.constant(random_vec(4, rng)), p);
  auto b = collaborator_gates(tape, tape.constant(xr), tape.constant(xd), tape.constant(hr),
                              tape.constant(random_vec(4, rng)), p);
  EXPECT_EQ(values(tape, a.rgb_to_depth), values(tape, b.rgb_to_depth));
}

TEST(CollaboratorGates, MatchesDirectFormula) {
  Rng init = make_rng(0, 0);
  CollaboratorParams p = CollaboratorParams::random(3, 2, 4, init);
  std::mt19937_64 rng(0);
  const Vec xr = random_vec(3, rng), xd = random_vec(2, rng);
  const Vec hr = random_vec(4, rng), hd = random_vec(4, rng);
  Tape tape;
  auto g = collaborator_gates(tape, tape.constant(xr), tape.constant(xd), tape.constant(hr),
                              tape.constant(hd), p);
  const Vec a = oracle::mv(p.W_rd, xr), b = oracle::mv(p.W_d, hd);
  const Vec c = oracle::mv(p.W_dr, xd), d = oracle::mv(p.W_r, hr);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(values(tape, g.rgb_to_depth)[k], oracle::sig(a[k] + b[k]), 1e-15);
    EXPECT_NEAR(values(tape, g.depth_to_rgb)[k], oracle::sig(c[k] + d[k]), 1e-15);
  }
}

TEST(CollaboratorGates, EntriesInUnitInterval) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    CollaboratorParams p = scrambled_collab(3, 5, 4, rng);
    Tape tape;
    auto g = collaborator_gates(tape, tape.constant(random_vec(3, rng)), tape.constant(random_vec(5, rng)),
                                tape.constant(random_vec(4, rng)), tape.constant(random_vec(4, rng)), p);
    for (Var v : {g.rgb_to_depth, g.depth_to_rgb})
      for (double x : values(tape, v)) {
        EXPECT_GT(x, 0.0);
        EXPECT_LT(x, 1.0);
      }
  }
}

TEST(MutualFilter, IdentityGate) {
  Tape tape;
  EXPECT_EQ(values(tape, mutual_filter(tape, tape.constant(Vec{1, 1}), tape.constant(Vec{2, -4}))),
            (Vec{2, -4}));
}

TEST(MutualFilter, HalfGate) {
  Tape tape;
  EXPECT_EQ(values(tape, mutual_filter(tape, tape.constant(Vec{0.5, 0.5}), tape.constant(Vec{2, -4}))),
            (Vec{1, -2}));
}

TEST(MutualFilter, ZeroCellAnnihilates) {
  Tape tape;
  EXPECT_EQ(values(tape, mutual_filter(tape, tape.constant(Vec{0.3, 0.9}), tape.constant(Vec{0, 0}))),
            (Vec{0, 0}));
}

TEST(MutualFilter, LengthMismatchThrows) {
  Tape tape;
  try {
    mutual_filter(tape, tape.constant(Vec{0.3}), tape.constant(Vec{0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(NormalizeAttentionPair, DirectRatio) {
  auto [r, d] = normalize_attention_pair(0.3, 0.1);
  EXPECT_NEAR(r, 0.75, 1e-15);
  EXPECT_NEAR(d, 0.25, 1e-15);
}

TEST(NormalizeAttentionPair, Symmetric) {
  for (double a : {1e-9, 0.2, 7.0}) {
    auto [r, d] = normalize_attention_pair(a, a);
    EXPECT_EQ(r, 0.5);
    EXPECT_EQ(d, 0.5);
  }
}

TEST(NormalizeAttentionPair, OneSided) {
  auto [r, d] = normalize_attention_pair(0.0, 0.2);
  EXPECT_EQ(r, 0.0);
  EXPECT_EQ(d, 1.0);
}

TEST(NormalizeAttentionPair, BothZeroFallsBackToHalf) {
  auto [r, d] = normalize_attention_pair(0.0, 0.0);
  EXPECT_EQ(r, 0.5);
  EXPECT_EQ(d, 0.5);
}

TEST(NormalizeAttentionPair, NegativeRejected) {
  EXPECT_THROW(normalize_attention_pair(-0.1, 0.2), Error);
}

TEST(NormalizeAttentionPairProperty, SumsToOne) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    auto [r, d] = normalize_attention_pair(u(rng), u(rng));
    EXPECT_NEAR(r + d, 1.0, 1e-12);
  }
}

TEST(CollaborateCell, RgbBoundary) {
  Tape tape;
  Var cr = tape.constant(Vec{1, 2}), crf = tape.constant(Vec{3, 4});
  Var cd = tape.constant(Vec{5, 6}), cdf = tape.constant(Vec{7, 8});
  auto out = collaborate_cell(tape, 1.0, 0.0, cr, crf, cd, cdf);
  EXPECT_EQ(values(tape, out.rgb), (Vec{1, 2}));
  EXPECT_EQ(values(tape, out.depth), (Vec{7, 8}));
}

TEST(CollaborateCell, DepthBoundary) {
  Tape tape;
  Var cr = tape.constant(Vec{1, 2}), crf = tape.constant(Vec{3, 4});
  Var cd = tape.constant(Vec{5, 6}), cdf = tape.constant(Vec{7, 8});
  auto out = collaborate_cell(tape, 0.0, 1.0, cr, crf, cd, cdf);
  EXPECT_EQ(values(tape, out.rgb), (Vec{3, 4}));
  EXPECT_EQ(values(tape, out.depth), (Vec{5, 6}));
}

TEST(CollaborateCellProperty, EqualTermsAreFixed) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec c = random_vec(5, rng), d = random_vec(5, rng);
    const double zr = u(rng);
    Tape tape;
    Var cr = tape.constant(c), cd = tape.constant(d);
    auto out = collaborate_cell(tape, zr, 1.0 - zr, cr, cr, cd, cd);
    expect_near(values(tape, out.rgb), c, 1e-12);
    expect_near(values(tape, out.depth), d, 1e-12);
  }
}

TEST(CollaborateCellProperty, ConvexCombinationBounds) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec c = random_vec(4, rng), cf = random_vec(4, rng);
    const double zr = u(rng);
    Tape tape;
    auto out = collaborate_cell(tape, zr, 1.0 - zr, tape.constant(c), tape.constant(cf),
                                tape.constant(c), tape.constant(cf));
    const Vec r = values(tape, out.rgb);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_GE(r[k], std::min(c[k], cf[k]) - 1e-12);
      EXPECT_LE(r[k], std::max(c[k], cf[k]) + 1e-12);
    }
  }
}

TEST(MarStep, IdentityGateAndRgbBoundaryReducesRgbView) {
  std::mt19937_64 rng(12);
  LstmParams lr = scrambled_lstm(3, 4, rng), ld = scrambled_lstm(2, 4, rng);
  CollaboratorParams cp = CollaboratorParams::zeros(3, 2, 4);
  const Vec xr = random_vec(3, rng), xd = random_vec(2, rng);
  const oracle::State pr{random_vec(4, rng, 0.5), random_vec(4, rng)};
  const oracle::State pd{random_vec(4, rng, 0.5), random_vec(4, rng)};
  Tape tape;
  CellState prev_r{tape.constant(pr.h), tape.constant(pr.c)};
  CellState prev_d{tape.constant(pd.h), tape.constant(pd.c)};
  MarOptions opt;
  opt.filter_rgb = false;  // the gate on the RGB cell becomes ones
  MarState s = mar_step(tape, tape.constant(xr), tape.constant(xd), prev_r, prev_d, 1.0, 0.0, lr, ld, cp, opt);
  CellState plain = lstm_step(tape, tape.constant(xr), prev_r, lr);
  EXPECT_EQ(values(tape, s.rgb.h), values(tape, plain.h));
  EXPECT_EQ(values(tape, s.rgb.c), values(tape, plain.c));
}

TEST(MarStep, IdentityGatesReduceBothViewsForAnyWeights) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    LstmParams lr = scrambled_lstm(3, 4, rng), ld = scrambled_lstm(2, 4, rng);
    CollaboratorParams cp = scrambled_collab(3, 2, 4, rng);
    MarOptions off{false, false, true};
    Tape tape;
    Var xr = tape.constant(random_vec(3, rng)), xd = tape.constant(random_vec(2, rng));
    CellState pr{tape.constant(random_vec(4, rng, 0.5)), tape.constant(random_vec(4, rng))};
    CellState pd{tape.constant(random_vec(4, rng, 0.5)), tape.constant(random_vec(4, rng))};
    MarState s = mar_step(tape, xr, xd, pr, pd, u(rng), u(rng), lr, ld, cp, off);
    CellState a = lstm_step(tape, xr, pr, lr), b = lstm_step(tape, xd, pd, ld);
    expect_near(values(tape, s.rgb.h), values(tape, a.h), 1e-12);
    expect_near(values(tape, s.rgb.c), values(tape, a.c), 1e-12);
    expect_near(values(tape, s.depth.h), values(tape, b.h), 1e-12);
    expect_near(values(tape, s.depth.c), values(tape, b.c), 1e-12);
  }
}

TEST(MarStep, SaturatedGatesEqualDisabledFilters) {
  std::mt19937_64 rng(14);
  LstmParams lr = scrambled_lstm(3, 4, rng), ld = scrambled_lstm(3, 4, rng);
  CollaboratorParams cp = saturated_collab(3, 3, 4, 1e3);
  const Vec xr(3, 1.0), xd(3, 1.0);
  Tape tape;
  CellState z = zero_state(tape, 4);
  MarState gated = mar_step(tape, tape.constant(xr), tape.constant(xd), z, z, 0.3, 0.7, lr, ld, cp);
  MarState off = mar_step(tape, tape.constant(xr), tape.constant(xd), z, z, 0.3, 0.7, lr, ld, cp,
                          MarOptions{false, false, true});
  EXPECT_EQ(values(tape, gated.rgb.h), values(tape, off.rgb.h));
  EXPECT_EQ(values(tape, gated.depth.c), values(tape, off.depth.c));
}

TEST(MarStep, MatchesOracle) {
  Rng init = make_rng(0, 0);
  LstmParams lr = LstmParams::random(3, 4, init), ld = LstmParams::random(2, 4, init);
  CollaboratorParams cp = CollaboratorParams::random(3, 2, 4, init);
  std::mt19937_64 rng(0);
  const Vec xr = random_vec(3, rng), xd = random_vec(2, rng);
  const oracle::State pr{random_vec(4, rng, 0.5), random_vec(4, rng)};
  const oracle::State pd{random_vec(4, rng, 0.5), random_vec(4, rng)};
  for (MarOptions opt : {MarOptions{}, MarOptions{true, false, true}, MarOptions{false, true, true},
                         MarOptions{true, true, false}}) {
    const oracle::Pair want = oracle::mar_step(xr, xd, pr, pd, 0.3, 0.1, lr, ld, cp, opt);
    Tape tape;
    MarState got = mar_step(tape, tape.constant(xr), tape.constant(xd),
                            {tape.constant(pr.h), tape.constant(pr.c)},
                            {tape.constant(pd.h), tape.constant(pd.c)}, 0.3, 0.1, lr, ld, cp, opt);
    expect_near(values(tape, got.rgb.h), want.r.h, 1e-12);
    expect_near(values(tape, got.rgb.c), want.r.c, 1e-12);
    expect_near(values(tape, got.depth.h), want.d.h, 1e-12);
    expect_near(values(tape, got.depth.c), want.d.c, 1e-12);
  }
}

TEST(MarStep, HiddenSizeMismatchThrows) {
  LstmParams lr = LstmParams::zeros(3, 4), ld = LstmParams::zeros(3, 5);
  CollaboratorParams cp = CollaboratorParams::zeros(3, 3, 4);
  Tape tape;
  Var x = tape.constant(Vec{0, 0, 0});
  try {
    mar_step(tape, x, x, zero_state(tape, 4), zero_state(tape, 5), 0.5, 0.5, lr, ld, cp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(MarEncode, SingleFrameEqualsOneStep) {
  std::mt19937_64 rng(15);
  LstmParams lr = scrambled_lstm(3, 4, rng), ld = scrambled_lstm(2, 4, rng);
  CollaboratorParams cp = scrambled_collab(3, 2, 4, rng);
  Matrix xr = oracle::random_matrix(1, 3, rng), xd = oracle::random_matrix(1, 2, rng);
  Tape tape;
  auto fr = frames(tape, xr), fd = frames(tape, xd);
  const Vec one{1.0};
  MarSequence seq = mar_encode(tape, fr, fd, one, one, lr, ld, cp);
  MarState s = mar_step(tape, fr[0], fd[0], zero_state(tape, 4), zero_state(tape, 4), 1.0, 1.0, lr, ld, cp);
  EXPECT_EQ(values(tape, seq.rgb[0].h), values(tape, s.rgb.h));
  EXPECT_EQ(values(tape, seq.depth[0].c), values(tape, s.depth.c));
}

TEST(MarEncode, IdenticalTracesWeighEvenly) {
  // equal traces must behave exactly like constant (0.5, 0.5) weights
  std::mt19937_64 rng(16);
  LstmParams lr = scrambled_lstm(3, 4, rng), ld = scrambled_lstm(2, 4, rng);
  CollaboratorParams cp = scrambled_collab(3, 2, 4, rng);
  Matrix xr = oracle::random_matrix(6, 3, rng), xd = oracle::random_matrix(6, 2, rng);
  const Vec z = random_trace(6, rng);
  const auto want = oracle::mar_encode(xr, xd, Vec(6, 0.5), Vec(6, 0.5), lr, ld, cp);
  Tape tape;
  auto fr = frames(tape, xr), fd = frames(tape, xd);
  MarSequence seq = mar_encode(tape, fr, fd, z, z, lr, ld, cp);
  for (std::size_t t = 0; t < 6; ++t) {
    expect_near(values(tape, seq.rgb[t].h), want[t].r.h, 1e-12);
    expect_near(values(tape, seq.depth[t].h), want[t].d.h, 1e-12);
  }
}

TEST(MarEncode, MatchesUnrolledOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    LstmParams lr = scrambled_lstm(3, 4, rng), ld = scrambled_lstm(2, 4, rng);
    CollaboratorParams cp = scrambled_collab(3, 2, 4, rng);
    Matrix xr = oracle::random_matrix(5, 3, rng), xd = oracle::random_matrix(5, 2, rng);
    const Vec zr = random_trace(5, rng), zd = random_trace(5, rng);
    const auto want = oracle::mar_encode(xr, xd, zr, zd, lr, ld, cp);
    Tape tape;
    auto fr = frames(tape, xr), fd = frames(tape, xd);
    MarSequence got = mar_encode(tape, fr, fd, zr, zd, lr, ld, cp);
    for (std::size_t t = 0; t < 5; ++t) {
      expect_near(values(tape, got.rgb[t].h), want[t].r.h, 1e-12);
      expect_near(values(tape, got.rgb[t].c), want[t].r.c, 1e-12);
      expect_near(values(tape, got.depth[t].h), want[t].d.h, 1e-12);
      expect_near(values(tape, got.depth[t].c), want[t].d.c, 1e-12);
    }
  }
}

TEST(MarEncode, LengthMismatchThrows) {
  LstmParams lr = LstmParams::zeros(2, 3), ld = LstmParams::zeros(2, 3);
  CollaboratorParams cp = CollaboratorParams::zeros(2, 2, 3);
  Tape tape;
  auto fr = frames(tape, Matrix(4, 2)), fd = frames(tape, Matrix(4, 2));
  const Vec z4(4, 0.25), z3(3, 1.0 / 3.0);
  try {
    mar_encode(tape, fr, fd, z4, z3, lr, ld, cp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(MarReduction, EncodesAsPlainLstmAtTheBoundaries) {
  // disabled filters and one-hot weights per frame: both views must equal
  // independent LSTM runs
  std::mt19937_64 rng(18);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 50; ++trial) {
    LstmParams lr = scrambled_lstm(3, 4, rng), ld = scrambled_lstm(2, 4, rng);
    CollaboratorParams cp = scrambled_collab(3, 2, 4, rng);
    Matrix xr = oracle::random_matrix(6, 3, rng), xd = oracle::random_matrix(6, 2, rng);
    Vec zr(6), zd(6);
    for (std::size_t t = 0; t < 6; ++t) {
      zr[t] = coin(rng) ? 1.0 : 0.0;
      zd[t] = 1.0 - zr[t];
    }
    Tape tape;
    auto fr = frames(tape, xr), fd = frames(tape, xd);
    MarSequence seq = mar_encode(tape, fr, fd, zr, zd, lr, ld, cp, MarOptions{false, false, true});
    auto a = lstm_encode(tape, fr, lr), b = lstm_encode(tape, fd, ld);
    for (std::size_t t = 0; t < 6; ++t) {
      expect_near(values(tape, seq.rgb[t].h), values(tape, a[t].h), 1e-12);
      expect_near(values(tape, seq.depth[t].h), values(tape, b[t].h), 1e-12);
    }
  }
}
