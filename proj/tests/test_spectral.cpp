#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rxtriage/model_io.hpp"
#include "rxtriage/spectral.hpp"
#include "test_support.hpp"

using namespace rxtriage;
using rxtriage::testing::DenseReference;

namespace {

PixelCube cube_from(const std::vector<std::vector<double>>& pixels, std::size_t width, std::size_t height) {
  PixelCube cube;
  cube.width = width;
  cube.height = height;
  cube.n_bands = pixels.front().size();
  cube.data = rxtriage::testing::flatten(pixels);
  return cube;
}

const std::vector<std::vector<double>> kSquare{{0, 0}, {2, 0}, {0, 2}, {2, 2}};

}  // namespace

TEST(FitBackground, FourPointSquare) {
  const auto flat = rxtriage::testing::flatten(kSquare);
  const auto model = fit_background(BufferPixelSource(flat, 2), 0.0);
  const DenseReference ref(kSquare, 0.0);
  ASSERT_EQ(model.n_bands, 2u);
  EXPECT_EQ(model.training_pixel_count, 4u);
  EXPECT_EQ(model.mu, (std::vector<double>{1, 1}));
  EXPECT_EQ(model.sigma(0, 0), 1.0);
  EXPECT_EQ(model.sigma(1, 1), 1.0);
  EXPECT_EQ(model.sigma(0, 1), 0.0);
  EXPECT_EQ(model.sigma(1, 0), 0.0);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(model.mu[i], ref.mean[i]);
    for (int j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(model.sigma(i, j), ref.cov(i, j));
  }
  ASSERT_TRUE(model.score_percentiles);
  EXPECT_DOUBLE_EQ(model.score_percentiles->max, 2.0);
  EXPECT_DOUBLE_EQ(model.score_percentiles->p01, 2.0);
}

TEST(FitBackground, ConstantDataIsSingular) {
  std::vector<double> flat(20, 5.0);
  try {
    fit_background(BufferPixelSource(flat, 2), 0.0);
    FAIL() << "expected SingularCovariance";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularCovariance);
    EXPECT_NE(std::string(e.what()).find("raise ridge_lambda"), std::string::npos);
  }
}

TEST(FitBackground, TooFewPixels) {
  std::vector<double> two_pixels{0, 1, 2, 3};
  EXPECT_THROW(
      {
        try {
          fit_background(BufferPixelSource(two_pixels, 2), 0.0);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::TooFewPixels);
          throw;
        }
      },
      Error);
  std::vector<double> none;
  try {
    fit_background(BufferPixelSource(none, 6), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewPixels);
  }
}

TEST(FitBackground, NonFiniteAndBadLambda) {
  std::vector<double> flat{0, 0, 1, NAN, 2, 2, 3, 1};
  try {
    fit_background(BufferPixelSource(flat, 2), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteInput);
  }
  const auto sq = rxtriage::testing::flatten(kSquare);
  EXPECT_THROW(fit_background(BufferPixelSource(sq, 2), -1.0), Error);
}

TEST(FitBackground, SixBandModel) {
  std::mt19937_64 rng(3);
  const auto data = rxtriage::testing::random_dataset(rng, 200, 6);
  const auto flat = rxtriage::testing::flatten(data);
  const auto model = fit_background(BufferPixelSource(flat, 6), 1e-6);
  EXPECT_EQ(model.n_bands, 6u);
  EXPECT_EQ(model.sigma_inv.size(), 6u);
}

TEST(FitBackground, RidgeRelationHolds) {
  std::mt19937_64 rng(11);
  const auto data = rxtriage::testing::random_dataset(rng, 300, 5);
  const auto flat = rxtriage::testing::flatten(data);
  const auto model = fit_background(BufferPixelSource(flat, 5), 0.01);
  SquareMatrix reg = model.sigma;
  for (std::size_t i = 0; i < 5; ++i) reg(i, i) += model.ridge();
  const auto prod = reg * model.sigma_inv;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_NEAR(prod(i, j), i == j ? 1.0 : 0.0, 1e-6);
      EXPECT_NEAR(model.sigma(i, j), model.sigma(j, i), 1e-9);
      EXPECT_NEAR(model.sigma_inv(i, j), model.sigma_inv(j, i), 1e-9);
    }
  const auto& p = *model.score_percentiles;
  EXPECT_LE(p.p01, p.p50);
  EXPECT_LE(p.p50, p.p99);
  EXPECT_LE(p.p99, p.p999);
  EXPECT_LE(p.p999, p.max);
}

TEST(FitBackground, RepeatedFitsAreBitwiseIdentical) {
  std::mt19937_64 rng(5);
  const auto flat = rxtriage::testing::flatten(rxtriage::testing::random_dataset(rng, 500, 6));
  const auto a = fit_background(BufferPixelSource(flat, 6), 1e-6);
  const auto b = fit_background(BufferPixelSource(flat, 6), 1e-6);
  EXPECT_EQ(a, b);
  EXPECT_EQ(model_to_json(a).dump(2), model_to_json(b).dump(2));
}

TEST(RxScore, ZeroAtMean) {
  std::mt19937_64 rng(9);
  const auto flat = rxtriage::testing::flatten(rxtriage::testing::random_dataset(rng, 100, 4));
  const auto model = fit_background(BufferPixelSource(flat, 4), 0.0);
  EXPECT_LT(std::abs(rx_score(model.mu, model)), 1e-12);
}

TEST(RxScore, IdentityCovarianceIsSquaredNorm) {
  const auto model = rxtriage::testing::model_from_moments({0, 0}, SquareMatrix::identity(2));
  EXPECT_EQ(rx_score(std::vector<double>{3, 4}, model), 25.0);
}

TEST(RxScore, CorrelatedTwoByTwo) {
  SquareMatrix sigma(2);
  sigma(0, 0) = 2; sigma(0, 1) = 1;
  sigma(1, 0) = 1; sigma(1, 1) = 2;
  const auto model = rxtriage::testing::model_from_moments({1, 2}, sigma);
  // Oracle: explicit inverse (1/3)[[2,-1],[-1,2]] applied to d = (1, 2).
  const double d0 = 1.0, d1 = 2.0;
  const double oracle = (2 * d0 * d0 - 2 * d0 * d1 + 2 * d1 * d1) / 3.0;
  EXPECT_EQ(oracle, 2.0);
  EXPECT_NEAR(rx_score(std::vector<double>{2, 4}, model), oracle, 1e-12);
}

TEST(RxScore, DimensionMismatch) {
  const auto model = rxtriage::testing::model_from_moments({0, 0}, SquareMatrix::identity(2));
  try {
    rx_score(std::vector<double>{1, 2, 3}, model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(ScoreCube, SinglePixelAtMean) {
  const auto model = rxtriage::testing::model_from_moments({0.5, 0.25}, SquareMatrix::identity(2));
  const auto map = score_cube(cube_from({{0.5, 0.25}}, 1, 1), model);
  ASSERT_EQ(map.scores.size(), 1u);
  EXPECT_EQ(map.scores[0], 0.0);
}

TEST(ScoreCube, SquareExampleScoresTwoEverywhere) {
  const auto cube = cube_from(kSquare, 2, 2);
  const auto model = fit_background(cube, 0.0);
  const auto map = score_cube(cube, model);
  ASSERT_EQ(map.width, 2u);
  ASSERT_EQ(map.height, 2u);
  for (double s : map.scores) EXPECT_NEAR(s, 2.0, 1e-12);
}

TEST(ScoreCube, AnyResolution) {
  const auto model = rxtriage::testing::model_from_moments({0, 0, 0}, SquareMatrix::identity(3));
  for (auto [w, h] : {std::pair<std::size_t, std::size_t>{1, 7}, {13, 1}, {140, 100}, {3, 5}}) {
    PixelCube cube;
    cube.width = w;
    cube.height = h;
    cube.n_bands = 3;
    cube.data.assign(w * h * 3, 0.1);
    const auto map = score_cube(cube, model);
    EXPECT_EQ(map.width, w);
    EXPECT_EQ(map.height, h);
    EXPECT_EQ(map.scores.size(), w * h);
  }
}

TEST(ScoreCube, PerPixelEqualsRxScore) {
  std::mt19937_64 rng(21);
  const auto pixels = rxtriage::testing::random_dataset(rng, 35, 3);
  const auto cube = cube_from(pixels, 7, 5);
  const auto model = fit_background(cube, 1e-3);
  const auto map = score_cube(cube, model);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(map.at(r, c), rx_score(cube.pixel(r, c), model));
}

TEST(ScoreCube, Mismatches) {
  const auto model = rxtriage::testing::model_from_moments({0, 0}, SquareMatrix::identity(2));
  auto cube = cube_from({{0, 0, 0}}, 1, 1);
  try {
    score_cube(cube, model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  cube = cube_from({{0, 0}}, 1, 1);
  cube.brightness_corrected = true;
  try {
    score_cube(cube, model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorrectionModeMismatch);
  }
}

TEST(FitLocal, ConstantCubeIsSingular) {
  PixelCube cube;
  cube.width = 3;
  cube.height = 3;
  cube.n_bands = 2;
  cube.data.assign(18, 0.4);
  try {
    fit_local(cube, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularCovariance);
  }
}

TEST(FitLocal, GaussianNoiseMeanScoreIsBandCount) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.5, 0.1);
  PixelCube cube;
  cube.width = 40;
  cube.height = 30;
  cube.n_bands = 6;
  cube.data.resize(40 * 30 * 6);
  for (auto& v : cube.data) v = normal(rng);
  const auto model = fit_local(cube, 0.0);
  const auto map = score_cube(cube, model);
  double sum = 0.0;
  for (double s : map.scores) sum += s;
  EXPECT_NEAR(sum / static_cast<double>(map.scores.size()), 6.0, 1e-6);
}

TEST(FitLocal, HandEnumerated3x3MatchesTwoPassOracle) {
  const std::vector<std::vector<double>> pixels{{0.1, 0.2}, {0.3, 0.1}, {0.2, 0.4}, {0.5, 0.5}, {0.9, 0.3},
                                                {0.4, 0.8}, {0.0, 0.1}, {0.6, 0.2}, {0.7, 0.9}};
  // Two-pass oracle, written out longhand.
  double m0 = 0, m1 = 0;
  for (const auto& p : pixels) { m0 += p[0]; m1 += p[1]; }
  m0 /= 9; m1 /= 9;
  double c00 = 0, c01 = 0, c11 = 0;
  for (const auto& p : pixels) {
    c00 += (p[0] - m0) * (p[0] - m0);
    c01 += (p[0] - m0) * (p[1] - m1);
    c11 += (p[1] - m1) * (p[1] - m1);
  }
  c00 /= 9; c01 /= 9; c11 /= 9;

  const auto model = fit_local(cube_from(pixels, 3, 3), 0.0);
  EXPECT_NEAR(model.mu[0], m0, 1e-15);
  EXPECT_NEAR(model.mu[1], m1, 1e-15);
  EXPECT_NEAR(model.sigma(0, 0), c00, 1e-15);
  EXPECT_NEAR(model.sigma(0, 1), c01, 1e-15);
  EXPECT_NEAR(model.sigma(1, 1), c11, 1e-15);
  EXPECT_EQ(model.training_pixel_count, 9u);
}

TEST(Properties, OracleEquivalenceSmallRandom) {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<std::size_t> pick_n(1, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = pick_n(rng);
    std::uniform_int_distribution<std::size_t> pick_count(n + 2, 100);
    const auto pixels = rxtriage::testing::random_dataset(rng, pick_count(rng), n);
    const auto flat = rxtriage::testing::flatten(pixels);
    const auto model = fit_background(BufferPixelSource(flat, n), 0.0);
    const DenseReference ref(pixels, 0.0);
    for (const auto& p : pixels) {
      EXPECT_LE(rxtriage::testing::relative_error(rx_score(p, model), ref.score(p)), 1e-9);
    }
  }
}

TEST(Properties, NonNegativeWithRidge) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-100, 100);
  const auto flat = rxtriage::testing::flatten(rxtriage::testing::random_dataset(rng, 50, 6));
  const auto model = fit_background(BufferPixelSource(flat, 6), 1e-6);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> x(6);
    for (auto& v : x) v = u(rng);
    EXPECT_GE(rx_score(x, model), 0.0);
  }
}
