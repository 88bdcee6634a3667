#include <doctest.h>

#include <cmath>

#include "flowi2i/data.hpp"
#include "flowi2i/errors.hpp"
#include "flowi2i/features.hpp"
#include "flowi2i/metrics.hpp"
#include "oracles.hpp"

using namespace flowi2i;

using oracle::random_features;

TEST_CASE("SSIM of an image with itself is one") {
  const ImageGrid a = generate_phantom(1, 64);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mae_normed(a, a) == 0.0);
}

TEST_CASE("SSIM agrees with the direct windowed oracle") {
  const ImageGrid a = generate_phantom(2, 48);
  ImageGrid b = generate_phantom(3, 48);
  CHECK(std::fabs(ssim(a, b) - oracle::ssim(a, b)) <= 1e-6);
  Rng rng(4);
  ImageGrid noisy = a;
  for (auto& v : noisy.values()) v = std::clamp(v + 0.05f * static_cast<float>(standard_normal(rng)), 0.0f, 1.0f);
  CHECK(std::fabs(ssim(a, noisy) - oracle::ssim(a, noisy)) <= 1e-6);
}

TEST_CASE("SSIM and MAE work on the declared ranges") {
  const ImageGrid a = generate_phantom(5, 32);
  const ImageGrid signed_a = a.remapped(kSignedRange);
  CHECK(ssim(a, signed_a) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mae_normed(a, signed_a) <= 1e-7);
  const ImageGrid zero(32, 32, kUnitRange, 0.0f);
  const ImageGrid one(32, 32, kUnitRange, 1.0f);
  CHECK(mae_normed(zero, one) == 1.0);
  CHECK_THROWS_AS(ssim(a, ImageGrid(16, 16)), ShapeError);
  CHECK_THROWS_AS(ssim(ImageGrid(8, 8), ImageGrid(8, 8)), ParameterError);
  SsimSpec even;
  even.window_size = 10;
  CHECK_THROWS_AS(ssim(a, a, even), ParameterError);
}

TEST_CASE("Frechet distance oracles") {
  FeatureStats p{Eigen::Vector2d(1.0, 2.0), Eigen::Matrix2d::Identity() * 3.0, 100};
  FeatureStats q{Eigen::Vector2d(4.0, -2.0), Eigen::Matrix2d::Identity() * 3.0, 100};
  CHECK(std::fabs(frechet_distance(p, q) - 25.0) <= 1e-8);

  FeatureStats r{Eigen::Vector2d::Zero(), Eigen::Vector2d(1.0, 4.0).asDiagonal(), 10};
  FeatureStats s{Eigen::Vector2d::Zero(), Eigen::Vector2d(4.0, 1.0).asDiagonal(), 10};
  // (1 + 4) + (4 + 1) - 2 (2 + 2) = 2
  CHECK(std::fabs(frechet_distance(r, s) - 2.0) <= 1e-8);

  const FeatureStats self = fit_stats(random_features(30, 64, 7));  // rank deficient
  CHECK(std::fabs(frechet_distance(self, self)) <= 1e-6);
  FeatureStats bad = p;
  bad.mean = Eigen::Vector3d::Zero();
  CHECK_THROWS_AS(frechet_distance(bad, q), ShapeError);
}

TEST_CASE("fit_stats uses the unbiased covariance") {
  Eigen::MatrixXd f(3, 1);
  f << 1.0, 2.0, 3.0;
  const FeatureStats s = fit_stats(f);
  CHECK(s.mean(0) == doctest::Approx(2.0));
  CHECK(s.cov(0, 0) == doctest::Approx(1.0));
  CHECK(s.count == 3);
}

TEST_CASE("KID agrees with the brute-force kernel sum") {
  const Eigen::MatrixXd a = random_features(20, 8, 11);
  const Eigen::MatrixXd b = random_features(20, 8, 12, 0.3);
  CHECK(std::fabs(mmd2_unbiased(a, b) - oracle::mmd2(a, b)) <= 1e-10);
  CHECK(kid_kernel(a.row(0), b.row(1)) == doctest::Approx(std::pow(a.row(0).dot(b.row(1)) / 8.0 + 1.0, 3)));
}

TEST_CASE("KID split-half of one distribution is centred on zero") {
  int inside = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::MatrixXd all = random_features(200, 16, 1000 + trial);
    const KidResult r = kid(all.topRows(100), all.bottomRows(100), 50, 20, trial);
    if (std::fabs(r.mean) <= 3.0 * r.std) ++inside;
  }
  CHECK(inside >= 38);
}

TEST_CASE("KID is deterministic and separates shifted distributions") {
  const Eigen::MatrixXd a = random_features(100, 16, 21);
  const Eigen::MatrixXd b = random_features(100, 16, 22, 1.0);
  const KidResult r1 = kid(a, b, 50, 10, 3);
  const KidResult r2 = kid(a, b, 50, 10, 3);
  CHECK(r1.mean == r2.mean);
  CHECK(r1.std == r2.std);
  CHECK(r1.mean > 3.0 * r1.std);
  CHECK(format_kid({0.023725, 0.000856}) == "0.023725 ± 0.000856");
  CHECK_THROWS_AS(kid(a, b, 200, 10, 3), ParameterError);
}

TEST_CASE("random conv extractor is deterministic and sized") {
  const RandomConvExtractor ex(1);
  const ImageGrid img = generate_phantom(9, 64);
  const Eigen::RowVectorXd f = ex.extract(img);
  CHECK(f.size() == 64);
  CHECK((f - ex.extract(img)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f - RandomConvExtractor(1).extract(img)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f - ex.extract(generate_phantom(10, 64))).cwiseAbs().maxCoeff() > 0.0);
  const Eigen::MatrixXd m = extract_features({img, img}, ex);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 64);
}
