#include <Eigen/SVD>
#include <random>
#include <sstream>

#include "doctest.h"
#include "teff/errors.hpp"
#include "teff/pca.hpp"

using namespace teff;

namespace {

FeatureMap random_map(int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  FeatureMap m(h, w, c);
  // Anisotropic: channel i scaled by (i + 1).
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col)
      for (int ch = 0; ch < c; ++ch) m.at(r, col, ch) = n(rng) * (ch + 1) + 0.5f * ch;
  return m;
}

}  // namespace

TEST_CASE("PCA agrees with an SVD of the centered data") {
  const std::vector<FeatureMap> maps{random_map(6, 7, 5, 1), random_map(6, 7, 5, 2)};
  const PcaModel model = fit_pca(maps, {}, 3);

  Eigen::MatrixXd x(84, 5);
  int row = 0;
  for (const auto& m : maps)
    for (std::size_t p = 0; p < m.pixel_count(); ++p, ++row)
      for (int c = 0; c < 5; ++c) x(row, c) = m.data()[p * 5 + c];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);

  CHECK((model.mean.transpose() - mean).cwiseAbs().maxCoeff() < 1e-9);
  for (int i = 0; i < 5; ++i) {
    const double s = svd.singularValues()[i];
    CHECK(model.eigenvalues[i] == doctest::Approx(s * s / 84.0).epsilon(1e-9));
  }
  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXd v = svd.matrixV().col(i);
    CHECK(std::abs(std::abs(model.components.row(i).dot(v)) - 1.0) < 1e-9);
  }
  CHECK(model.degenerate == 0);
  CHECK(model.explained_variance_ratio() > 0.0);
  CHECK(model.explained_variance_ratio() <= 1.0);

  const FeatureMap proj = project(maps[0], model);
  CHECK(proj.channels() == 3);
  // Projections are centered over the pooled data, and the first one carries the most variance.
  double var0 = 0.0, var2 = 0.0;
  for (std::size_t p = 0; p < proj.pixel_count(); ++p) {
    var0 += proj.data()[p * 3] * proj.data()[p * 3];
    var2 += proj.data()[p * 3 + 2] * proj.data()[p * 3 + 2];
  }
  CHECK(var0 > var2);
}

TEST_CASE("masked PCA ignores background and zeroes it") {
  FeatureMap m = random_map(4, 4, 4, 3);
  std::vector<std::uint8_t> mask(16, 1);
  for (int i = 0; i < 4; ++i) {
    mask[i] = 0;
    for (int c = 0; c < 4; ++c) m.data()[i * 4 + c] = 1000.0f;
  }
  const std::vector<FeatureMap> maps{m};
  const std::vector<std::vector<std::uint8_t>> masks{mask};
  const PcaModel model = fit_pca(maps, masks, 3);
  CHECK(model.mean.maxCoeff() < 100.0);
  const FeatureMap proj = project(m, model, mask);
  for (int c = 0; c < 3; ++c) CHECK(proj.data()[c] == 0.0f);
}

TEST_CASE("degenerate components become zero channels") {
  FeatureMap m(3, 3, 4);
  for (std::size_t p = 0; p < m.pixel_count(); ++p) m.data()[p * 4] = static_cast<float>(p);
  const std::vector<FeatureMap> maps{m};
  const PcaModel model = fit_pca(maps, {}, 3);
  CHECK(model.degenerate == 2);
  CHECK(model.components.row(1).norm() == 0.0);
  CHECK(model.explained_variance_ratio() == doctest::Approx(1.0));
}

TEST_CASE("PCA input checks") {
  const std::vector<FeatureMap> two{FeatureMap(2, 2, 2, 1.0f)};
  CHECK_THROWS_AS(fit_pca(two, {}, 3), ValidationError);
  const std::vector<FeatureMap> mixed{FeatureMap(2, 2, 4), FeatureMap(2, 2, 5)};
  CHECK_THROWS_AS(fit_pca(mixed, {}, 3), DimensionError);
  const std::vector<FeatureMap> one{random_map(2, 2, 4, 1)};
  const std::vector<std::vector<std::uint8_t>> none{std::vector<std::uint8_t>(4, 0)};
  CHECK_THROWS_AS(fit_pca(one, none, 3), ValidationError);
}

TEST_CASE("raw feature format") {
  const FeatureMap m = random_map(3, 5, 7, 8);
  std::stringstream ss;
  write_raw_features(ss, m);
  const std::string bytes = ss.str();
  CHECK(bytes.size() == 12 + 3 * 5 * 7 * 4);
  std::stringstream in(bytes);
  CHECK(read_raw_features(in) == m);
  std::stringstream extra(bytes + "x");
  CHECK_THROWS_AS(read_raw_features(extra), FormatError);
  std::stringstream shortfile(bytes.substr(0, 20));
  CHECK_THROWS_AS(read_raw_features(shortfile), FormatError);

  FeatureMap mask(1, 3, 1);
  mask.data()[0] = 0.2f;
  mask.data()[1] = 0.9f;
  mask.data()[2] = 1.0f;
  CHECK(mask_from_map(mask) == std::vector<std::uint8_t>{0, 1, 1});
}
