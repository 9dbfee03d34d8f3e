#include <gtest/gtest.h>

#include <Eigen/QR>

#include <numeric>

#include "histocube/classifier.hpp"
#include "histocube/window.hpp"
#include "test_support.hpp"

using namespace histocube;
using histocube::test::Rng;

namespace {

std::vector<std::vector<double>> random_histograms(Rng& rng, std::size_t m, std::size_t ny) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back(test::random_simplex(rng, ny));
  return out;
}

TrainingSet one_class(std::vector<std::vector<double>> hs) {
  TrainingSet t;
  t.value_count = hs.front().size();
  t.histograms.push_back(std::move(hs));
  return t;
}

SubspaceClassifier random_classifier(Rng& rng, std::size_t k, std::size_t ny, std::size_t n) {
  TrainingSet t;
  t.value_count = ny;
  for (std::size_t i = 0; i < k; ++i) t.histograms.push_back(random_histograms(rng, 12, ny));
  return train(t, n);
}

// Random orthonormal n-frame in R^ny from QR of a Gaussian matrix.
Eigen::MatrixXd random_frame(Rng& rng, std::size_t ny, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(ny, n);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = g(rng);
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(ny), static_cast<Eigen::Index>(n));
}

double frame_residual(const std::vector<std::vector<double>>& hs, const std::vector<double>& mean,
                      const Eigen::MatrixXd& frame) {
  double total = 0.0;
  for (const auto& h : hs) {
    Eigen::VectorXd d(static_cast<Eigen::Index>(h.size()));
    for (std::size_t y = 0; y < h.size(); ++y) d(static_cast<Eigen::Index>(y)) = h[y] - mean[y];
    const Eigen::VectorXd r = d - frame * (frame.transpose() * d);
    total += r.squaredNorm();
  }
  return total;
}

// Left half one random texture, right half another.
Image two_texture_image(Rng& rng, const Grid& g) {
  std::uniform_int_distribution<std::uint32_t> lo(0, 3), hi(2, 7);
  std::vector<std::uint32_t> px(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) px[i] = g.point(i).x < g.width() / 2 ? lo(rng) : hi(rng);
  return Image{g, ValueSpace::cyclic(8), px};
}

LabelMap half_labels(const Grid& g) {
  std::vector<int> l(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) l[i] = g.point(i).x < g.width() / 2 ? 0 : 1;
  return LabelMap{g, 2, l};
}

}  // namespace

TEST(Train, IdenticalSamplesGiveMeanOnlyClass) {
  const std::vector<double> h{0.25, 0.5, 0.25};
  std::vector<std::string> warnings;
  const auto clf = train(one_class({h, h, h, h}), 2, &warnings);
  const auto& c = clf.classes[0];
  EXPECT_TRUE(c.mean_only());
  EXPECT_EQ(c.requested, 2U);
  for (std::size_t y = 0; y < 3; ++y) EXPECT_NEAR(c.mean[y], h[y], 1e-16);
  ASSERT_EQ(warnings.size(), 1U);
  EXPECT_NE(warnings[0].find("identical"), std::string::npos);
}

TEST(Train, TwoSamplesGiveTheirNormalizedDifference) {
  const std::vector<double> a{0.7, 0.1, 0.2, 0.0};
  const std::vector<double> b{0.1, 0.3, 0.2, 0.4};
  const auto c = train(one_class({a, b}), 1).classes[0];
  ASSERT_EQ(c.directions.size(), 1U);
  double norm = 0.0;
  for (std::size_t y = 0; y < 4; ++y) norm += (a[y] - b[y]) * (a[y] - b[y]);
  norm = std::sqrt(norm);
  // Largest |coordinate| is y = 0, where a - b > 0, so the sign is +.
  for (std::size_t y = 0; y < 4; ++y) EXPECT_NEAR(c.directions[0][y], (a[y] - b[y]) / norm, 1e-12);
  EXPECT_NEAR(c.singular_values[0], norm / std::sqrt(2.0), 1e-12);
}

TEST(Train, DirectionsAreOrthonormalSortedAndSigned) {
  Rng rng{1};
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = train(one_class(random_histograms(rng, 30, 10)), 5).classes[0];
    ASSERT_EQ(c.directions.size(), 5U);
    EXPECT_LE(gram_deviation(c), 1e-9);
    EXPECT_TRUE(std::is_sorted(c.singular_values.rbegin(), c.singular_values.rend()));
    for (const auto& u : c.directions) {
      const auto it = std::max_element(u.begin(), u.end(), [](double p, double q) { return std::abs(p) < std::abs(q); });
      EXPECT_GT(*it, 0.0);
    }
  }
}

TEST(Train, RejectsTooManyComponentsAndBadSamples) {
  Rng rng{2};
  EXPECT_THROW((void)train(one_class(random_histograms(rng, 3, 8)), 4), std::invalid_argument);
  EXPECT_THROW((void)train(one_class(random_histograms(rng, 20, 3)), 4), std::invalid_argument);
  EXPECT_THROW((void)train(one_class({{0.5, 0.6}}), 0), std::invalid_argument);
  TrainingSet t = one_class(random_histograms(rng, 4, 3));
  t.histograms.push_back({});
  EXPECT_THROW((void)train(t, 1), std::invalid_argument);
}

TEST(Train, IsDeterministic) {
  Rng rng{3};
  const auto t = one_class(random_histograms(rng, 64, 16));
  EXPECT_EQ(train(t, 4), train(t, 4));
}

TEST(Train, PcaBeatsRandomSubspacesOfEqualDimension) {
  Rng rng{4};
  const auto hs = random_histograms(rng, 64, 16);
  const auto c = train(one_class(hs), 4).classes[0];
  Eigen::MatrixXd pca(16, 4);
  for (Eigen::Index n = 0; n < 4; ++n) {
    for (Eigen::Index y = 0; y < 16; ++y) pca(y, n) = c.directions[static_cast<std::size_t>(n)][static_cast<std::size_t>(y)];
  }
  const double best = frame_residual(hs, c.mean, pca);
  for (int trial = 0; trial < 1000; ++trial) EXPECT_LE(best, frame_residual(hs, c.mean, random_frame(rng, 16, 4)) + 1e-15);
}

TEST(ClassifyPixel, MeanIsNearestToItself) {
  Rng rng{5};
  TrainingSet t;
  t.value_count = 6;
  for (int k = 0; k < 4; ++k) t.histograms.push_back(random_histograms(rng, 10, 6));
  const auto clf = train(t, 0);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(classify_pixel(clf.classes[j].mean, clf), static_cast<int>(j));
}

TEST(ClassifyPixel, SingleClassAlwaysWins) {
  Rng rng{6};
  const auto clf = random_classifier(rng, 1, 5, 2);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(classify_pixel(test::random_simplex(rng, 5), clf), 0);
}

TEST(ClassifyPixel, TiesGoToTheLowestClass) {
  SubspaceClassifier clf{2, {{{1.0, 0.0}, {}, {}, 0}, {{0.0, 1.0}, {}, {}, 0}}};
  EXPECT_EQ(classify_pixel(std::vector<double>{0.5, 0.5}, clf), 0);
  EXPECT_THROW((void)classify_pixel(std::vector<double>{1.0}, clf), std::invalid_argument);
}

TEST(ClassifyPixel, CompactAndExpandedObjectivesAgree) {
  Rng rng{7};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto clf = random_classifier(rng, 3, 8, 1 + trial % 4);
    const auto h = test::random_simplex(rng, 8);
    std::vector<double> residual;
    for (const auto& c : clf.classes) {
      residual.push_back(subspace_residual(h, c));
      EXPECT_NEAR(subspace_objective(h, c), residual.back(), 1e-9);
    }
    auto sorted = residual;
    std::sort(sorted.begin(), sorted.end());
    if (sorted[1] - sorted[0] > 1e-9) {
      EXPECT_EQ(classify_pixel(h, clf), std::min_element(residual.begin(), residual.end()) - residual.begin());
    }
  }
}

TEST(ClassifyPixel, PermutingClassesPermutesTheAnswer) {
  Rng rng{8};
  const auto clf = random_classifier(rng, 4, 6, 2);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  SubspaceClassifier permuted{clf.value_count, {}};
  for (const auto k : perm) permuted.classes.push_back(clf.classes[k]);
  for (int i = 0; i < 200; ++i) {
    const auto h = test::random_simplex(rng, 6);
    EXPECT_EQ(perm[static_cast<std::size_t>(classify_pixel(h, permuted))], static_cast<std::size_t>(classify_pixel(h, clf)));
  }
}

TEST(ClassifyImage, ConstantImageGoesToThePointMassClass) {
  const Grid g{12, 10};
  const Image f = Image::constant(g, ValueSpace::cyclic(4), 2);
  SubspaceClassifier clf{4, {}};
  for (int c = 0; c < 4; ++c) {
    std::vector<double> m(4, 0.0);
    m[static_cast<std::size_t>(3 - c)] = 1.0;
    clf.classes.push_back({m, {}, {}, 0});
  }
  const auto w = make_window(g, parse_window_spec("center-weighted:2"));
  EXPECT_EQ(classify_image(f, w, clf), LabelMap::constant(g, 4, 1));
}

TEST(ClassifyImage, StreamingMatchesReferenceBitForBit) {
  Rng rng{9};
  const Grid g{64, 64};
  const Image f = two_texture_image(rng, g);
  const auto w = make_window(g, parse_window_spec("center-weighted:3"));
  const auto truth = half_labels(g);
  for (const auto plan : {FilterPlan::noncyclic(), FilterPlan::direct(), FilterPlan::fft()}) {
    const auto t = build_training_set(f, truth, w, 2, 64, -1, 11, plan);
    for (const std::size_t n : {0U, 1U, 3U}) {
      const auto clf = train(t, n);
      const LabelMap ref = classify_image_reference(f, w, clf, plan);
      EXPECT_EQ(classify_image(f, w, clf, plan, 1), ref);
      EXPECT_EQ(classify_image(f, w, clf, plan, 3), ref);
    }
  }
}

TEST(ClassifyImage, SeparatesTwoTextures) {
  Rng rng{10};
  const Grid g{64, 64};
  const Image f = two_texture_image(rng, g);
  const auto w = make_window(g, parse_window_spec("box:4"));
  const auto truth = half_labels(g);
  const auto clf = train(build_training_set(f, truth, w, 2, 64, -1, 3), 2);
  // Score only pixels whose window stays inside one half.
  std::vector<int> scored(truth.labels().begin(), truth.labels().end());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::abs(g.point(i).x - 32) <= 4 || g.point(i).x >= 60) scored[i] = 2;
  }
  const std::vector<int> ignore{2};
  const auto cm = evaluate(classify_image(f, w, clf), LabelMap{g, 3, scored}, ignore);
  EXPECT_GE(std::min(cm.percent(0, 0), cm.percent(1, 1)), 90.0);
}

TEST(ClassifyImage, RejectsValueSpaceMismatch) {
  Rng rng{11};
  const Grid g{8, 8};
  const auto clf = random_classifier(rng, 2, 5, 1);
  const auto w = make_window(g, parse_window_spec("box:1"));
  EXPECT_THROW((void)classify_image(Image::constant(g, ValueSpace::cyclic(4), 0), w, clf), std::invalid_argument);
}

TEST(SampleTrainingPoints, AllEligibleWhenMEqualsTheirCount) {
  const Grid g{10, 8};
  const auto labels = half_labels(g);
  const auto pool = eligible_points(labels, 1, 2);
  EXPECT_EQ(pool.size(), 3U * 4U);
  EXPECT_EQ(sample_training_points(labels, 1, pool.size(), 2, 5), pool);
  EXPECT_THROW((void)sample_training_points(labels, 1, pool.size() + 1, 2, 5), std::invalid_argument);
}

TEST(SampleTrainingPoints, DistinctInClassInteriorAndDeterministic) {
  Rng rng{12};
  const Grid g{40, 40};
  const auto labels = test::random_labels(rng, g, 3);
  for (int k = 0; k < 3; ++k) {
    const auto pts = sample_training_points(labels, k, 64, 4, 77);
    EXPECT_EQ(pts.size(), 64U);
    EXPECT_EQ(std::set<std::size_t>(pts.begin(), pts.end()).size(), 64U);
    for (const auto x : pts) {
      EXPECT_EQ(labels[x], k);
      const Point p = g.point(x);
      EXPECT_TRUE(p.x >= 4 && p.y >= 4 && p.x < 36 && p.y < 36);
    }
    EXPECT_EQ(pts, sample_training_points(labels, k, 64, 4, 77));
  }
}

TEST(SampleTrainingPoints, UniformOverEligiblePixels) {
  const Grid g{8, 8};
  const auto labels = LabelMap::constant(g, 1, 0);
  const std::size_t m = 16;
  const int redraws = 1000;
  std::vector<double> hits(g.size(), 0.0);
  for (int r = 0; r < redraws; ++r) {
    for (const auto x : sample_training_points(labels, 0, m, 0, derive_seed(1, r))) hits[x] += 1.0;
  }
  const double expected = redraws * static_cast<double>(m) / static_cast<double>(g.size());
  double chi2 = 0.0;
  for (const double h : hits) chi2 += (h - expected) * (h - expected) / expected;
  const double dof = static_cast<double>(g.size() - 1);
  EXPECT_LE(std::abs(chi2 - dof), 4 * std::sqrt(2 * dof));
}

TEST(BuildTrainingSet, AllPointsOfASingleClassAverageToTheRegionMean) {
  Rng rng{13};
  const Grid g{20, 16};
  const Image f = test::random_image(rng, g, ValueSpace::cyclic(5));
  const auto labels = LabelMap::constant(g, 1, 0);
  const auto w = make_window(g, parse_window_spec("box:2"));
  const auto pool = eligible_points(labels, 0, 2);
  const auto t = build_training_set(f, labels, w, 1, pool.size(), -1, 4);
  EXPECT_EQ(t.locations[0], pool);
  const auto clf = train(t, 0);
  const HistCube cube = local_histogram(f, w, FilterPlan::direct());
  for (std::uint32_t y = 0; y < 5; ++y) {
    double mean = 0.0;
    for (const auto x : pool) mean += cube.at(x, y) / static_cast<double>(pool.size());
    EXPECT_NEAR(clf.classes[0].mean[y], mean, 1e-12);
  }
}

TEST(Evaluate, PerfectPredictionIsTheIdentity) {
  Rng rng{14};
  const auto truth = test::random_labels(rng, Grid{9, 9}, 3);
  const auto cm = evaluate(truth, truth);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(cm.percent(t, p), t == p ? 100.0 : 0.0);
  }
}

TEST(Evaluate, ConstantPredictionFillsTheFirstColumn) {
  const Grid g{4, 2};
  const LabelMap truth{g, 2, {0, 1, 0, 1, 1, 0, 1, 0}};
  const auto cm = evaluate(LabelMap::constant(g, 2, 0), truth);
  EXPECT_EQ(cm.percent(0, 0), 100.0);
  EXPECT_EQ(cm.percent(1, 0), 100.0);
  EXPECT_EQ(cm.percent(1, 1), 0.0);
}

TEST(Evaluate, MatchesHandCountsAndHonorsIgnore) {
  Rng rng{15};
  const Grid g{30, 20};
  const auto truth = test::random_labels(rng, g, 4);
  const auto pred = test::random_labels(rng, g, 3);
  const std::vector<int> ignore{3};
  const auto cm = evaluate(pred, truth, ignore);
  for (int k = 0; k < 3; ++k) {
    std::size_t right = 0;
    std::size_t total = 0;
    for (std::size_t x = 0; x < g.size(); ++x) {
      if (truth[x] != k) continue;
      ++total;
      right += pred[x] == k;
    }
    EXPECT_EQ(cm.support[static_cast<std::size_t>(k)], total);
    EXPECT_DOUBLE_EQ(cm.percent(static_cast<std::size_t>(k), static_cast<std::size_t>(k)), 100.0 * right / total);
    double row = 0.0;
    for (std::size_t p = 0; p < cm.num_classes; ++p) row += cm.percent(static_cast<std::size_t>(k), p);
    EXPECT_NEAR(row, 100.0, 1e-9);
  }
  EXPECT_EQ(cm.support[3], 0U);
  EXPECT_THROW((void)evaluate(pred, LabelMap::constant(Grid{20, 30}, 2, 0)), std::invalid_argument);
}

TEST(Evaluate, FormatsRoundedRowPercentages) {
  const Grid g{3, 1};
  const auto cm = evaluate(LabelMap{g, 2, {0, 1, 1}}, LabelMap{g, 2, {0, 0, 1}});
  const std::vector<std::string> names{"Ca", "Co"};
  const std::string s = format_confusion(cm, names);
  EXPECT_NE(s.find("Ca"), std::string::npos);
  EXPECT_NE(s.find("50"), std::string::npos);
  EXPECT_NE(s.find("100"), std::string::npos);
}
