#include <gtest/gtest.h>

#include <set>

#include "histocube/occlusion.hpp"
#include "histocube/window.hpp"
#include "model_support.hpp"

using namespace histocube;
using histocube::test::Rng;

namespace {

const Grid k2x2{2, 2};

std::vector<Image> fig3_sources() {
  const ValueSpace z8 = ValueSpace::cyclic(8);
  return {Image{k2x2, z8, {0, 1, 2, 3}}, Image{k2x2, z8, {4, 5, 6, 7}}};
}

ModelPtr coin_table(double rho) {
  // P(phi) = rho^|phi^-1{1}| (1 - rho)^(|X| - |phi^-1{1}|), listed explicitly.
  std::vector<WeightedMap> entries;
  for (const auto& m : test::all_label_maps(k2x2, 2)) {
    const auto ones = static_cast<int>(m.count(1));
    entries.push_back({m, std::pow(rho, ones) * std::pow(1.0 - rho, 4 - ones)});
  }
  return make_table(k2x2, 2, std::move(entries));
}

}  // namespace

TEST(Occlude, ZeroLabelsReturnFirstSource) {
  Rng rng{1};
  const auto sources = test::random_sources(rng, Grid{5, 4}, ValueSpace::cyclic(9), 3);
  EXPECT_EQ(occlude(sources, LabelMap::constant(Grid{5, 4}, 3, 0)), sources[0]);
}

TEST(Occlude, AllSixteenCompositesOfTwoByTwoSources) {
  const auto sources = fig3_sources();
  const auto maps = test::all_label_maps(k2x2, 2);
  ASSERT_EQ(maps.size(), 16U);
  std::set<std::vector<std::uint32_t>> distinct;
  for (const auto& phi : maps) {
    const Image c = occlude(sources, phi);
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(c[x], static_cast<std::uint32_t>(x + 4 * phi[x]));
    distinct.insert({c.pixels().begin(), c.pixels().end()});
  }
  EXPECT_EQ(distinct.size(), 16U);
}

TEST(Occlude, CompositePixelsComeFromSomeSource) {
  Rng rng{2};
  for (int trial = 0; trial < 20; ++trial) {
    const Grid g{6, 5};
    const auto sources = test::random_sources(rng, g, ValueSpace::cyclic(50), 4);
    const LabelMap phi = test::random_labels(rng, g, 4);
    const Image c = occlude(sources, phi);
    for (std::size_t x = 0; x < g.size(); ++x) {
      bool found = false;
      for (const auto& s : sources) found = found || s[x] == c[x];
      EXPECT_TRUE(found);
    }
  }
}

TEST(Occlude, RejectsCountAndGridMismatch) {
  const auto sources = fig3_sources();
  EXPECT_THROW((void)occlude(sources, LabelMap::constant(k2x2, 3, 0)), std::invalid_argument);
  EXPECT_THROW((void)occlude(sources, LabelMap::constant(Grid{4, 1}, 2, 0)), std::invalid_argument);
}

TEST(Model, ValidationRejectsBadMassesAndShapes) {
  EXPECT_THROW((void)make_iid_spinner(k2x2, {0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW((void)make_iid_spinner(k2x2, {1.5, -0.5}), std::invalid_argument);
  const LabelMap a = LabelMap::constant(k2x2, 2, 0);
  EXPECT_THROW((void)make_table(k2x2, 2, {{a, 0.5}, {a, 0.5}}), std::invalid_argument);
  EXPECT_THROW((void)make_table(k2x2, 2, {{a, 0.9}}), std::invalid_argument);
  const LabelMap b{k2x2, 2, {1, 0, 0, 0}};
  const LabelMap b_shift{k2x2, 2, {0, 1, 0, 0}};
  EXPECT_THROW((void)make_class_table(k2x2, 2, {{b, 0.5}, {b_shift, 0.5}}), std::invalid_argument);
  EXPECT_THROW((void)make_expansion(make_iid_spinner(k2x2, {0.2, 0.3, 0.5}), BlobDistribution::point()),
               std::invalid_argument);
  EXPECT_THROW((void)BlobDistribution::table({{{}, 1.0}}), std::invalid_argument);
  EXPECT_THROW((void)make_overlay(make_coin(k2x2, 0.5), make_coin(Grid{3, 1}, 0.5), make_coin(k2x2, 0.5)),
               std::invalid_argument);
}

TEST(Model, TableDropsZeroEntries) {
  const LabelMap a = LabelMap::constant(k2x2, 2, 0);
  const LabelMap b = LabelMap::constant(k2x2, 2, 1);
  const auto m = make_table(k2x2, 2, {{a, 1.0}, {b, 0.0}});
  EXPECT_EQ(m->as<TableModel>().entries.size(), 1U);
}

TEST(Model, TwoByTwoBinaryMapsFormSevenTranslationClasses) {
  EXPECT_EQ(test::all_orbits(k2x2, 2).size(), 7U);
}

TEST(SampleLabelMap, DegenerateSpinnerIsAlwaysZero) {
  const auto m = make_iid_spinner(Grid{7, 3}, {1.0, 0.0});
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(sample_label_map(*m, seed), LabelMap::constant(Grid{7, 3}, 2, 0));
}

TEST(SampleLabelMap, FairCoinMarginalsWithinThreeSigma) {
  const auto m = make_coin(k2x2, 0.5);
  const MarginalField mc = monte_carlo_marginal(*m, 100000, 42);
  const double sigma = std::sqrt(0.25 / 100000.0);
  for (std::size_t x = 0; x < 4; ++x) EXPECT_NEAR(mc.at(x, 1), 0.5, 3 * sigma);
}

TEST(SampleLabelMap, SingleOrbitClassTableSamplesAreTranslates) {
  const Grid g{3, 2};
  const LabelMap phi0{g, 3, {0, 1, 2, 2, 0, 0}};
  const auto m = make_class_table(g, 3, {{phi0, 1.0}});
  const auto orbit = translation_orbit(phi0);
  std::set<LabelMap> seen;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const LabelMap s = sample_label_map(*m, seed);
    EXPECT_TRUE(std::binary_search(orbit.begin(), orbit.end(), s));
    seen.insert(s);
  }
  EXPECT_EQ(seen.size(), orbit.size());
}

TEST(SampleLabelMap, IsDeterministicAndThreadIndependent) {
  const auto m = make_coin(Grid{16, 16}, 0.3);
  EXPECT_EQ(sample_label_map(*m, 7), sample_label_map(*m, 7));
  EXPECT_NE(sample_label_map(*m, 7), sample_label_map(*m, 8));
  const MarginalField one = monte_carlo_marginal(*m, 500, 3, 1);
  const MarginalField four = monte_carlo_marginal(*m, 500, 3, 4);
  EXPECT_EQ(one.probs, four.probs);
}

TEST(SampleLabelMap, TableFrequenciesMatchProbabilities) {
  Rng rng{3};
  const auto maps = test::all_label_maps(k2x2, 2);
  const auto p = test::random_simplex(rng, 5);
  std::vector<WeightedMap> entries;
  for (std::size_t i = 0; i < 5; ++i) entries.push_back({maps[i * 3], p[i]});
  const auto m = make_table(k2x2, 2, entries);
  std::map<LabelMap, int> counts;
  const int n = 100000;
  for (int s = 0; s < n; ++s) ++counts[sample_label_map(*m, derive_seed(99, s))];
  for (const auto& e : entries) {
    const double sigma = std::sqrt(e.probability * (1 - e.probability) / n);
    EXPECT_NEAR(counts[e.map] / static_cast<double>(n), e.probability, 4 * sigma + 1e-12);
  }
}

TEST(EnumerateSupport, SpinnerSupportIsTheProductMeasure) {
  const auto support = enumerate_support(*make_coin(k2x2, 0.3));
  ASSERT_EQ(support.size(), 16U);
  double total = 0.0;
  for (const auto& e : support) {
    const auto ones = static_cast<int>(e.map.count(1));
    EXPECT_NEAR(e.probability, std::pow(0.3, ones) * std::pow(0.7, 4 - ones), 1e-16);
    total += e.probability;
  }
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_TRUE(std::is_sorted(support.begin(), support.end(),
                             [](const WeightedMap& a, const WeightedMap& b) { return a.map < b.map; }));
}

TEST(EnumerateSupport, CapIsEnforced) {
  const auto m = make_coin(Grid{5, 5}, 0.5);
  EXPECT_THROW((void)enumerate_support(*m), EnumerationCapExceeded);
  EXPECT_THROW((void)marginal_field(*m, {.method = EstimateMethod::exact}), EnumerationCapExceeded);
  EXPECT_NO_THROW((void)enumerate_support(*make_coin(Grid{4, 5}, 0.5)));
}

TEST(MarginalField, SpinnerIsAnalyticAndConstant) {
  const std::vector<double> p{0.2, 0.5, 0.3};
  const MarginalField m = marginal_field(*make_iid_spinner(Grid{4, 3}, p));
  EXPECT_EQ(m.method, EstimateMethod::analytic);
  for (std::size_t x = 0; x < 12; ++x) {
    for (int n = 0; n < 3; ++n) EXPECT_EQ(m.at(x, n), p[static_cast<std::size_t>(n)]);
  }
}

TEST(MarginalField, EnumeratedCoinHasExactMarginal) {
  for (const double rho : {0.1, 0.3, 0.5}) {
    const MarginalField m = marginal_field(*coin_table(rho));
    EXPECT_EQ(m.method, EstimateMethod::exact);
    for (std::size_t x = 0; x < 4; ++x) {
      EXPECT_NEAR(m.at(x, 1), rho, 1e-15);
      EXPECT_NEAR(m.at(x, 0) + m.at(x, 1), 1.0, 1e-15);
    }
    const MarginalField analytic = marginal_field(*make_coin(k2x2, rho));
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(analytic.at(x, 1), rho);
  }
}

TEST(MarginalField, ConcentratedTableIsTheIndicator) {
  const LabelMap phi{Grid{3, 2}, 3, {0, 2, 1, 1, 0, 2}};
  const MarginalField m = marginal_field(*make_deterministic(phi));
  for (std::size_t x = 0; x < 6; ++x) {
    for (int n = 0; n < 3; ++n) EXPECT_EQ(m.at(x, n), phi[x] == n ? 1.0 : 0.0);
  }
}

TEST(MarginalField, RowsSumToOneOnEveryPath) {
  Rng rng{8};
  const Grid g{3, 2};
  const auto spinner = test::random_pixel_spinner(rng, g, 3);
  for (const auto method : {EstimateMethod::exact, EstimateMethod::monte_carlo}) {
    EstimateOptions opt;
    opt.method = method;
    opt.samples = 2000;
    const MarginalField m = marginal_field(*spinner, opt);
    for (std::size_t x = 0; x < g.size(); ++x) {
      EXPECT_NEAR(m.at(x, 0) + m.at(x, 1) + m.at(x, 2), 1.0, method == EstimateMethod::exact ? 1e-12 : 1e-9);
    }
  }
}

TEST(MarginalField, MonteCarloConvergesToExactWithinFourStandardErrors) {
  Rng rng{9};
  const Grid g{3, 2};
  const auto models = {test::random_pixel_spinner(rng, g), test::random_flat_binary_table(rng, g),
                       test::random_class_table(rng, g, 2)};
  for (const auto& m : models) {
    const MarginalField exact = marginal_field(*m, {.method = EstimateMethod::exact});
    const MarginalField mc = marginal_field(*m, {.method = EstimateMethod::monte_carlo, .samples = 100000, .seed = 5});
    ASSERT_EQ(mc.samples, 100000U);
    for (std::size_t i = 0; i < exact.probs.size(); ++i) {
      const double se = std::max(mc.standard_error[i], 1e-12);
      EXPECT_LE(std::abs(mc.probs[i] - exact.probs[i]), 4 * se + 1e-12);
    }
  }
}

TEST(CheckFlatness, SpinnerIsFlatWithItsProbabilities) {
  const std::vector<double> p{0.25, 0.75};
  const auto cert = check_flatness(*make_iid_spinner(Grid{5, 5}, p));
  EXPECT_TRUE(cert.is_flat);
  EXPECT_EQ(cert.lambdas, p);
  EXPECT_EQ(cert.max_deviation, 0.0);
  EXPECT_EQ(cert.method, EstimateMethod::analytic);
}

TEST(CheckFlatness, SingleOrbitClassTableHasCountLambdas) {
  for (const auto& phi0 : test::all_label_maps(k2x2, 2)) {
    const auto cert = check_flatness(*make_class_table(k2x2, 2, {{phi0, 1.0}}));
    EXPECT_TRUE(cert.is_flat);
    EXPECT_EQ(cert.method, EstimateMethod::exact);
    for (int n = 0; n < 2; ++n) EXPECT_NEAR(cert.lambdas[n], phi0.count(n) / 4.0, 1e-15);
  }
}

TEST(CheckFlatness, DeterministicNonConstantMapIsNotFlat) {
  const auto cert = check_flatness(*make_deterministic(LabelMap{k2x2, 2, {0, 1, 1, 0}}));
  EXPECT_FALSE(cert.is_flat);
  EXPECT_EQ(cert.max_deviation, 1.0);
  EXPECT_TRUE(cert.lambdas.empty());
}

TEST(CheckFlatness, AnalyticAndEnumeratedSpinnerCertificatesAgree) {
  Rng rng{10};
  for (const Grid g : {Grid{2, 2}, Grid{2, 3}}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto m = make_iid_spinner(g, test::random_simplex(rng, 3));
      const auto analytic = check_flatness(*m);
      const auto exact = check_flatness(*m, {}, {.method = EstimateMethod::exact});
      EXPECT_EQ(analytic.is_flat, exact.is_flat);
      ASSERT_EQ(analytic.lambdas.size(), exact.lambdas.size());
      for (std::size_t n = 0; n < 3; ++n) EXPECT_NEAR(analytic.lambdas[n], exact.lambdas[n], 1e-14);
    }
  }
}

TEST(ExpectedLocalHistogram, ConcentratedModelGivesFirstSourceHistogram) {
  Rng rng{11};
  const Grid g{4, 3};
  const auto sources = test::random_sources(rng, g, ValueSpace::cyclic(5), 2);
  const auto w = test::random_window(rng, g, 1);
  const auto e = expected_local_histogram(*make_constant(g, 2, 0), sources, w, FilterPlan::direct());
  EXPECT_EQ(max_abs_difference(e.cube, local_histogram(sources[0], w, FilterPlan::direct())), 0.0);
}

TEST(ExpectedLocalHistogram, FlatTablesGiveTheConvexCombination) {
  Rng rng{12};
  const auto sources = fig3_sources();
  const auto w = make_window(k2x2, parse_window_spec("box:1"));
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = test::random_flat_binary_table(rng, k2x2);
    const auto cert = check_flatness(*m);
    ASSERT_TRUE(cert.is_flat);
    const auto e = expected_local_histogram(*m, sources, w, FilterPlan::direct());
    EXPECT_LE(max_abs_difference(e.cube, convex_combination(cert.lambdas, sources, w, FilterPlan::direct())), 1e-12);
  }
}

TEST(ExpectedLocalHistogram, UniformTableMatchesBruteForceAverage) {
  const auto sources = fig3_sources();
  Rng rng{13};
  const auto w = test::random_window(rng, k2x2, 1);
  std::vector<WeightedMap> entries;
  HistCube brute{k2x2, sources[0].values()};
  for (const auto& m : test::all_label_maps(k2x2, 2)) {
    entries.push_back({m, 1.0 / 16.0});
    const HistCube c = test::direct_oracle(occlude(sources, m), w);
    for (std::size_t i = 0; i < brute.data().size(); ++i) brute.data()[i] += c.data()[i] / 16.0;
  }
  const auto e = expected_local_histogram(*make_table(k2x2, 2, entries), sources, w, FilterPlan::direct());
  EXPECT_LE(max_abs_difference(e.cube, brute), 1e-12);
  const std::vector<double> half{0.5, 0.5};
  EXPECT_LE(max_abs_difference(e.cube, convex_combination(half, sources, w, FilterPlan::direct())), 1e-12);
}

TEST(ExpectedLocalHistogram, ThreadCountDoesNotChangeTheResult) {
  Rng rng{14};
  const Grid g{3, 3};
  const auto m = test::random_pixel_spinner(rng, g);
  const auto sources = test::random_sources(rng, g, ValueSpace::cyclic(4), 2);
  const auto w = test::random_window(rng, g, 1);
  const auto one = expected_local_histogram(*m, sources, w, FilterPlan::direct(), {.threads = 1});
  const auto four = expected_local_histogram(*m, sources, w, FilterPlan::direct(), {.threads = 4});
  EXPECT_EQ(max_abs_difference(one.cube, four.cube), 0.0);
}

TEST(ExpectedLocalHistogram, FallsBackToSamplingAboveTheCap) {
  Rng rng{15};
  const Grid g{5, 5};
  const auto m = make_coin(g, 0.4);
  const auto sources = test::random_sources(rng, g, ValueSpace::cyclic(3), 2);
  const auto w = make_window(g, parse_window_spec("center-weighted:1"));
  const auto e = expected_local_histogram(*m, sources, w, FilterPlan::direct(), {.samples = 4000, .seed = 1});
  EXPECT_EQ(e.method, EstimateMethod::monte_carlo);
  const std::vector<double> lambdas{0.6, 0.4};
  EXPECT_LE(max_abs_difference(e.cube, convex_combination(lambdas, sources, w, FilterPlan::direct())), 0.05);
  EXPECT_THROW((void)expected_local_histogram(*m, sources, w, FilterPlan::direct(), {.method = EstimateMethod::exact}),
               EnumerationCapExceeded);
}

TEST(DecompositionBound, FlatModelHasZeroError) {
  Rng rng{16};
  const auto sources = fig3_sources();
  const auto w = test::random_window(rng, k2x2, 1);
  const auto r = verify_decomposition_bound(*test::random_flat_binary_table(rng, k2x2), sources, w);
  EXPECT_TRUE(r.holds);
  EXPECT_LE(r.max_abs_epsilon, 1e-12);
  EXPECT_GE(r.max_bound, 0.0);
  EXPECT_LE(r.max_bound, 1e-9);
}

TEST(DecompositionBound, PointWindowHasZeroBoundAndZeroError) {
  Rng rng{17};
  const Grid g{3, 3};
  const auto sources = test::random_sources(rng, g, ValueSpace::cyclic(4), 2);
  const auto w = make_window(g, parse_window_spec("delta"));
  const auto r = verify_decomposition_bound(*test::random_pixel_spinner(rng, g), sources, w);
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.max_bound, 0.0);
  EXPECT_LE(r.max_abs_epsilon, 1e-15);
}

TEST(DecompositionBound, HoldsForPixelDependentSpinners) {
  Rng rng{18};
  const Grid g{3, 3};
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = test::random_pixel_spinner(rng, g);
    const auto sources = test::random_sources(rng, g, ValueSpace::cyclic(3), 2);
    const auto w = test::random_window(rng, g, 1);
    const auto r = verify_decomposition_bound(*m, sources, w);
    EXPECT_TRUE(r.holds) << "min slack " << r.min_slack;
    EXPECT_GT(r.max_bound, 0.0);
    EXPECT_FALSE(check_flatness(r.marginal).is_flat);
  }
}
