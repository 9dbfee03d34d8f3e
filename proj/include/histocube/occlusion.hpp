#ifndef HISTOCUBE_OCCLUSION_HPP
#define HISTOCUBE_OCCLUSION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "histocube/combinators.hpp"
#include "histocube/grid.hpp"
#include "histocube/local_histogram.hpp"
#include "histocube/model.hpp"
#include "histocube/parallel.hpp"
#include "histocube/rng.hpp"

/**
 * \file
 * \brief Sampling, exact enumeration, marginals and flatness of occlusion
 * models, and the expected local histogram of occluded composites.
 */

namespace histocube {

/// Largest support (or enumeration workload) exact paths accept.
inline constexpr std::size_t kEnumerationCap = std::size_t{1} << 20;

/// Raised when an exact computation would enumerate more than the cap.
class EnumerationCapExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline LabelMap sample_spinner(const Grid& g, std::uint64_t seed, auto&& probs_at) {
  std::vector<int> labels(g.size());
  int n = 0;
  for (std::size_t x = 0; x < g.size(); ++x) {
    const std::span<const double> p = probs_at(x);
    n = static_cast<int>(p.size());
    CounterRng rng{derive_seed(seed, x)};
    labels[x] = static_cast<int>(rng.categorical(p));
  }
  return LabelMap{g, n, std::move(labels)};
}

}  // namespace detail

/// Draws one label map; a pure function of (model, seed).
/**
 * Spinners draw each pixel from its own stream derive_seed(seed, x), so the
 * result does not depend on traversal order. Expansion draws the seed map from
 * stream 0 and the blob at center c from derive_seed(derive_seed(seed, 1), c);
 * overlay draws top, bottom and mask from streams 0, 1 and 2.
 */
[[nodiscard]] inline LabelMap sample_label_map(const OcclusionModel& model, std::uint64_t seed) {
  const Grid& g = model.grid();
  if (model.holds<TableModel>()) {
    const auto& t = model.as<TableModel>();
    std::vector<double> p;
    p.reserve(t.entries.size());
    for (const auto& e : t.entries) p.push_back(e.probability);
    CounterRng rng{seed};
    return t.entries[rng.categorical(p)].map;
  }
  if (model.holds<IidSpinner>()) {
    const auto& s = model.as<IidSpinner>();
    return detail::sample_spinner(g, seed, [&](std::size_t) { return std::span<const double>{s.probs}; });
  }
  if (model.holds<PixelSpinner>()) {
    const auto& s = model.as<PixelSpinner>();
    return detail::sample_spinner(g, seed, [&](std::size_t x) { return std::span<const double>{s.probs[x]}; });
  }
  if (model.holds<ClassTable>()) {
    // Class by total mass, then a uniform shift; every orbit member is hit by
    // |X| / |orbit| shifts, so members share the class mass evenly.
    const auto& c = model.as<ClassTable>();
    std::vector<double> p;
    for (const auto& e : c.classes) p.push_back(e.probability);
    CounterRng rng{seed};
    const auto& rep = c.classes[rng.categorical(p)].map;
    return translate_labels(rep, g.point(rng.below(g.size())));
  }
  if (model.holds<ExpansionModel>()) {
    const auto& e = model.as<ExpansionModel>();
    const LabelMap phi = sample_label_map(*e.seed, derive_seed(seed, 0));
    const auto support = e.blobs.support(g);
    std::vector<double> p;
    for (const auto& b : support) p.push_back(b.probability);
    const std::uint64_t blob_seed = derive_seed(seed, 1);
    std::vector<std::vector<Point>> blobs(g.size());
    for (std::size_t c = 0; c < g.size(); ++c) {
      if (phi[c] != 1) continue;
      CounterRng rng{derive_seed(blob_seed, c)};
      blobs[c] = support[rng.categorical(p)].offsets;
    }
    return expand_label_map(phi, blobs);
  }
  const auto& o = model.as<OverlayModel>();
  return overlay_label_map(sample_label_map(*o.top, derive_seed(seed, 0)),
                           sample_label_map(*o.bottom, derive_seed(seed, 1)),
                           sample_label_map(*o.mask, derive_seed(seed, 2)));
}

// ---------------------------------------------------------------------------
// Exact enumeration

namespace detail {

using Accumulator = std::map<LabelMap, double>;

inline std::vector<WeightedMap> to_sorted(const Accumulator& acc) {
  std::vector<WeightedMap> out;
  out.reserve(acc.size());
  for (const auto& [map, p] : acc) {
    if (p > 0.0) out.push_back({map, p});
  }
  return out;
}

inline void check_cap(std::size_t size, std::size_t cap, const std::string& what) {
  if (size > cap) {
    throw EnumerationCapExceeded(what + " needs " + std::to_string(size) + " enumeration steps, above the cap of " +
                                 std::to_string(cap) + "; use Monte Carlo instead");
  }
}

// Saturating product for support-size estimates.
inline std::size_t mul_sat(std::size_t a, std::size_t b) {
  if (a != 0 && b > static_cast<std::size_t>(-1) / a) return static_cast<std::size_t>(-1);
  return a * b;
}

inline std::vector<WeightedMap> enumerate_spinner(const Grid& g, int n, std::size_t cap, auto&& probs_at) {
  // Only labels with positive probability take part in the odometer.
  std::vector<std::vector<int>> allowed(g.size());
  std::size_t total = 1;
  for (std::size_t x = 0; x < g.size(); ++x) {
    const auto p = probs_at(x);
    for (int l = 0; l < n; ++l) {
      if (p[static_cast<std::size_t>(l)] > 0.0) allowed[x].push_back(l);
    }
    total = mul_sat(total, allowed[x].size());
  }
  check_cap(total, cap, "spinner support");
  std::vector<WeightedMap> out;
  out.reserve(total);
  std::vector<std::size_t> digit(g.size(), 0);
  std::vector<int> labels(g.size());
  for (std::size_t k = 0; k < total; ++k) {
    double prob = 1.0;
    for (std::size_t x = 0; x < g.size(); ++x) {
      labels[x] = allowed[x][digit[x]];
      prob *= probs_at(x)[static_cast<std::size_t>(labels[x])];
    }
    out.push_back({LabelMap{g, n, labels}, prob});
    for (std::size_t x = g.size(); x-- > 0;) {
      if (++digit[x] < allowed[x].size()) break;
      digit[x] = 0;
    }
  }
  std::sort(out.begin(), out.end(), [](const WeightedMap& a, const WeightedMap& b) { return a.map < b.map; });
  return out;
}

}  // namespace detail

/// The full support of a model as (map, probability), sorted by map.
/**
 * Throws EnumerationCapExceeded when the support, or the work needed to
 * build it, would exceed `cap`.
 */
[[nodiscard]] inline std::vector<WeightedMap> enumerate_support(const OcclusionModel& model,
                                                                std::size_t cap = kEnumerationCap) {
  const Grid& g = model.grid();
  if (model.holds<TableModel>()) {
    auto out = model.as<TableModel>().entries;
    detail::check_cap(out.size(), cap, "table support");
    std::sort(out.begin(), out.end(), [](const WeightedMap& a, const WeightedMap& b) { return a.map < b.map; });
    return out;
  }
  if (model.holds<IidSpinner>()) {
    const auto& s = model.as<IidSpinner>();
    return detail::enumerate_spinner(g, model.num_labels(), cap,
                                     [&](std::size_t) { return std::span<const double>{s.probs}; });
  }
  if (model.holds<PixelSpinner>()) {
    const auto& s = model.as<PixelSpinner>();
    return detail::enumerate_spinner(g, model.num_labels(), cap,
                                     [&](std::size_t x) { return std::span<const double>{s.probs[x]}; });
  }
  if (model.holds<ClassTable>()) {
    detail::Accumulator acc;
    for (const auto& c : model.as<ClassTable>().classes) {
      const auto orbit = translation_orbit(c.map);
      detail::check_cap(acc.size() + orbit.size(), cap, "class table support");
      for (const auto& m : orbit) acc[m] += c.probability / static_cast<double>(orbit.size());
    }
    return detail::to_sorted(acc);
  }
  if (model.holds<ExpansionModel>()) {
    const auto& e = model.as<ExpansionModel>();
    const auto seeds = enumerate_support(*e.seed, cap);
    const auto blobs = e.blobs.support(g);
    std::size_t work = 0;
    for (const auto& s : seeds) {
      std::size_t combos = 1;
      for (std::size_t c = 0; c < g.size(); ++c) {
        if (s.map[c] == 1) combos = detail::mul_sat(combos, blobs.size());
      }
      work = std::min(work + combos, static_cast<std::size_t>(-1) / 2);
      detail::check_cap(work, cap, "expansion support");
    }
    detail::Accumulator acc;
    std::vector<std::vector<Point>> chosen(g.size());
    for (const auto& s : seeds) {
      std::vector<std::size_t> centers;
      for (std::size_t c = 0; c < g.size(); ++c) {
        if (s.map[c] == 1) centers.push_back(c);
      }
      std::vector<std::size_t> digit(centers.size(), 0);
      while (true) {
        double prob = s.probability;
        for (std::size_t i = 0; i < centers.size(); ++i) {
          chosen[centers[i]] = blobs[digit[i]].offsets;
          prob *= blobs[digit[i]].probability;
        }
        acc[expand_label_map(s.map, chosen)] += prob;
        std::size_t i = centers.size();
        while (i > 0 && ++digit[i - 1] == blobs.size()) digit[--i] = 0;
        if (i == 0) break;
      }
      for (const auto c : centers) chosen[c].clear();
    }
    return detail::to_sorted(acc);
  }
  const auto& o = model.as<OverlayModel>();
  const auto top = enumerate_support(*o.top, cap);
  const auto bottom = enumerate_support(*o.bottom, cap);
  const auto mask = enumerate_support(*o.mask, cap);
  detail::check_cap(detail::mul_sat(detail::mul_sat(top.size(), bottom.size()), mask.size()), cap, "overlay support");
  detail::Accumulator acc;
  for (const auto& t : top) {
    for (const auto& b : bottom) {
      for (const auto& m : mask) acc[overlay_label_map(t.map, b.map, m.map)] += t.probability * b.probability * m.probability;
    }
  }
  return detail::to_sorted(acc);
}

/// Explicit table model with the same distribution as `model`.
[[nodiscard]] inline ModelPtr to_table(const OcclusionModel& model, std::size_t cap = kEnumerationCap) {
  return make_table(model.grid(), model.num_labels(), enumerate_support(model, cap));
}

// ---------------------------------------------------------------------------
// Marginals

/// How a marginal or certificate was obtained.
enum class EstimateMethod { exact, analytic, monte_carlo };

[[nodiscard]] inline std::string to_string(EstimateMethod m) {
  switch (m) {
    case EstimateMethod::exact:
      return "exact";
    case EstimateMethod::analytic:
      return "analytic";
    case EstimateMethod::monte_carlo:
      return "monte_carlo";
  }
  return "exact";
}

/// The average characteristic function: probs(x, n) = P(phi(x) = n).
struct MarginalField {
  Grid grid;
  int num_labels = 1;
  std::vector<double> probs;  // pixel-major: probs[x * num_labels + n]
  EstimateMethod method = EstimateMethod::exact;
  std::size_t samples = 0;             // Monte Carlo only
  std::vector<double> standard_error;  // Monte Carlo only, same layout as probs

  [[nodiscard]] double at(std::size_t x, int n) const { return probs[offset(x, n)]; }
  [[nodiscard]] double& at(std::size_t x, int n) { return probs[offset(x, n)]; }
  [[nodiscard]] std::size_t offset(std::size_t x, int n) const {
    return x * static_cast<std::size_t>(num_labels) + static_cast<std::size_t>(n);
  }

  [[nodiscard]] double max_standard_error() const {
    double m = 0.0;
    for (const double s : standard_error) m = std::max(m, s);
    return m;
  }

  /// The binary "mean field" x -> P(phi(x) = 1).
  [[nodiscard]] std::vector<double> label_plane(int n) const {
    std::vector<double> out(grid.size());
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = at(x, n);
    return out;
  }
};

/// Options shared by the marginal, flatness and expectation queries.
struct EstimateOptions {
  std::optional<EstimateMethod> method;  ///< nullopt picks the cheapest exact-or-analytic path
  std::size_t samples = 100000;          ///< Monte Carlo draws
  std::uint64_t seed = 0;                ///< Monte Carlo stream
  std::size_t cap = kEnumerationCap;
  unsigned threads = 1;
};

[[nodiscard]] inline MarginalField marginal_from_support(const Grid& g, int n, std::span<const WeightedMap> support) {
  MarginalField m{g, n, std::vector<double>(g.size() * static_cast<std::size_t>(n), 0.0)};
  for (const auto& e : support) {
    for (std::size_t x = 0; x < g.size(); ++x) m.at(x, e.map[x]) += e.probability;
  }
  return m;
}

[[nodiscard]] inline MarginalField monte_carlo_marginal(const OcclusionModel& model, std::size_t samples,
                                                        std::uint64_t seed, unsigned threads = 1) {
  if (samples == 0) throw std::invalid_argument("Monte Carlo needs at least one sample");
  const Grid& g = model.grid();
  const auto n = static_cast<std::size_t>(model.num_labels());
  // Integer counts merge exactly, so the estimate is independent of threads.
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, samples));
  std::vector<std::vector<std::uint64_t>> counts(workers, std::vector<std::uint64_t>(g.size() * n, 0));
  parallel_for(workers, static_cast<unsigned>(workers), [&](std::size_t wb, std::size_t we) {
    for (std::size_t w = wb; w < we; ++w) {
      for (std::size_t s = samples * w / workers; s < samples * (w + 1) / workers; ++s) {
        const LabelMap phi = sample_label_map(model, derive_seed(seed, s));
        for (std::size_t x = 0; x < g.size(); ++x) ++counts[w][x * n + static_cast<std::size_t>(phi[x])];
      }
    }
  });
  MarginalField m{g, model.num_labels(), std::vector<double>(g.size() * n, 0.0), EstimateMethod::monte_carlo, samples,
                  std::vector<double>(g.size() * n, 0.0)};
  const auto total = static_cast<double>(samples);
  for (std::size_t i = 0; i < m.probs.size(); ++i) {
    std::uint64_t c = 0;
    for (const auto& wc : counts) c += wc[i];
    const double p = static_cast<double>(c) / total;
    m.probs[i] = p;
    m.standard_error[i] = std::sqrt(p * (1.0 - p) / total);
  }
  return m;
}

namespace detail {

inline EstimateMethod weakest(EstimateMethod a, EstimateMethod b) { return std::max(a, b); }

inline MarginalField spinner_marginal(const OcclusionModel& model) {
  const Grid& g = model.grid();
  const int n = model.num_labels();
  MarginalField m{g, n, std::vector<double>(g.size() * static_cast<std::size_t>(n)), EstimateMethod::analytic};
  for (std::size_t x = 0; x < g.size(); ++x) {
    const auto& p = model.holds<IidSpinner>() ? model.as<IidSpinner>().probs : model.as<PixelSpinner>().probs[x];
    for (int l = 0; l < n; ++l) m.at(x, l) = p[static_cast<std::size_t>(l)];
  }
  return m;
}

inline bool pixelwise_independent(const OcclusionModel& m) { return m.holds<IidSpinner>() || m.holds<PixelSpinner>(); }

}  // namespace detail

/// probs(x, n) = sum over phi with phi(x) = n of P(phi).
/**
 * Automatic selection: spinners are analytic; tables and class tables are
 * enumerated; an expansion with an independent-pixel seed uses
 * P(sigma(x) = 0) = prod_c (1 - P(phi(c) = 1) P(x - c in psi)), otherwise it
 * is enumerated when under the cap and sampled beyond it; an overlay combines
 * its children's marginals, which is exact because the children are drawn
 * independently. The weakest child method is reported.
 */
[[nodiscard]] inline MarginalField marginal_field(const OcclusionModel& model, const EstimateOptions& opt = {}) {
  const Grid& g = model.grid();
  if (opt.method == EstimateMethod::monte_carlo) return monte_carlo_marginal(model, opt.samples, opt.seed, opt.threads);
  if (opt.method == EstimateMethod::exact) {
    const auto support = enumerate_support(model, opt.cap);
    return marginal_from_support(g, model.num_labels(), support);
  }
  if (detail::pixelwise_independent(model)) return detail::spinner_marginal(model);
  if (model.holds<TableModel>() || model.holds<ClassTable>()) {
    const auto support = enumerate_support(model, opt.cap);
    return marginal_from_support(g, model.num_labels(), support);
  }
  if (model.holds<OverlayModel>()) {
    const auto& o = model.as<OverlayModel>();
    EstimateOptions child = opt;
    child.seed = derive_seed(opt.seed, 0);
    const MarginalField top = marginal_field(*o.top, child);
    child.seed = derive_seed(opt.seed, 1);
    const MarginalField bottom = marginal_field(*o.bottom, child);
    child.seed = derive_seed(opt.seed, 2);
    const MarginalField mask = marginal_field(*o.mask, child);
    const int nt = top.num_labels;
    MarginalField m{g, model.num_labels(), std::vector<double>(g.size() * static_cast<std::size_t>(model.num_labels())),
                    detail::weakest(top.method, detail::weakest(bottom.method, mask.method))};
    for (std::size_t x = 0; x < g.size(); ++x) {
      for (int n = 0; n < nt; ++n) m.at(x, n) = top.at(x, n) * mask.at(x, 0);
      for (int n = 0; n < bottom.num_labels; ++n) m.at(x, nt + n) = bottom.at(x, n) * mask.at(x, 1);
    }
    if (m.method == EstimateMethod::monte_carlo) {
      m.samples = opt.samples;
      // Propagate the larger of the factor errors as a conservative bound.
      m.standard_error.assign(m.probs.size(), std::max({top.max_standard_error(), bottom.max_standard_error(),
                                                        mask.max_standard_error()}));
    }
    return m;
  }
  const auto& e = model.as<ExpansionModel>();
  if (detail::pixelwise_independent(*e.seed)) {
    const MarginalField seed = detail::spinner_marginal(*e.seed);
    const auto reach = e.blobs.mean_field(g);  // P(offset in psi)
    MarginalField m{g, 2, std::vector<double>(g.size() * 2), EstimateMethod::analytic};
    for (std::size_t x = 0; x < g.size(); ++x) {
      double empty = 1.0;
      for (std::size_t o = 0; o < g.size(); ++o) {
        if (reach[o] == 0.0) continue;
        const std::size_t c = g.index(g.sub(g.point(x), g.point(o)));
        empty *= 1.0 - seed.at(c, 1) * reach[o];
      }
      m.at(x, 0) = empty;
      m.at(x, 1) = 1.0 - empty;
    }
    return m;
  }
  try {
    const auto support = enumerate_support(model, opt.cap);
    return marginal_from_support(g, 2, support);
  } catch (const EnumerationCapExceeded&) {
    return monte_carlo_marginal(model, opt.samples, opt.seed, opt.threads);
  }
}

// ---------------------------------------------------------------------------
// Flatness

/// Evidence that a model is (or is not) flat.
struct FlatnessCertificate {
  bool is_flat = false;
  std::vector<double> lambdas;  ///< per-label spatial constants when flat
  double max_deviation = 0.0;   ///< max over n of (max_x - min_x) of probs(x, n)
  double tolerance = 0.0;
  EstimateMethod method = EstimateMethod::exact;
  std::size_t samples = 0;
  double max_standard_error = 0.0;
};

/// Default flatness tolerance for exact and analytic marginals.
inline constexpr double kFlatTolerance = 1e-9;

/// Default Monte Carlo spread tolerance in units of the largest standard error.
/**
 * The largest of `entries` standard normal deviations sits near
 * sqrt(2 ln entries), so each entry gets max(4, sqrt(2 ln entries) + 2)
 * standard errors and the spread of two entries twice that. Small grids get
 * about 8; a 256x256 two-label field gets about 13.7.
 */
[[nodiscard]] inline double monte_carlo_spread_sigmas(std::size_t entries) {
  const double e = static_cast<double>(std::max<std::size_t>(entries, 1));
  return 2.0 * std::max(4.0, std::sqrt(2.0 * std::log(e)) + 2.0);
}

[[nodiscard]] inline FlatnessCertificate check_flatness(const MarginalField& m, std::optional<double> tol = {}) {
  FlatnessCertificate cert;
  cert.method = m.method;
  cert.samples = m.samples;
  cert.max_standard_error = m.max_standard_error();
  const std::size_t size = m.grid.size();
  cert.tolerance = tol ? *tol
                       : (m.method == EstimateMethod::monte_carlo
                              ? monte_carlo_spread_sigmas(size * static_cast<std::size_t>(m.num_labels)) *
                                    cert.max_standard_error
                                                                   : kFlatTolerance);
  std::vector<double> lambdas(static_cast<std::size_t>(m.num_labels));
  for (int n = 0; n < m.num_labels; ++n) {
    double lo = m.at(0, n);
    double hi = lo;
    double sum = 0.0;
    for (std::size_t x = 0; x < size; ++x) {
      lo = std::min(lo, m.at(x, n));
      hi = std::max(hi, m.at(x, n));
      sum += m.at(x, n);
    }
    cert.max_deviation = std::max(cert.max_deviation, hi - lo);
    // Identical entries are reported as-is rather than re-averaged.
    lambdas[static_cast<std::size_t>(n)] = lo == hi ? lo : sum / static_cast<double>(size);
  }
  cert.is_flat = cert.max_deviation <= cert.tolerance;
  if (cert.is_flat) cert.lambdas = std::move(lambdas);
  return cert;
}

[[nodiscard]] inline FlatnessCertificate check_flatness(const OcclusionModel& model, std::optional<double> tol = {},
                                                        const EstimateOptions& opt = {}) {
  return check_flatness(marginal_field(model, opt), tol);
}

// ---------------------------------------------------------------------------
// Expected local histograms

/// E over phi of LH_w(occlude(sources, phi)).
struct ExpectedHistogram {
  HistCube cube;
  EstimateMethod method = EstimateMethod::exact;
  std::size_t samples = 0;
};

namespace detail {

// Adds p * LH_w(occlude(sources, phi)) for each (phi, p) in order; cubes are
// built in parallel in fixed-size batches and summed sequentially, so the
// result does not depend on the worker count.
inline void accumulate_expectation(HistCube& acc, std::span<const WeightedMap> terms, std::span<const Image> sources,
                                   const WeightingFunction& w, FilterPlan plan, unsigned threads) {
  constexpr std::size_t kBatch = 64;
  plan.threads = 1;
  std::vector<HistCube> batch(kBatch);
  for (std::size_t begin = 0; begin < terms.size(); begin += kBatch) {
    const std::size_t count = std::min(kBatch, terms.size() - begin);
    parallel_for(count, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        batch[i] = local_histogram(occlude(sources, terms[begin + i].map), w, plan);
      }
    });
    for (std::size_t i = 0; i < count; ++i) {
      const double p = terms[begin + i].probability;
      auto dst = acc.data();
      const auto src = batch[i].data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += p * src[k];
    }
  }
}

}  // namespace detail

/// Expected local histogram of the composite, exact over the support or sampled.
/**
 * With method monte_carlo (or automatically when the support exceeds the
 * cap) the average of `samples` composites is returned.
 */
[[nodiscard]] inline ExpectedHistogram expected_local_histogram(const OcclusionModel& model,
                                                                std::span<const Image> sources,
                                                                const WeightingFunction& w, FilterPlan plan = {},
                                                                const EstimateOptions& opt = {}) {
  check_sources(sources, model.grid(), model.num_labels());
  ExpectedHistogram out{HistCube{model.grid(), sources.front().values()}};
  bool sample = opt.method == EstimateMethod::monte_carlo;
  std::vector<WeightedMap> support;
  if (!sample) {
    try {
      support = enumerate_support(model, opt.cap);
    } catch (const EnumerationCapExceeded&) {
      if (opt.method == EstimateMethod::exact) throw;
      sample = true;
    }
  }
  if (!sample) {
    detail::accumulate_expectation(out.cube, support, sources, w, plan, opt.threads);
    return out;
  }
  std::vector<WeightedMap> draws;
  draws.reserve(opt.samples);
  const double p = 1.0 / static_cast<double>(opt.samples);
  for (std::size_t s = 0; s < opt.samples; ++s) draws.push_back({sample_label_map(model, derive_seed(opt.seed, s)), p});
  detail::accumulate_expectation(out.cube, draws, sources, w, plan, opt.threads);
  out.method = EstimateMethod::monte_carlo;
  out.samples = opt.samples;
  return out;
}

/// sum_n marg(x, n) LH_w f_n(x, y): the main term of the decomposition.
[[nodiscard]] inline HistCube marginal_mixture(const MarginalField& marg, std::span<const Image> sources,
                                               const WeightingFunction& w, FilterPlan plan = {}) {
  check_sources(sources, marg.grid, marg.num_labels);
  HistCube out{marg.grid, sources.front().values()};
  const std::size_t size = marg.grid.size();
  for (int n = 0; n < marg.num_labels; ++n) {
    const HistCube lh = local_histogram(sources[static_cast<std::size_t>(n)], w, plan);
    for (std::uint32_t y = 0; y < out.values().size(); ++y) {
      auto dst = out.level(y);
      const auto src = lh.level(y);
      for (std::size_t x = 0; x < size; ++x) dst[x] += marg.at(x, n) * src[x];
    }
  }
  return out;
}

/// sum_n lambda_n LH_w f_n: the convex combination a flat model produces.
[[nodiscard]] inline HistCube convex_combination(std::span<const double> lambdas, std::span<const Image> sources,
                                                 const WeightingFunction& w, FilterPlan plan = {}) {
  if (sources.empty()) throw std::invalid_argument("convex combination needs at least one source");
  MarginalField flat{sources.front().grid(), static_cast<int>(lambdas.size()),
                     std::vector<double>(sources.front().grid().size() * lambdas.size())};
  for (std::size_t x = 0; x < flat.grid.size(); ++x) {
    for (std::size_t n = 0; n < lambdas.size(); ++n) flat.at(x, static_cast<int>(n)) = lambdas[n];
  }
  return marginal_mixture(flat, sources, w, plan);
}

// ---------------------------------------------------------------------------
// Decomposition error bound

/// Comparison of the decomposition error with its bound at every (x, y).
struct DecompositionReport {
  HistCube epsilon;           ///< E[LH] - sum_n marg(x, n) LH f_n
  std::vector<double> bound;  ///< per pixel: sum_n sum_x' w(x') |marg(x + x', n) - marg(x, n)|
  double max_abs_epsilon = 0.0;
  double max_bound = 0.0;
  double min_slack = 0.0;  ///< min over (x, y) of bound(x) - |epsilon(x, y)|
  bool holds = false;
  MarginalField marginal;
};

/// Slack allowed for roundoff when comparing |epsilon| with the bound.
inline constexpr double kBoundSlack = 1e-12;

/// Per-pixel bound sum_n sum_x' w(x') |marg(x + x', n) - marg(x, n)|.
[[nodiscard]] inline std::vector<double> decomposition_bound(const MarginalField& marg, const WeightingFunction& w) {
  const Grid& g = marg.grid;
  std::vector<double> bound(g.size(), 0.0);
  for (std::size_t x = 0; x < g.size(); ++x) {
    double b = 0.0;
    for (int n = 0; n < marg.num_labels; ++n) {
      for (const auto& t : w.taps()) b += t.weight * std::abs(marg.at(g.add_index(x, t.offset), n) - marg.at(x, n));
    }
    bound[x] = b;
  }
  return bound;
}

/// Exact check of |E[LH] - sum_n marg LH f_n| <= bound by enumerating the support.
[[nodiscard]] inline DecompositionReport verify_decomposition_bound(const OcclusionModel& model,
                                                                    std::span<const Image> sources,
                                                                    const WeightingFunction& w,
                                                                    std::size_t cap = kEnumerationCap,
                                                                    unsigned threads = 1) {
  check_sources(sources, model.grid(), model.num_labels());
  const auto support = enumerate_support(model, cap);
  const FilterPlan plan = FilterPlan::direct();
  HistCube expected{model.grid(), sources.front().values()};
  detail::accumulate_expectation(expected, support, sources, w, plan, threads);
  DecompositionReport r{expected, {}, 0.0, 0.0, 0.0, true,
                        marginal_from_support(model.grid(), model.num_labels(), support)};
  const HistCube main = marginal_mixture(r.marginal, sources, w, plan);
  r.bound = decomposition_bound(r.marginal, w);
  const std::size_t size = model.grid().size();
  r.min_slack = std::numeric_limits<double>::infinity();
  for (std::uint32_t y = 0; y < expected.values().size(); ++y) {
    auto eps = r.epsilon.level(y);
    const auto m = main.level(y);
    for (std::size_t x = 0; x < size; ++x) {
      eps[x] -= m[x];
      const double a = std::abs(eps[x]);
      r.max_abs_epsilon = std::max(r.max_abs_epsilon, a);
      r.min_slack = std::min(r.min_slack, r.bound[x] - a);
      if (a > r.bound[x] + kBoundSlack) r.holds = false;
    }
  }
  for (const double b : r.bound) r.max_bound = std::max(r.max_bound, b);
  return r;
}

}  // namespace histocube

#endif  // HISTOCUBE_OCCLUSION_HPP
