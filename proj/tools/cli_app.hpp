#ifndef HISTOCUBE_TOOLS_CLI_APP_HPP
#define HISTOCUBE_TOOLS_CLI_APP_HPP

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "histocube/histocube.hpp"
#include "histocube/io.hpp"
#include "histocube/parallel.hpp"

// The histocube command line: lh, synth, verify, train, classify, eval.
// run() takes the argument list and output streams so tests can drive it
// in-process.

namespace histocube::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitVerify = 3;

namespace fs = std::filesystem;

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::optional<unsigned> threads;
  std::string mode;
  std::string window;
  std::string quantize;
};

namespace detail {

inline unsigned thread_count(const GlobalOptions& g) { return g.threads.value_or(default_threads()); }

inline Image load_image(const fs::path& p, const std::string& quantize) {
  Image f = io::read_pnm(p);
  if (quantize.empty()) return f;
  const auto q = parse_quantization(quantize);
  if (q.size() != f.values().factors().size()) {
    throw std::invalid_argument("quantization '" + quantize + "' has " + std::to_string(q.size()) +
                                " entries but the image has " + std::to_string(f.values().factors().size()) +
                                " channels");
  }
  return quantize_values(f, q);
}

inline fs::path manifest_for(const fs::path& output) { return output.string() + ".manifest.json"; }

inline std::string zero_pad(std::size_t i, int width = 3) {
  std::string s = std::to_string(i);
  if (s.size() < static_cast<std::size_t>(width)) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

inline io::Palette palette_for(const std::vector<std::string>& names, int count,
                               const std::vector<std::array<int, 3>>& colors = {}) {
  static const std::array<std::array<int, 3>, 8> kDistinct = {
      {{230, 25, 75}, {60, 180, 75}, {0, 130, 200}, {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {240, 50, 230},
       {128, 128, 0}}};
  io::Palette p;
  for (int k = 0; k < count; ++k) {
    const auto i = static_cast<std::size_t>(k);
    io::Palette::Entry e;
    e.rgb = i < colors.size() ? colors[i] : kDistinct[i % kDistinct.size()];
    if (i < names.size()) e.name = names[i];
    p.entries.push_back(e);
  }
  return p;
}

inline std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Exact checks hold whole |X| x |Y| cubes.
inline bool cube_fits(const std::vector<Image>& sources) {
  constexpr std::size_t kMaxCells = std::size_t{1} << 24;
  const Image& f = sources.front();
  return f.grid().size() * f.values().size() <= kMaxCells;
}

inline void check_cube_size(const std::vector<Image>& sources) {
  const Image& f = sources.front();
  if (!cube_fits(sources)) {
    throw std::invalid_argument("sources have |X| * |Y| = " + std::to_string(f.grid().size() * f.values().size()) +
                                " cube cells; pass --quantize to shrink the value space");
  }
}

class Clock {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

struct LhArgs {
  fs::path input;
  fs::path output;
  fs::path levels;
};

inline int cmd_lh(const LhArgs& a, const GlobalOptions& g, std::ostream& out) {
  detail::Clock clock;
  const Image f = detail::load_image(a.input, g.quantize);
  const std::string window = g.window.empty() ? "center-weighted:1:0.5" : g.window;
  const auto w = make_window(f.grid(), parse_window_spec(window));
  FilterPlan plan;
  plan.mode = parse_filter_mode(g.mode.empty() ? "auto" : g.mode);
  plan.threads = detail::thread_count(g);
  const LocalHistogram lh{f, w, plan};
  const HistCube cube = lh.cube();
  io::RunManifest m;
  m.command = "lh";
  m.parameters = {{"window", parse_window_spec(window).to_string()},
                  {"mode", std::string(to_string(lh.mode()))},
                  {"quantize", g.quantize}};
  m.add_input(a.input);
  io::write_cube(a.output, cube);
  m.add_output(a.output);
  if (!a.levels.empty()) {
    for (const auto& p : io::write_level_stack(a.levels, cube)) m.add_output(p);
  }
  m.wall_time_seconds = clock.seconds();
  io::write_manifest(detail::manifest_for(a.output), m);
  out << "wrote " << a.output.string() << " (" << f.grid().width() << "x" << f.grid().height() << ", |Y| = "
      << f.values().size() << ", mode " << to_string(lh.mode()) << ")\n";
  return kExitOk;
}

struct SynthArgs {
  fs::path config;
  fs::path output_dir;
  std::size_t count = 1;
  std::vector<fs::path> sources;
};

inline int cmd_synth(const SynthArgs& a, const GlobalOptions& g, bool seed_given, std::ostream& out) {
  detail::Clock clock;
  const io::ModelConfig cfg = io::read_model_config(a.config);
  const std::uint64_t seed = seed_given ? g.seed : cfg.seed.value_or(0);
  const int n = cfg.model->num_labels();
  std::vector<Image> fixed;
  for (const auto& p : a.sources) fixed.push_back(io::read_pnm(p));
  if (fixed.empty() && cfg.sources.empty()) {
    throw std::invalid_argument("no sources: list them in the config or pass --source");
  }
  if (!fixed.empty() && fixed.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("model has " + std::to_string(n) + " labels but " + std::to_string(fixed.size()) +
                                " sources were given");
  }
  std::vector<std::array<int, 3>> colors;
  for (const auto& s : cfg.sources) {
    if (s.color.size() == 3) {
      colors.push_back({static_cast<int>(s.color[0]), static_cast<int>(s.color[1]), static_cast<int>(s.color[2])});
    } else if (s.color.size() == 1) {
      const int v = static_cast<int>(s.color[0]);
      colors.push_back({v, v, v});
    }
  }
  if (colors.size() != static_cast<std::size_t>(n)) colors.clear();
  const io::Palette palette = detail::palette_for({}, n, colors);

  io::RunManifest m;
  m.command = "synth";
  m.seed = seed;
  m.parameters = {{"count", a.count}};
  m.config_sha256 = io::sha256_hex(io::serialize_model_config(cfg));
  m.add_input(a.config);
  for (const auto& p : a.sources) m.add_input(p);
  for (std::size_t i = 0; i < a.count; ++i) {
    const std::uint64_t s = derive_seed(seed, i);
    const std::vector<Image> sources =
        fixed.empty() ? io::make_sources(cfg, derive_seed(s, 1), a.config.parent_path()) : fixed;
    const Texture t = synthesize_texture(*cfg.model, sources, derive_seed(s, 0));
    const bool gray = t.image.values().factors().size() == 1;
    const fs::path img = a.output_dir / ("texture_" + detail::zero_pad(i) + (gray ? ".pgm" : ".ppm"));
    const fs::path lab = a.output_dir / ("labels_" + detail::zero_pad(i) + ".pgm");
    io::write_pnm(img, t.image);
    io::write_label_map(lab, t.labels, palette);
    m.add_output(img);
    m.add_output(lab);
  }
  m.wall_time_seconds = clock.seconds();
  io::write_manifest(a.output_dir / "manifest.json", m);
  out << "wrote " << a.count << " texture(s) to " << a.output_dir.string() << " (seed " << seed << ")\n";
  return kExitOk;
}

struct VerifyArgs {
  fs::path config;
  std::string checks = "flat,bound";
  std::size_t samples = 0;
};

inline int cmd_verify(const VerifyArgs& a, const GlobalOptions& g, std::ostream& out) {
  const io::ModelConfig cfg = io::read_model_config(a.config);
  const OcclusionModel& model = *cfg.model;
  const Grid& grid = model.grid();
  const std::string window = g.window.empty() ? "center-weighted:1:0.5" : g.window;
  const auto w = make_window(grid, parse_window_spec(window));
  const unsigned threads = detail::thread_count(g);

  std::vector<Image> sources;
  if (!cfg.sources.empty()) {
    sources = io::make_sources(cfg, derive_seed(g.seed, 1), a.config.parent_path());
    if (!g.quantize.empty()) {
      const auto q = parse_quantization(g.quantize);
      for (auto& f : sources) f = quantize_values(f, q);
    }
  } else {
    // Random sources over Z_4 stand in when the config lists none.
    for (int n = 0; n < model.num_labels(); ++n) {
      std::vector<std::uint32_t> px(grid.size());
      CounterRng rng{derive_seed(g.seed, static_cast<std::uint64_t>(n) + 1)};
      for (auto& v : px) v = static_cast<std::uint32_t>(rng.below(4));
      sources.emplace_back(grid, ValueSpace::cyclic(4), std::move(px));
    }
  }

  const auto checks = detail::split_names(a.checks);
  out << "model " << model.kind() << " on " << grid.width() << "x" << grid.height() << ", " << model.num_labels()
      << " labels, window " << parse_window_spec(window).to_string() << "\n";
  out << std::setprecision(17);
  bool all = true;
  EstimateOptions opt;
  opt.seed = g.seed;
  opt.threads = threads;
  if (a.samples > 0) {
    opt.method = EstimateMethod::monte_carlo;
    opt.samples = a.samples;
  }
  for (const auto& c : checks) {
    bool pass = false;
    if (c == "flat") {
      const auto cert = check_flatness(model, std::nullopt, opt);
      pass = cert.is_flat;
      out << "flatness: " << (cert.is_flat ? "flat" : "not flat") << " (" << to_string(cert.method)
          << ", spread " << cert.max_deviation;
      if (cert.method == EstimateMethod::monte_carlo) out << ", " << cert.samples << " samples";
      out << ")\n";
      if (cert.is_flat) {
        out << "  lambda =";
        for (const double l : cert.lambdas) out << ' ' << l;
        out << '\n';
        if (cert.method != EstimateMethod::monte_carlo && !detail::cube_fits(sources)) {
          out << "  expected histogram: skipped, value space too large (try --quantize)\n";
        } else if (cert.method != EstimateMethod::monte_carlo) {
          try {
            const auto e = expected_local_histogram(model, sources, w, FilterPlan::direct(),
                                                    {.method = EstimateMethod::exact, .threads = threads});
            const double gap =
                max_abs_difference(e.cube, convex_combination(cert.lambdas, sources, w, FilterPlan::direct()));
            out << "  max |E[LH occ] - sum lambda_n LH f_n| = " << gap << '\n';
            pass = pass && gap <= 1e-12;
          } catch (const EnumerationCapExceeded&) {
            out << "  expected histogram: skipped, model too large to enumerate\n";
          }
        }
      }
    } else if (c == "bound") {
      detail::check_cube_size(sources);
      const auto r = verify_decomposition_bound(model, sources, w, kEnumerationCap, threads);
      pass = r.holds;
      out << "decomposition bound: " << (r.holds ? "holds" : "VIOLATED") << " (max |epsilon| " << r.max_abs_epsilon
          << ", max bound " << r.max_bound << ", min slack " << r.min_slack << ")\n";
    } else if (c == "ti") {
      const double d = translation_invariance_defect(enumerate_support(model));
      pass = d <= 1e-12;
      out << "translation invariance: " << (pass ? "yes" : "no") << " (defect " << d << ")\n";
    } else if (c == "disjoint") {
      if (!model.holds<ExpansionModel>()) throw std::invalid_argument("the disjoint check needs an expansion model");
      const auto r = a.samples > 0 ? check_effective_disjointness(model, a.samples, g.seed)
                                   : check_effective_disjointness(model);
      pass = r.disjoint;
      out << "effective disjointness: " << (r.disjoint ? "disjoint" : "overlapping") << " ("
          << (r.exhaustive ? "exhaustive" : "sampled") << ", " << r.checked << " checked)\n";
      if (r.violation) {
        out << "  centers " << r.violation->first_center << " and " << r.violation->second_center
            << " share pixel (" << r.violation->pixel.x << "," << r.violation->pixel.y << ")\n";
      }
    } else {
      throw std::invalid_argument("unknown check '" + c + "' (expected flat, bound, ti or disjoint)");
    }
    out << "  " << c << ": " << (pass ? "PASS" : "FAIL") << '\n';
    all = all && pass;
  }
  return all ? kExitOk : kExitVerify;
}

struct TrainArgs {
  fs::path image;
  fs::path labels;
  fs::path output;
  int classes = 0;
  std::size_t samples = 64;
  std::size_t components = 2;
  int margin = -1;
  std::string names;
};

inline int cmd_train(const TrainArgs& a, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  detail::Clock clock;
  const Image f = detail::load_image(a.image, g.quantize);
  const LabelMap truth = io::read_label_map(a.labels).labels;
  const std::string window = parse_window_spec(g.window.empty() ? "center-weighted:4" : g.window).to_string();
  const auto w = make_window(f.grid(), parse_window_spec(window));
  FilterPlan plan;
  plan.mode = parse_filter_mode(g.mode.empty() ? "noncyclic" : g.mode);
  const int k = a.classes > 0 ? a.classes : truth.num_labels();
  const TrainingSet t = build_training_set(f, truth, w, k, a.samples, a.margin, g.seed, plan);
  std::vector<std::string> warnings;
  io::ClassifierArtifact art{train(t, a.components, &warnings), window, g.mode.empty() ? "noncyclic" : g.mode,
                             g.quantize, detail::split_names(a.names)};
  for (const auto& wmsg : warnings) err << "warning: " << wmsg << '\n';
  io::write_classifier(a.output, art);
  io::RunManifest m;
  m.command = "train";
  m.seed = g.seed;
  m.parameters = {{"classes", k},         {"samples", a.samples}, {"components", a.components},
                  {"margin", a.margin},   {"window", window},     {"mode", art.mode},
                  {"quantize", g.quantize}};
  m.add_input(a.image);
  m.add_input(a.labels);
  m.add_output(a.output);
  m.wall_time_seconds = clock.seconds();
  io::write_manifest(detail::manifest_for(a.output), m);
  out << "trained " << k << " classes on " << a.samples << " samples each, |Y| = " << f.values().size() << '\n';
  for (std::size_t c = 0; c < art.classifier.num_classes(); ++c) {
    const auto& cs = art.classifier.classes[c];
    out << "  class " << c << (c < art.names.size() ? " (" + art.names[c] + ")" : std::string{}) << ": "
        << cs.directions.size() << " direction(s)" << (cs.mean_only() ? ", mean only" : "") << '\n';
  }
  return kExitOk;
}

struct ClassifyArgs {
  fs::path image;
  fs::path classifier;
  fs::path output;
};

inline int cmd_classify(const ClassifyArgs& a, const GlobalOptions& g, std::ostream& out) {
  detail::Clock clock;
  const io::ClassifierArtifact art = io::read_classifier(a.classifier);
  const std::string quantize = g.quantize.empty() ? art.quantize : g.quantize;
  const Image f = detail::load_image(a.image, quantize);
  const std::string window = parse_window_spec(g.window.empty() ? art.window : g.window).to_string();
  const auto w = make_window(f.grid(), parse_window_spec(window));
  FilterPlan plan;
  plan.mode = parse_filter_mode(g.mode.empty() ? art.mode : g.mode);
  const unsigned threads = detail::thread_count(g);
  const LabelMap labels = classify_image(f, w, art.classifier, plan, threads);
  io::write_label_map(a.output, labels,
                      detail::palette_for(art.names, static_cast<int>(art.classifier.num_classes())));
  io::RunManifest m;
  m.command = "classify";
  m.parameters = {{"window", window}, {"mode", std::string(to_string(plan.mode))}, {"quantize", quantize}};
  m.add_input(a.image);
  m.add_input(a.classifier);
  m.add_output(a.output);
  m.add_output(io::palette_path(a.output));
  m.wall_time_seconds = clock.seconds();
  io::write_manifest(detail::manifest_for(a.output), m);
  out << "wrote " << a.output.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  fs::path predicted;
  fs::path truth;
  std::vector<int> ignore;
  std::string names;
  fs::path output;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  detail::Clock clock;
  const auto pred = io::read_label_map(a.predicted);
  const auto truth = io::read_label_map(a.truth);
  const ConfusionMatrix cm = evaluate(pred.labels, truth.labels, a.ignore);
  std::vector<std::string> names = detail::split_names(a.names);
  if (names.empty()) {
    for (const auto& e : pred.palette.entries) names.push_back(e.name.empty() ? std::to_string(names.size()) : e.name);
  }
  std::vector<std::string> shown = names;
  while (shown.size() < cm.num_classes) shown.push_back(std::to_string(shown.size()));
  // Drop ignored rows from the table but keep the class count.
  ConfusionMatrix kept = cm;
  for (const int i : a.ignore) {
    if (i >= 0 && static_cast<std::size_t>(i) < kept.num_classes) kept.support[static_cast<std::size_t>(i)] = 0;
  }
  const std::string table = format_confusion(kept, shown);
  out << table;
  if (!a.output.empty()) {
    io::write_file_atomic(a.output, table);
    io::RunManifest m;
    m.command = "eval";
    m.parameters = {{"ignore", a.ignore}, {"names", a.names}};
    m.add_input(a.predicted);
    m.add_input(a.truth);
    m.add_output(a.output);
    m.wall_time_seconds = clock.seconds();
    io::write_manifest(detail::manifest_for(a.output), m);
  }
  return kExitOk;
}

/// Parses `args` (without the program name) and runs one subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Local histogram transforms, occlusion texture models and subspace pixel classification."};
  app.name("histocube");
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads (default: HISTOCUBE_THREADS or 1)")->check(CLI::PositiveNumber);
  app.add_option("--mode", g.mode, "Filter mode: auto, direct, fft or noncyclic")
      ->check(CLI::IsMember({"auto", "direct", "fft", "noncyclic"}));
  app.add_option("--window", g.window, "Window: delta, box:R or center-weighted:R[:c0]");
  app.add_option("--quantize", g.quantize, "Per-channel quantization, e.g. 8,drop,8");

  LhArgs lh;
  auto* lh_cmd = app.add_subcommand("lh", "Local histogram cube of an image");
  lh_cmd->add_option("input", lh.input, "PGM or PPM image")->required();
  lh_cmd->add_option("-o,--output", lh.output, "Cube file")->required();
  lh_cmd->add_option("--levels", lh.levels, "Also write one PGM per level into this directory");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Sample textures from a model config");
  synth_cmd->add_option("config", synth.config, "Model config (YAML)")->required();
  synth_cmd->add_option("-o,--output", synth.output_dir, "Output directory")->required();
  synth_cmd->add_option("--count", synth.count, "Number of textures")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--source", synth.sources, "Source image per label, replacing the config's sources");

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "Check flatness, the decomposition bound and model structure");
  verify_cmd->add_option("config", verify.config, "Model config (YAML)")->required();
  verify_cmd->add_option("--checks", verify.checks, "Comma-separated: flat, bound, ti, disjoint");
  verify_cmd->add_option("--samples", verify.samples, "Monte Carlo samples instead of enumeration");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a subspace classifier from a labeled image");
  train_cmd->add_option("image", tr.image, "Training image")->required();
  train_cmd->add_option("labels", tr.labels, "Ground-truth label map")->required();
  train_cmd->add_option("-o,--output", tr.output, "Classifier file")->required();
  train_cmd->add_option("--classes", tr.classes, "Classes 0..K-1 to train (default: all labels)");
  train_cmd->add_option("--samples", tr.samples, "Training points per class (M)");
  train_cmd->add_option("--components", tr.components, "Principal directions per class (N)");
  train_cmd->add_option("--margin", tr.margin, "Border margin (default: window radius)");
  train_cmd->add_option("--names", tr.names, "Comma-separated class names");

  ClassifyArgs cl;
  auto* classify_cmd = app.add_subcommand("classify", "Label every pixel of an image");
  classify_cmd->add_option("image", cl.image, "Image")->required();
  classify_cmd->add_option("classifier", cl.classifier, "Classifier file")->required();
  classify_cmd->add_option("-o,--output", cl.output, "Label map (PGM + palette)")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Confusion table of predicted against true labels");
  eval_cmd->add_option("predicted", ev.predicted, "Predicted label map")->required();
  eval_cmd->add_option("truth", ev.truth, "Ground-truth label map")->required();
  eval_cmd->add_option("--ignore", ev.ignore, "True labels to leave out")->delimiter(',');
  eval_cmd->add_option("--names", ev.names, "Comma-separated class names");
  eval_cmd->add_option("-o,--output", ev.output, "Also write the table here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*lh_cmd) return cmd_lh(lh, g, out);
    if (*synth_cmd) return cmd_synth(synth, g, seed_opt->count() > 0, out);
    if (*verify_cmd) return cmd_verify(verify, g, out);
    if (*train_cmd) return cmd_train(tr, g, out, err);
    if (*classify_cmd) return cmd_classify(cl, g, out);
    if (*eval_cmd) return cmd_eval(ev, out);
  } catch (const io::ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitIo;
  } catch (const io::IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const EnumerationCapExceeded& e) {
    err << "error: " << e.what() << "\n(exact checks enumerate the model; use --samples N for Monte Carlo)\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace histocube::cli

#endif  // HISTOCUBE_TOOLS_CLI_APP_HPP
