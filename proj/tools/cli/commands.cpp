// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli/run_config.hpp"
#include "fastprotect/ablation.hpp"
#include "fastprotect/bench.hpp"
#include "fastprotect/countermeasure.hpp"
#include "fastprotect/datasets.hpp"
#include "fastprotect/errors.hpp"
#include "fastprotect/metrics.hpp"
#include "fastprotect/pipeline.hpp"
#include "fastprotect/targets.hpp"

namespace fastprotect::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void refuse_overwrite(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) throw ConfigError(path.string() + " exists; pass --force to overwrite");
}

// Finite simple values only; NaN and infinities become strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

json metrics_json(const MetricsReport& m) {
  return {{"psnr", number(m.psnr)},
          {"linf", m.linf},
          {"mean_abs_delta", m.mean_abs_delta},
          {"latent_shift_ratio", number(m.latent_shift_ratio)},
          {"protection_proxy", number(m.protection_proxy)}};
}

std::vector<std::size_t> parse_list(const std::string& s, long min_value) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(',', start), s.size());
    const std::string item = s.substr(start, end - start);
    if (!item.empty()) {
      try {
        std::size_t used = 0;
        const long v = std::stol(item, &used);
        if (used != item.size() || v < min_value) throw std::invalid_argument(item);
        out.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw ConfigError("bad value '" + item + "'");
      }
    }
    start = end + 1;
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

/// Options shared by every command plus the overridable run settings.
struct Settings {
  std::string config;
  std::uint64_t seed = 0;
  int steps = 0;
  int k = 0;
  int eta = 0;
  int batch_size = 0;
  std::size_t base_resolution = 0;
  double lr = 0.0;
  int pgd_steps = 0;
  std::string data;
  std::string model;
  std::string output;

  // Several subcommands register the same key; only the parsed one has counts.
  std::multimap<std::string, CLI::Option*> given;

  bool has(const std::string& name) const {
    const auto [b, e] = given.equal_range(name);
    return std::any_of(b, e, [](const auto& kv) { return kv.second->count() > 0; });
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : RunConfig::load(config);
    if (has("seed")) c.seed = seed;
    if (has("steps")) c.train.steps = steps;
    if (has("k")) c.train.k = k;
    if (has("eta")) c.train.eta = eta;
    if (has("batch-size")) c.train.batch_size = batch_size;
    if (has("base-resolution")) c.train.base_resolution = base_resolution;
    if (has("lr")) c.train.lr = lr;
    if (has("pgd-steps")) c.pgd.pgd_steps = pgd_steps;
    if (has("data")) c.paths.data = data;
    if (has("model")) c.paths.model = model;
    if (has("out")) c.paths.output = output;
    c.train.seed = c.seed;
    c.pgd.eta = c.train.eta;
    c.validate();
    return c;
  }
};

void add_common(CLI::App* cmd, Settings& s) {
  cmd->add_option("--config", s.config, "INI run configuration")->check(CLI::ExistingFile);
  s.given.emplace("seed", cmd->add_option("--seed", s.seed, "Run seed"));
}

void add_train_overrides(CLI::App* cmd, Settings& s) {
  s.given.emplace("steps", cmd->add_option("--steps", s.steps, "Training steps"));
  s.given.emplace("k", cmd->add_option("--k", s.k, "Number of clusters"));
  s.given.emplace("eta", cmd->add_option("--eta", s.eta, "Budget in 1/255 units"));
  s.given.emplace("batch-size", cmd->add_option("--batch-size", s.batch_size, "Batch size"));
  s.given.emplace("base-resolution", cmd->add_option("--base-resolution", s.base_resolution, "Encoding resolution"));
  s.given.emplace("lr", cmd->add_option("--lr", s.lr, "Adam learning rate"));
}

void print_hash(std::ostream& out, const RunConfig& c) { out << "config-hash: " << c.hash() << '\n'; }

std::unique_ptr<ConvEncoder> make_encoder(const RunConfig& c) { return std::make_unique<ConvEncoder>(c.encoder); }

std::vector<fs::path> inputs_of(const fs::path& input) {
  if (fs::is_directory(input)) return list_images(input);
  if (!fs::exists(input)) throw IoError("input " + input.string() + " does not exist");
  return {input};
}

// ---- commands ----

int cmd_gen_data(const Settings& s, std::size_t count, int clusters, std::size_t side, bool force, std::ostream& out) {
  const RunConfig c = s.resolve();
  print_hash(out, c);
  const fs::path dir = c.paths.data;
  ensure_dir(dir);
  const auto data = synthetic::blob_dataset(count, clusters, side, c.seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu.png", i);
    refuse_overwrite(dir / name, force);
    save_image(data[i].image, dir / name);
  }
  out << "wrote " << data.size() << " images to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_gen_targets(const Settings& s, bool force, std::ostream& out) {
  const RunConfig c = s.resolve();
  print_hash(out, c);
  const fs::path dir = c.paths.output;
  for (const char* f : {"low.png", "mid.png", "high.png", "targets.json"}) refuse_overwrite(dir / f, force);
  ensure_dir(dir);
  const auto encoder = make_encoder(c);
  const auto targets = make_targets(*encoder, c.seed, c.train.base_resolution);
  json side = {{"seed", c.seed},
               {"base_resolution", c.train.base_resolution},
               {"encoder_fp", encoder->fingerprint()},
               {"config_hash", c.hash()},
               {"targets", json::array()}};
  for (const auto& t : targets) {
    const std::string name = std::string(to_string(t.level)) + ".png";
    save_image(generate_target(t.level, t.seed), dir / name);
    side["targets"].push_back({{"level", to_string(t.level)}, {"file", name}, {"entropy", t.entropy}});
  }
  write_text(dir / "targets.json", side.dump(2) + "\n");
  out << "wrote targets to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_train(const Settings& s, std::ostream& out) {
  const RunConfig c = s.resolve();
  print_hash(out, c);
  if (!fs::is_directory(c.paths.data)) throw IoError("data directory " + c.paths.data.string() + " not found");
  const auto files = list_images(c.paths.data);
  if (files.empty()) throw ConfigError("data directory " + c.paths.data.string() + " has no images");
  std::vector<Image> data;
  data.reserve(files.size());
  const std::size_t res = c.train.base_resolution;
  for (const auto& f : files) {
    Image img = load_image(f);
    data.push_back(img.height() == res && img.width() == res ? std::move(img) : resize_image(img, res, res));
  }
  const auto encoder = make_encoder(c);
  const auto targets = make_targets(*encoder, c.seed, res);
  const MoPModel model = train_model(*encoder, data, targets, c.train);
  const fs::path parent = fs::path(c.paths.model).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  save_model(model, c.paths.model);
  out << "trained on " << data.size() << " images; bundle " << c.paths.model.string() << '\n';
  return kExitOk;
}

struct ProtectFlags {
  std::string input;
  bool no_adaptive = false;
  std::string fixed_target;
  bool dump_maps = false;
  bool force = false;
};

ProtectOptions protect_options(const RunConfig& c, const ProtectFlags& f) {
  ProtectOptions o;
  o.adaptive_strength = !f.no_adaptive;
  if (!f.fixed_target.empty()) o.fixed_target = parse_target_level(f.fixed_target);
  o.scaling = c.scaling;
  o.keep_map = f.dump_maps;
  return o;
}

int cmd_protect(const Settings& s, const ProtectFlags& f, std::ostream& out, std::ostream& err) {
  const RunConfig c = s.resolve();
  print_hash(out, c);
  const auto files = inputs_of(f.input);
  if (files.empty()) throw ConfigError("no input images in " + f.input);
  const auto encoder = make_encoder(c);
  const MoPModel model = load_model(c.paths.model);
  check_compatible(model, *encoder);
  const ProtectOptions opts = protect_options(c, f);
  const fs::path dir = c.paths.output;
  ensure_dir(dir);

  int failures = 0;
  for (const auto& outcome : protect_files(*encoder, model, files, opts)) {
    if (!outcome.ok()) {
      err << "error: " << outcome.id << ": " << outcome.error << '\n';
      ++failures;
      continue;
    }
    const ProtectionResult& r = *outcome.result;
    const std::string stem = fs::path(outcome.id).stem().string();
    refuse_overwrite(dir / (stem + ".png"), f.force);
    save_image(r.protected_image, dir / (stem + ".png"));
    json side = {{"input", outcome.id},
                 {"target", to_string(r.target)},
                 {"cluster", r.cluster},
                 {"effective_linf", r.effective_linf},
                 {"effective_linf_255", r.effective_linf * 255.0},
                 {"eta", model.eta()},
                 {"adaptive_strength", opts.adaptive_strength},
                 {"config_hash", c.hash()},
                 {"timing_ms",
                  {{"encode", r.timing.encode_ms},
                   {"select", r.timing.select_ms},
                   {"resize", r.timing.resize_ms},
                   {"map", r.timing.map_ms},
                   {"apply", r.timing.apply_ms},
                   {"total", r.timing.total_ms()}}}};
    write_text(dir / (stem + ".json"), side.dump(2) + "\n");
    if (r.map) {
      Tensor m = r.map->m;
      m *= 1.0 / opts.scaling.max_multiplier();
      save_grayscale(m, dir / (stem + "_map.png"));
    }
    out << stem << ": target=" << to_string(r.target) << " cluster=" << r.cluster
        << " linf=" << r.effective_linf * 255.0 << "/255\n";
  }
  return failures ? kExitRuntime : kExitOk;
}

int cmd_eval(const Settings& s, const ProtectFlags& f, const std::vector<std::string>& cms, const std::string& report,
             std::ostream& out) {
  const RunConfig c = s.resolve();
  print_hash(out, c);
  std::vector<Countermeasure> countermeasures;
  for (const auto& spec : cms) countermeasures.push_back(Countermeasure::parse(spec));
  const auto files = inputs_of(f.input);
  if (files.empty()) throw ConfigError("no input images in " + f.input);
  const auto encoder = make_encoder(c);
  const MoPModel model = load_model(c.paths.model);
  check_compatible(model, *encoder);
  const ProtectOptions opts = protect_options(c, f);

  json rows = json::array();
  std::vector<double> pre_ratios;
  std::map<std::string, std::vector<double>> post_ratios;
  for (const auto& file : files) {
    const Image x = load_image(file);
    const ProtectionResult r = protect(*encoder, model, x, opts);
    const LatentCode& z_y = model.target(r.target).z_y;
    const MetricsReport pre = measure(*encoder, Original{x}, Protected{r.protected_image}, z_y);
    pre_ratios.push_back(pre.latent_shift_ratio);
    json row = {{"input", file.string()},
                {"target", to_string(r.target)},
                {"cluster", r.cluster},
                {"pre", metrics_json(pre)},
                {"post", json::object()}};
    for (const auto& cm : countermeasures) {
      const Image purified = apply_countermeasure(r.protected_image, cm, c.seed);
      const MetricsReport post = measure(*encoder, Original{x}, Protected{purified}, z_y);
      post_ratios[cm.to_string()].push_back(post.latent_shift_ratio);
      row["post"][cm.to_string()] = metrics_json(post);
    }
    rows.push_back(std::move(row));
  }

  const auto summary = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    const auto below = std::count_if(v.begin(), v.end(), [](double r) { return r < 1.0; });
    return json{{"mean_latent_shift_ratio", number(mean)},
                {"mean_protection_proxy", number(1.0 - mean)},
                {"fraction_ratio_below_one", static_cast<double>(below) / static_cast<double>(v.size())}};
  };
  json doc = {{"config_hash", c.hash()}, {"seed", c.seed}, {"images", rows.size()}, {"pre", summary(pre_ratios)},
              {"post", json::object()}, {"rows", rows}};
  for (const auto& [name, v] : post_ratios) doc["post"][name] = summary(v);
  const fs::path path = report.empty() ? c.paths.output / "eval.json" : fs::path(report);
  write_text(path, doc.dump(2) + "\n");
  out << "eval report " << path.string() << '\n';
  return kExitOk;
}

int cmd_bench(const Settings& s, const std::string& sizes, int reps, const std::string& csv, std::ostream& out) {
  const RunConfig c = s.resolve();
  print_hash(out, c);
  const auto encoder = make_encoder(c);
  BenchConfig b;
  b.sizes = parse_list(sizes, 1);
  b.repetitions = reps;
  b.pgd.eta = c.train.eta;
  b.pgd.pgd_step_len = c.pgd.pgd_step_len;
  b.pgd.pgd_steps = s.has("pgd-steps") ? c.pgd.pgd_steps : 50;
  b.loss = c.loss();
  b.protect.scaling = c.scaling;
  b.seed = c.seed;
  MoPModel model = [&] {
    if (s.has("model")) return load_model(c.paths.model);
    // Latency does not depend on the perturbation values; an untrained model suffices.
    const std::size_t res = c.train.base_resolution;
    const auto targets = make_targets(*encoder, c.seed, res);
    std::vector<LatentCode> latents;
    for (int i = 0; i < c.train.k; ++i) {
      latents.push_back(encoder->encode(synthetic::random_image(res, c.seed + static_cast<std::uint64_t>(i))).latent);
    }
    return zero_model(*encoder, targets, fit_assignment(latents, c.train.k, c.seed), c.train.eta, res);
  }();
  check_compatible(model, *encoder);
  const auto rows = bench_latency(*encoder, model, b);
  const fs::path path = csv.empty() ? c.paths.output / "bench.csv" : fs::path(csv);
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  write_bench_csv(rows, path);
  write_bench_csv(rows, out);
  return kExitOk;
}

int cmd_ablate(const Settings& s, const std::string& name, const std::string& seeds, std::size_t train_images,
               std::size_t holdout, const std::string& report, std::ostream& out) {
  const RunConfig c = s.resolve();
  print_hash(out, c);
  const auto encoder = make_encoder(c);
  AblationConfig a;
  a.train = c.train;
  a.pgd = c.pgd;
  if (!s.has("pgd-steps")) a.pgd.pgd_steps = 50;
  a.clusters = c.train.k;
  a.target_seed = c.seed;
  if (!seeds.empty()) {
    a.seeds.clear();
    for (std::size_t v : parse_list(seeds, 0)) a.seeds.push_back(v);
  } else {
    a.seeds = {c.seed, c.seed + 1, c.seed + 2};
  }
  if (train_images) a.train_images = train_images;
  if (holdout) a.holdout_images = holdout;
  const AblationReport r = run_ablation(name, *encoder, a);
  json doc = json::parse(r.to_json());
  doc["config_hash"] = c.hash();
  const fs::path path = report.empty() ? c.paths.output / (name + ".json") : fs::path(report);
  write_text(path, doc.dump(2) + "\n");
  out << name << ": " << (r.passed() ? "pass" : "fail") << " (" << path.string() << ")\n";
  return kExitOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const NumericError*>(&e)) return kExitRuntime;
  return kExitValidation;
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  std::error_code ec;
  fs::directory_iterator it(dir, ec);
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::vector<fs::path> out;
  for (const auto& entry : it) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fast image protection with pre-trained perturbation mixtures", "fastprotect"};
  app.require_subcommand(1);
  Settings s;

  std::size_t count = 64;
  int clusters = 4;
  std::size_t side = 64;
  bool force = false;
  auto* gen_data = app.add_subcommand("gen-data", "Write a seeded synthetic training set");
  add_common(gen_data, s);
  s.given.emplace("data", gen_data->add_option("--out", s.data, "Output directory"));
  gen_data->add_option("--count", count, "Number of images");
  gen_data->add_option("--clusters", clusters, "Number of image families");
  gen_data->add_option("--size", side, "Image side in pixels");
  gen_data->add_flag("--force", force, "Overwrite existing files");

  auto* gen_targets = app.add_subcommand("gen-targets", "Write the low/mid/high target images and entropies");
  add_common(gen_targets, s);
  s.given.emplace("out", gen_targets->add_option("--out", s.output, "Output directory"));
  s.given.emplace("base-resolution", gen_targets->add_option("--base-resolution", s.base_resolution, "Resolution for the entropy sidecar"));
  gen_targets->add_flag("--force", force, "Overwrite existing files");

  auto* train = app.add_subcommand("train", "Train a perturbation bundle");
  add_common(train, s);
  add_train_overrides(train, s);
  s.given.emplace("data", train->add_option("--data", s.data, "Training image directory"));
  s.given.emplace("model", train->add_option("--out", s.model, "Output bundle path"));

  ProtectFlags pf;
  auto add_protect_flags = [&](CLI::App* cmd) {
    s.given.emplace("model", cmd->add_option("--model", s.model, "Bundle path"));
    cmd->add_option("--input", pf.input, "Image file or directory")->required();
    cmd->add_flag("--no-adaptive-strength", pf.no_adaptive, "Apply the perturbation without the strength map");
    cmd->add_option("--fixed-target", pf.fixed_target, "Force the target: low, mid or high");
  };
  auto* protect_cmd = app.add_subcommand("protect", "Protect an image or a directory of images");
  add_common(protect_cmd, s);
  add_protect_flags(protect_cmd);
  s.given.emplace("out", protect_cmd->add_option("--out", s.output, "Output directory"));
  protect_cmd->add_flag("--dump-maps", pf.dump_maps, "Also write the strength map as a grayscale PNG");
  protect_cmd->add_flag("--force", pf.force, "Overwrite existing outputs");

  std::vector<std::string> cms;
  std::string report;
  auto* eval = app.add_subcommand("eval", "Protect and measure, optionally after countermeasures");
  add_common(eval, s);
  add_protect_flags(eval);
  eval->add_option("--countermeasure", cms, "noise:<sigma>, jpeg:<quality> or resize:<scale>");
  eval->add_option("--report", report, "Report JSON path");
  s.given.emplace("out", eval->add_option("--out", s.output, "Output directory for the default report"));

  std::string sizes = "256,512,1024";
  int reps = 5;
  std::string csv;
  auto* bench = app.add_subcommand("bench", "Latency of protect() versus PGD");
  add_common(bench, s);
  s.given.emplace("model", bench->add_option("--model", s.model, "Bundle path (default: untrained model)"));
  bench->add_option("--sizes", sizes, "Comma separated square sizes");
  bench->add_option("--reps", reps, "Timed repetitions per size");
  s.given.emplace("pgd-steps", bench->add_option("--pgd-steps", s.pgd_steps, "PGD iterations (default 50)"));
  s.given.emplace("base-resolution", bench->add_option("--base-resolution", s.base_resolution, "Encoding resolution"));
  bench->add_option("--csv", csv, "CSV output path");
  s.given.emplace("out", bench->add_option("--out", s.output, "Output directory for the default CSV"));

  std::string ablation;
  std::string seeds;
  std::size_t train_images = 0;
  std::size_t holdout = 0;
  auto* ablate = app.add_subcommand("ablate", "Run an ablation study on synthetic data");
  add_common(ablate, s);
  add_train_overrides(ablate, s);
  ablate->add_option("name", ablation, "uap_vs_mop, k_sweep, target_sweep or warm_start")
      ->required()
      ->check(CLI::IsMember(std::vector<std::string>(kAblationNames.begin(), kAblationNames.end())));
  ablate->add_option("--seeds", seeds, "Comma separated seeds");
  ablate->add_option("--train-images", train_images, "Training images per seed");
  ablate->add_option("--holdout", holdout, "Holdout images per seed");
  s.given.emplace("pgd-steps", ablate->add_option("--pgd-steps", s.pgd_steps, "PGD iterations (default 50)"));
  ablate->add_option("--report", report, "Report JSON path");
  s.given.emplace("out", ablate->add_option("--out", s.output, "Output directory for the default report"));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_data->parsed()) return cmd_gen_data(s, count, clusters, side, force, out);
    if (gen_targets->parsed()) return cmd_gen_targets(s, force, out);
    if (train->parsed()) return cmd_train(s, out);
    if (protect_cmd->parsed()) return cmd_protect(s, pf, out, err);
    if (eval->parsed()) return cmd_eval(s, pf, cms, report, out);
    if (bench->parsed()) return cmd_bench(s, sizes, reps, csv, out);
    if (ablate->parsed()) return cmd_ablate(s, ablation, seeds, train_images, holdout, report, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace fastprotect::cli
