// Copyright 2026 The polarface Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "polarface/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "polarface/autograd/var.hpp"
#include "polarface/core/error.hpp"
#include "polarface/data/catalog.hpp"
#include "polarface/data/fixture.hpp"
#include "polarface/data/png.hpp"
#include "polarface/io/archive.hpp"
#include "polarface/trainer/trainer.hpp"

namespace polarface {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
  train.validate();
  if (trial < 0) throw ConfigError("trial must be non-negative");
  if (modes.empty()) throw ConfigError("at least one verification mode is required");
  eval_config().validate();
}

EvalConfig RunConfig::eval_config() const {
  EvalConfig e;
  e.protocol = train.protocol;
  e.counts = counts;
  e.trials = trials;
  e.seed = eval_seed;
  e.thermal = train.thermal;
  e.image_size = train.network.image_size;
  e.extractor = train.extractor;
  e.normalize_templates = normalize_templates;
  e.exclude_same_capture = exclude_same_capture;
  e.batch_size = eval_batch_size;
  return e;
}

json to_json(const RunConfig& c) {
  json modes = json::array();
  for (VerifyMode m : c.modes) modes.push_back(to_string(m));
  return {{"catalog", c.catalog},
          {"out", c.out},
          {"train", to_json(c.train)},
          {"counts",
           {{"protocol1_train", c.counts.protocol1_train},
            {"protocol1_eval", c.counts.protocol1_eval},
            {"protocol2_train", c.counts.protocol2_train},
            {"protocol2_eval", c.counts.protocol2_eval}}},
          {"trial", c.trial},
          {"eval",
           {{"trials", c.trials},
            {"seed", c.eval_seed},
            {"modes", modes},
            {"normalize_templates", c.normalize_templates},
            {"exclude_same_capture", c.exclude_same_capture},
            {"batch_size", c.eval_batch_size}}},
          {"checkpoint", c.checkpoint}};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  require_known_keys(j, {"catalog", "out", "train", "counts", "trial", "eval", "checkpoint"},
                     "run config");
  RunConfig c;
  read(j, "catalog", c.catalog, "run config");
  read(j, "out", c.out, "run config");
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("counts")) {
    const json& k = j.at("counts");
    const std::string where = "split counts";
    require_known_keys(k, {"protocol1_train", "protocol1_eval", "protocol2_train", "protocol2_eval"},
                       where);
    read(k, "protocol1_train", c.counts.protocol1_train, where);
    read(k, "protocol1_eval", c.counts.protocol1_eval, where);
    read(k, "protocol2_train", c.counts.protocol2_train, where);
    read(k, "protocol2_eval", c.counts.protocol2_eval, where);
  }
  read(j, "trial", c.trial, "run config");
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    const std::string where = "eval config";
    require_known_keys(e, {"trials", "seed", "modes", "normalize_templates", "exclude_same_capture",
                           "batch_size"},
                       where);
    read(e, "trials", c.trials, where);
    read(e, "seed", c.eval_seed, where);
    if (e.contains("modes")) {
      std::vector<std::string> names;
      read(e, "modes", names, where);
      c.modes.clear();
      for (const auto& n : names) c.modes.push_back(parse_verify_mode(n));
    }
    read(e, "normalize_templates", c.normalize_templates, where);
    read(e, "exclude_same_capture", c.exclude_same_capture, where);
    read(e, "batch_size", c.eval_batch_size, where);
  }
  read(j, "checkpoint", c.checkpoint, "run config");
  return c;
}

namespace {

/// Flags shared by every subcommand; set ones override the config file.
struct Flags {
  std::optional<std::string> config, out, catalog, checkpoint, protocol, mode, attention;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials, image_size, trial;
  bool unsupervised = false;
  bool deterministic = false;
};

void add_common(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "JSON run configuration");
  cmd.add_option("--out", f.out, "Output directory");
  cmd.add_option("--seed", f.seed, "Seed for training and evaluation splits");
  cmd.add_option("--protocol", f.protocol, "Protocol 1 or 2");
  cmd.add_option("--image-size", f.image_size, "Square image size");
  cmd.add_option("--attention", f.attention, "Attention mode: sagan or literal");
  cmd.add_flag("--unsupervised", f.unsupervised, "Drop the paired L1 and feature terms");
  cmd.add_flag("--deterministic", f.deterministic, "Record deterministic mode");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

/// Config file, then flags. Paths in the file resolve against its directory.
RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (f.config) {
    c = run_config_from_json(read_json_file(*f.config));
    const fs::path base = fs::path(*f.config).parent_path();
    auto rebase = [&](std::string& p) {
      if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
    };
    rebase(c.catalog);
    rebase(c.checkpoint);
    rebase(c.out);
    if (c.train.extractor.kind == "archive") rebase(c.train.extractor.path);
  }
  if (f.out) c.out = *f.out;
  if (f.catalog) c.catalog = *f.catalog;
  if (f.checkpoint) c.checkpoint = *f.checkpoint;
  if (f.seed) {
    c.train.seed = *f.seed;
    c.eval_seed = *f.seed;
  }
  if (f.protocol) {
    c.train.protocol = parse_protocol(*f.protocol);
  }
  if (f.image_size) c.train.network.image_size = *f.image_size;
  if (f.attention) c.train.network.attention = parse_attention_mode(*f.attention);
  if (f.unsupervised) c.train.weights.supervised = false;
  if (f.deterministic) c.train.deterministic = true;
  if (f.trials) c.trials = *f.trials;
  if (f.trial) c.trial = *f.trial;
  if (f.mode) {
    c.modes.clear();
    std::stringstream ss(*f.mode);
    std::string name;
    while (std::getline(ss, name, ',')) c.modes.push_back(parse_verify_mode(name));
  }
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

/// Paths are stored absolute so the snapshot can be rerun from anywhere.
void write_snapshot(const RunConfig& c) {
  fs::create_directories(c.out);
  RunConfig snap = c;
  auto absolute = [](std::string& p) {
    if (!p.empty()) p = fs::absolute(p).lexically_normal().string();
  };
  absolute(snap.catalog);
  absolute(snap.checkpoint);
  absolute(snap.out);
  if (snap.train.extractor.kind == "archive") absolute(snap.train.extractor.path);
  write_text(fs::path(c.out) / "resolved_config.json", to_json(snap).dump(2) + "\n");
}

SubjectCatalog open_catalog(const RunConfig& c) {
  if (c.catalog.empty()) throw ConfigError("no catalog manifest given (--catalog or \"catalog\")");
  SubjectCatalog catalog = SubjectCatalog::load_manifest(c.catalog);
  catalog.validate();
  return catalog;
}

Archive open_checkpoint(const RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint or \"checkpoint\")");
  return load_archive(c.checkpoint);
}

json split_json(const ProtocolSplit& s) {
  return {{"protocol", to_string(s.protocol)},
          {"trial_seed", s.trial_seed},
          {"train_subjects", s.train_subjects},
          {"eval_subjects", s.eval_subjects},
          {"train_range", s.train_range}};
}

/// PNG at `path` registered to the network size.
FaceImage load_image(const std::string& path, Modality modality, int size) {
  FaceImage img = decode_image(read_file(path), modality);
  if (img.height() != size || img.width() != size) img = resize_image(img, size);
  return img.as_three_channel();
}

Modality parse_direction(const std::string& d, Modality thermal, Modality* input) {
  if (d == "t2v") {
    *input = thermal;
    return Modality::kVisible;
  }
  if (d == "v2t") {
    *input = Modality::kVisible;
    return Modality::kPolar;
  }
  throw ConfigError("direction must be t2v or v2t, got '" + d + "'");
}

int cmd_fixtures(const Flags& f, int subjects, int images, int volume_two,
                 const std::vector<std::string>& ranges, std::ostream& out) {
  if (f.config) throw ConfigError("fixtures takes flags only");
  const std::string dir = f.out.value_or("fixture");
  const int size = f.image_size.value_or(64);
  const std::uint64_t seed = f.seed.value_or(1);
  FixtureOptions opts;
  if (!ranges.empty()) opts.ranges = ranges;
  opts.volume_two_subjects = volume_two;
  const SubjectCatalog catalog = synth_fixture(subjects, images, size, seed, opts);
  fs::create_directories(dir);
  const std::string manifest = (fs::path(dir) / "manifest.json").string();
  catalog.save_manifest(manifest);
  const json snapshot = {{"subjects", subjects},      {"images", images},
                         {"image_size", size},        {"seed", seed},
                         {"volume_two", volume_two},  {"ranges", opts.ranges},
                         {"luminance_nuisance", opts.luminance_nuisance},
                         {"chroma_nuisance", opts.chroma_nuisance},
                         {"pixel_noise", opts.pixel_noise}};
  write_text(fs::path(dir) / "resolved_config.json", snapshot.dump(2) + "\n");
  out << "wrote " << catalog.entries.size() << " images for " << subjects << " subjects to "
      << manifest << "\n";
  return kExitOk;
}

int cmd_train(const Flags& f, const std::optional<std::string>& resume, std::ostream& out) {
  const RunConfig c = resolve(f);
  const SubjectCatalog catalog = open_catalog(c);
  const ProtocolSplit split = build_split(
      catalog, c.train.protocol, derive_seed(c.eval_seed, static_cast<std::uint64_t>(c.trial)),
      c.counts);
  write_snapshot(c);
  write_text(fs::path(c.out) / "split.json", split_json(split).dump(2) + "\n");
  std::unique_ptr<Trainer> trainer =
      resume ? std::make_unique<Trainer>(load_archive(*resume)) : std::make_unique<Trainer>(c.train);
  FitOptions opts;
  opts.out_dir = c.out;
  opts.on_step = [&](const StepLog& s) {
    out << "epoch " << s.epoch << " step " << s.step << " total_G " << s.losses.total_G
        << " total_D_v " << s.losses.total_D_v << " total_D_t " << s.losses.total_D_t << "\n";
  };
  const FitResult r = trainer->fit(catalog, split, opts);
  out << "wrote " << r.checkpoints.size() << " checkpoints to " << c.out << "\n";
  return kExitOk;
}

int cmd_evaluate(const Flags& f, std::ostream& out) {
  const RunConfig c = resolve(f);
  const SubjectCatalog catalog = open_catalog(c);
  write_snapshot(c);
  std::map<int, GeneratorPair> generators;
  std::optional<Archive> fixed;
  if (!c.checkpoint.empty()) fixed = open_checkpoint(c);
  GeneratorSource source = [&](int trial, const ProtocolSplit& split) -> GeneratorPair& {
    auto it = generators.find(trial);
    if (it != generators.end()) return it->second;
    if (fixed) return generators[trial] = load_generators(*fixed);
    // One model per trial, trained on that trial's split only.
    const std::string dir = (fs::path(c.out) / ("trial_" + std::to_string(trial))).string();
    fs::create_directories(dir);
    write_text(fs::path(dir) / "split.json", split_json(split).dump(2) + "\n");
    Trainer trainer(c.train);
    FitOptions opts;
    opts.out_dir = dir;
    trainer.fit(catalog, split, opts);
    out << "trial " << trial << ": trained " << trainer.step() << " steps\n";
    return generators[trial] = load_generators(trainer.checkpoint());
  };
  const auto reports = run_protocol(source, catalog, c.eval_config(), c.modes);
  json summary = json::array();
  for (const EvalReport& r : reports) {
    const std::string dir = (fs::path(c.out) / to_string(r.mode)).string();
    r.write(dir);
    summary.push_back(r.to_json());
    out << to_string(r.mode) << ": auc " << r.auc_mean << " +- " << r.auc_std << ", eer "
        << r.eer_mean << " +- " << r.eer_std << "\n";
  }
  write_text(fs::path(c.out) / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

int cmd_synthesize(const Flags& f, const std::string& direction,
                   const std::vector<std::string>& inputs, std::ostream& out) {
  const RunConfig c = resolve(f);
  GeneratorPair g = load_generators(open_checkpoint(c));
  Modality input = Modality::kVisible;
  const Modality result = parse_direction(direction, g.config.thermal, &input);
  Generator& net = direction == "t2v" ? *g.t2v : *g.v2t;
  write_snapshot(c);
  std::vector<FaceImage> images;
  for (const auto& p : inputs) images.push_back(load_image(p, input, g.config.network.image_size));
  const auto translated = translate(net, images, result, c.eval_batch_size);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const fs::path dst =
        fs::path(c.out) / (fs::path(inputs[i]).stem().string() + "_" + direction + ".png");
    write_file(dst.string(), encode_image(translated[i]));
    out << "wrote " << dst.string() << "\n";
  }
  return kExitOk;
}

int cmd_verify(const Flags& f, const std::string& gallery_path, const std::string& probe_path,
               std::ostream& out) {
  const RunConfig c = resolve(f);
  if (c.modes.size() != 1) throw ConfigError("verify takes exactly one mode");
  const VerifyMode mode = c.modes.front();
  const int size = c.train.network.image_size;
  const FaceImage gallery = load_image(gallery_path, Modality::kVisible, size);
  const FaceImage probe = load_image(probe_path, c.train.thermal, size);
  std::optional<GeneratorPair> g;
  if (needs_synthesis(mode)) {
    g = load_generators(open_checkpoint(c));
    if (g->config.network.image_size != size) {
      throw ConfigError("checkpoint image size differs from the configured one");
    }
  }
  write_snapshot(c);
  const auto extractor = make_extractor(c.train.extractor);
  std::optional<FaceImage> gallery_hat, probe_hat;
  if (g) {
    gallery_hat = translate(*g->v2t, {gallery}, Modality::kPolar).front();
    probe_hat = translate(*g->t2v, {probe}, Modality::kVisible).front();
  }
  const Template tg = build_template(gallery, gallery_hat ? &*gallery_hat : nullptr, *extractor,
                                     mode, Side::kGallery, c.normalize_templates);
  const Template tp = build_template(probe, probe_hat ? &*probe_hat : nullptr, *extractor, mode,
                                     Side::kProbe, c.normalize_templates);
  const double score = cosine_similarity(tg, tp);
  const json result = {{"mode", to_string(mode)},
                       {"gallery", gallery_path},
                       {"probe", probe_path},
                       {"score", score}};
  write_text(fs::path(c.out) / "verify.json", result.dump(2) + "\n");
  out << "score " << score << "\n";
  return kExitOk;
}

int cmd_attention_maps(const Flags& f, const std::string& direction,
                       const std::vector<std::string>& inputs, std::ostream& out) {
  const RunConfig c = resolve(f);
  GeneratorPair g = load_generators(open_checkpoint(c));
  Modality input = Modality::kVisible;
  parse_direction(direction, g.config.thermal, &input);
  Generator& net = direction == "t2v" ? *g.t2v : *g.v2t;
  write_snapshot(c);
  NoGradGuard guard;
  for (const auto& p : inputs) {
    const FaceImage img = load_image(p, input, g.config.network.image_size);
    Tensor<float> x(Shape{1, 3, img.height(), img.width()});
    std::copy(img.pixels.data(), img.pixels.data() + img.pixels.numel(), x.data());
    AttentionOutput<float> att;
    net.forward(constant(std::move(x)), false, &att);
    const fs::path dst =
        fs::path(c.out) / (fs::path(p).stem().string() + "_" + direction + "_attention.png");
    write_file(dst.string(), attention_heatmap_png(att.attention, 0));
    out << "wrote " << dst.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"polarface: visible/thermal face synthesis and cross-spectral verification"};
  app.require_subcommand(1);
  Flags f;

  int subjects = 8, images = 3, volume_two = 0;
  std::vector<std::string> ranges;
  auto* fixtures = app.add_subcommand("fixtures", "Write a synthetic paired-modality catalog");
  add_common(*fixtures, f);
  fixtures->add_option("--subjects", subjects, "Number of subjects")->check(CLI::PositiveNumber);
  fixtures->add_option("--images", images, "Captures per subject")->check(CLI::PositiveNumber);
  fixtures->add_option("--volume-two", volume_two, "Trailing subjects placed in Volume II only");
  fixtures->add_option("--ranges", ranges, "Range tags assigned round-robin");

  std::optional<std::string> resume;
  auto* train = app.add_subcommand("train", "Train both generators and discriminators");
  add_common(*train, f);
  train->add_option("--catalog", f.catalog, "Catalog manifest");
  train->add_option("--trial", f.trial, "Split trial index");
  train->add_option("--resume", resume, "Checkpoint to resume from");

  std::string direction;
  std::vector<std::string> inputs;
  auto* synth = app.add_subcommand("synthesize", "Translate images with a trained generator");
  add_common(*synth, f);
  synth->add_option("--checkpoint", f.checkpoint, "Checkpoint archive");
  synth->add_option("--direction", direction, "t2v or v2t")->required();
  synth->add_option("inputs", inputs, "Input PNG files")->required();

  std::string gallery, probe;
  auto* verify = app.add_subcommand("verify", "Score one visible gallery image against a thermal probe");
  add_common(*verify, f);
  verify->add_option("--checkpoint", f.checkpoint, "Checkpoint archive");
  verify->add_option("--mode", f.mode, "fusion, polar2vis, vis2polar or raw");
  verify->add_option("--gallery", gallery, "Visible PNG")->required();
  verify->add_option("--probe", probe, "Thermal PNG")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Run the verification protocol over trials");
  add_common(*evaluate, f);
  evaluate->add_option("--catalog", f.catalog, "Catalog manifest");
  evaluate->add_option("--checkpoint", f.checkpoint, "Use one checkpoint for every trial");
  evaluate->add_option("--mode", f.mode, "Comma-separated verification modes");
  evaluate->add_option("--trials", f.trials, "Number of trials");

  auto* maps = app.add_subcommand("attention-maps", "Export generator attention heat maps");
  add_common(*maps, f);
  maps->add_option("--checkpoint", f.checkpoint, "Checkpoint archive");
  maps->add_option("--direction", direction, "t2v or v2t")->required();
  maps->add_option("inputs", inputs, "Input PNG files")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (fixtures->parsed()) return cmd_fixtures(f, subjects, images, volume_two, ranges, out);
    if (train->parsed()) return cmd_train(f, resume, out);
    if (synth->parsed()) return cmd_synthesize(f, direction, inputs, out);
    if (verify->parsed()) return cmd_verify(f, gallery, probe, out);
    if (evaluate->parsed()) return cmd_evaluate(f, out);
    if (maps->parsed()) return cmd_attention_maps(f, direction, inputs, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << to_string(e.kind()) << " error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace polarface
