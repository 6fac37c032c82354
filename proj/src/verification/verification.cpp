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

#include "polarface/verification/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "polarface/core/error.hpp"

namespace polarface {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(VerifyMode m) noexcept {
  switch (m) {
    case VerifyMode::kFusion: return "fusion";
    case VerifyMode::kPolar2Vis: return "polar2vis";
    case VerifyMode::kVis2Polar: return "vis2polar";
    case VerifyMode::kRaw: return "raw";
  }
  return "?";
}

VerifyMode parse_verify_mode(const std::string& name) {
  for (VerifyMode m : {VerifyMode::kFusion, VerifyMode::kPolar2Vis, VerifyMode::kVis2Polar, VerifyMode::kRaw}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + name + "' (expected fusion, polar2vis, vis2polar or raw)");
}

bool needs_synthesis(VerifyMode m) noexcept { return m != VerifyMode::kRaw; }

// --- templates ----------------------------------------------------------------

namespace {

std::vector<double> to_double(std::span<const float> f, bool normalize) {
  std::vector<double> out(f.begin(), f.end());
  if (normalize) {
    double n = 0;
    for (double x : out) n += x * x;
    n = std::sqrt(n);
    if (!(n > 0) || !std::isfinite(n)) throw DegenerateTemplateError("cannot normalize a zero feature");
    for (double& x : out) x /= n;
  }
  return out;
}

}  // namespace

Template make_template(std::span<const float> f_x, std::span<const float> f_hat, VerifyMode mode,
                       Side side, bool normalize) {
  Template t;
  t.side = side;
  t.mode = mode;
  // Which feature a unimodal mode keeps depends on the side.
  const bool use_hat = (mode == VerifyMode::kPolar2Vis && side == Side::kProbe) ||
                       (mode == VerifyMode::kVis2Polar && side == Side::kGallery);
  if (mode == VerifyMode::kFusion) {
    if (f_x.size() != f_hat.size()) throw ConfigError("fusion features differ in dimensionality");
    const auto a = to_double(f_x, normalize), b = to_double(f_hat, normalize);
    t.vector.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) t.vector[i] = (a[i] + b[i]) / 2;
  } else if (use_hat) {
    if (f_hat.empty()) throw ConfigError(std::string(to_string(mode)) + " needs a synthesized feature");
    t.vector = to_double(f_hat, normalize);
  } else {
    t.vector = to_double(f_x, normalize);
  }
  for (double x : t.vector) {
    if (!std::isfinite(x)) throw DegenerateTemplateError("template has a non-finite entry");
  }
  return t;
}

Template build_template(const FaceImage& x, const FaceImage* x_hat,
                        const FeatureExtractor<float>& extractor, VerifyMode mode, Side side,
                        bool normalize) {
  std::vector<FaceImage> images{x};
  if (mode != VerifyMode::kRaw) {
    if (!x_hat) throw ConfigError(std::string(to_string(mode)) + " needs a synthesized image");
    images.push_back(*x_hat);
  }
  const auto f = embed(extractor, images);
  const std::span<const float> none;
  Template t = make_template(f[0], f.size() > 1 ? std::span<const float>(f[1]) : none, mode, side, normalize);
  t.subject_id = x.subject_id;
  t.id = x.capture_id;
  return t;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("templates differ in dimensionality");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0) || !(nb > 0) || !std::isfinite(na) || !std::isfinite(nb)) {
    throw DegenerateTemplateError("cosine similarity of a zero-norm template");
  }
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double cosine_similarity(const Template& a, const Template& b) {
  return cosine_similarity(a.vector, b.vector);
}

ScoreMatrix score_matrix(const std::vector<Template>& probes, const std::vector<Template>& gallery) {
  if (probes.empty() || gallery.empty()) throw ConfigError("score matrix needs probes and gallery");
  ScoreMatrix m;
  m.probes = static_cast<int>(probes.size());
  m.gallery = static_cast<int>(gallery.size());
  const std::size_t n = probes.size() * gallery.size();
  m.scores.resize(n);
  m.genuine.resize(n);
  m.counted.assign(n, 1);
  for (const auto& p : probes) m.probe_ids.push_back(p.id);
  for (const auto& g : gallery) m.gallery_ids.push_back(g.id);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const std::size_t k = p * gallery.size() + g;
      m.scores[k] = cosine_similarity(probes[p], gallery[g]);
      m.genuine[k] = probes[p].subject_id == gallery[g].subject_id;
    }
  }
  return m;
}

// --- ROC ----------------------------------------------------------------------

ROCResult roc_auc_eer(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw UndefinedMetricError("ROC needs at least one genuine and one impostor score");
  }
  struct Scored {
    double score;
    bool genuine;
  };
  std::vector<Scored> all;
  all.reserve(genuine.size() + impostor.size());
  for (double s : genuine) all.push_back({s, true});
  for (double s : impostor) all.push_back({s, false});
  for (const auto& s : all) {
    if (!std::isfinite(s.score)) throw UndefinedMetricError("non-finite score");
  }
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

  const auto n_g = static_cast<std::int64_t>(genuine.size());
  const auto n_i = static_cast<std::int64_t>(impostor.size());
  ROCResult r;
  r.points.push_back({0.0, 0.0, all.front().score});
  std::vector<std::pair<std::int64_t, std::int64_t>> counts{{0, 0}};  // (tp, fp) per point
  std::int64_t tp = 0, fp = 0;
  // Twice the area, times n_g * n_i, accumulated exactly in integers.
  std::int64_t area2 = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double t = all[i].score;
    const std::int64_t tp0 = tp, fp0 = fp;
    for (; i < all.size() && all[i].score == t; ++i) (all[i].genuine ? tp : fp)++;
    area2 += (fp - fp0) * (tp + tp0);
    counts.emplace_back(tp, fp);
    r.points.push_back({static_cast<double>(fp) / n_i, static_cast<double>(tp) / n_g, t});
  }
  r.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(n_g) * static_cast<double>(n_i));

  // d = FPR - FNR rises from -1 to +1 along the polyline; find its zero.
  auto d_at = [&](std::size_t k) {
    return static_cast<double>(counts[k].second) / n_i - (1.0 - static_cast<double>(counts[k].first) / n_g);
  };
  for (std::size_t k = 1; k < r.points.size(); ++k) {
    const double d0 = d_at(k - 1), d1 = d_at(k);
    if (d1 < 0) continue;
    const double alpha = d1 == d0 ? 0.0 : -d0 / (d1 - d0);
    const RocPoint& a = r.points[k - 1];
    const RocPoint& b = r.points[k];
    r.eer_fpr = a.fpr + alpha * (b.fpr - a.fpr);
    r.eer_fnr = (1.0 - a.tpr) + alpha * ((1.0 - b.tpr) - (1.0 - a.tpr));
    r.eer_threshold = a.threshold + alpha * (b.threshold - a.threshold);
    r.eer = 0.5 * (r.eer_fpr + r.eer_fnr);
    break;
  }
  return r;
}

ROCResult roc_auc_eer(const ScoreMatrix& m) {
  std::vector<double> g, i;
  for (std::size_t k = 0; k < m.scores.size(); ++k) {
    if (!m.counted.empty() && !m.counted[k]) continue;
    (m.genuine[k] ? g : i).push_back(m.scores[k]);
  }
  return roc_auc_eer(g, i);
}

// --- reports ------------------------------------------------------------------

json EvalReport::to_json() const {
  json trial_list = json::array();
  for (const auto& t : trials) {
    trial_list.push_back({{"trial", t.trial}, {"seed", t.trial_seed}, {"auc", t.auc}, {"eer", t.eer}});
  }
  return {{"mode", polarface::to_string(mode)},
          {"protocol", polarface::to_string(protocol)},
          {"trials", trial_list},
          {"aggregate",
           {{"auc_mean", auc_mean}, {"auc_std", auc_std}, {"eer_mean", eer_mean}, {"eer_std", eer_std}}}};
}

void EvalReport::write(const std::string& dir) const {
  fs::create_directories(dir);
  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
  };
  open(fs::path(dir) / "report.json") << to_json().dump(2) << "\n";
  char buf[128];
  for (const auto& t : trials) {
    auto roc = open(fs::path(dir) / ("roc_trial" + std::to_string(t.trial) + ".csv"));
    roc << "fpr,tpr,threshold\n";
    for (const auto& p : t.roc.points) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.fpr, p.tpr, p.threshold);
      roc << buf;
    }
    auto scores = open(fs::path(dir) / ("scores_trial" + std::to_string(t.trial) + ".csv"));
    scores << "probe_id,gallery_id,score,genuine\n";
    const ScoreMatrix& m = t.scores;
    for (int p = 0; p < m.probes; ++p) {
      for (int g = 0; g < m.gallery; ++g) {
        const std::size_t k = static_cast<std::size_t>(p) * m.gallery + g;
        if (!m.counted.empty() && !m.counted[k]) continue;
        std::snprintf(buf, sizeof buf, ",%.17g,%d\n", m.scores[k], m.genuine[k] ? 1 : 0);
        scores << m.probe_ids[p] << "," << m.gallery_ids[g] << buf;
      }
    }
  }
}

// --- protocol runner ------------------------------------------------------------

void EvalConfig::validate() const {
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (batch_size < 1) throw ConfigError("evaluation batch_size must be at least 1");
  if (thermal == Modality::kVisible) throw ConfigError("thermal modality must be polar or s0");
  if (image_size < 8) throw ConfigError("image_size too small");
}

std::vector<FaceImage> translate(Generator& generator, const std::vector<FaceImage>& images,
                                 Modality result, int batch_size) {
  NoGradGuard guard;
  std::vector<FaceImage> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    const Shape s = images[start].pixels.shape();
    const std::size_t n = shape_numel(s);
    Tensor<float> x(Shape{static_cast<int>(end - start), s[0], s[1], s[2]});
    for (std::size_t i = start; i < end; ++i) {
      require_same_shape(images[i].pixels.shape(), s, "translate input");
      std::copy(images[i].pixels.data(), images[i].pixels.data() + n, x.data() + (i - start) * n);
    }
    const Tensor<float> y = generator.forward(constant(std::move(x)), false)->value;
    const std::size_t m = shape_numel({y.dim(1), y.dim(2), y.dim(3)});
    for (std::size_t i = start; i < end; ++i) {
      FaceImage img = images[i];
      img.modality = result;
      img.pixels = Tensor<float>(Shape{y.dim(1), y.dim(2), y.dim(3)});
      std::copy(y.data() + (i - start) * m, y.data() + (i - start + 1) * m, img.pixels.data());
      out.push_back(std::move(img));
    }
  }
  return out;
}

std::vector<std::vector<float>> embed(const FeatureExtractor<float>& extractor,
                                      const std::vector<FaceImage>& images, int batch_size) {
  NoGradGuard guard;
  std::vector<std::vector<float>> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    const FaceImage first = images[start].as_three_channel();
    const Shape s = first.pixels.shape();
    const std::size_t n = shape_numel(s);
    Tensor<float> x(Shape{static_cast<int>(end - start), s[0], s[1], s[2]});
    for (std::size_t i = start; i < end; ++i) {
      const FaceImage img = images[i].as_three_channel();
      require_same_shape(img.pixels.shape(), s, "embedding input");
      std::copy(img.pixels.data(), img.pixels.data() + n, x.data() + (i - start) * n);
    }
    const Tensor<float> f = extractor.tap(constant(std::move(x)), FeatureTap::kEmbedding)->value;
    const std::size_t d = f.numel() / (end - start);
    for (std::size_t i = 0; i < end - start; ++i) {
      out.emplace_back(f.data() + i * d, f.data() + (i + 1) * d);
    }
  }
  return out;
}

namespace {

void aggregate(EvalReport& r) {
  const double n = static_cast<double>(r.trials.size());
  double sa = 0, se = 0;
  for (const auto& t : r.trials) sa += t.auc, se += t.eer;
  r.auc_mean = sa / n;
  r.eer_mean = se / n;
  double va = 0, ve = 0;
  for (const auto& t : r.trials) {
    va += (t.auc - r.auc_mean) * (t.auc - r.auc_mean);
    ve += (t.eer - r.eer_mean) * (t.eer - r.eer_mean);
  }
  // Sample standard deviation; zero for a single trial.
  r.auc_std = r.trials.size() > 1 ? std::sqrt(va / (n - 1)) : 0.0;
  r.eer_std = r.trials.size() > 1 ? std::sqrt(ve / (n - 1)) : 0.0;
}

std::string image_id(const FaceImage& img, std::size_t index) {
  const std::string base = img.capture_id.empty() ? img.subject_id + "#" + std::to_string(index) : img.capture_id;
  return base + ":" + to_string(img.modality);
}

}  // namespace

std::vector<EvalReport> run_protocol(const GeneratorSource& source, const SubjectCatalog& catalog,
                                     const EvalConfig& config, const std::vector<VerifyMode>& modes) {
  config.validate();
  if (modes.empty()) throw ConfigError("no evaluation modes requested");
  const auto extractor = make_extractor(config.extractor);
  const bool synth = std::any_of(modes.begin(), modes.end(), needs_synthesis);

  std::vector<EvalReport> reports(modes.size());
  for (std::size_t m = 0; m < modes.size(); ++m) {
    reports[m].mode = modes[m];
    reports[m].protocol = config.protocol;
  }
  for (int trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(config.seed, static_cast<std::uint64_t>(trial));
    const ProtocolSplit split = build_split(catalog, config.protocol, trial_seed, config.counts);
    const auto pairs = collect_pairs(catalog, split.eval_subjects, config.thermal, config.image_size);
    if (pairs.size() < 2) throw ConfigError("evaluation split yields fewer than two image pairs");
    std::vector<FaceImage> visible, thermal;
    for (const auto& p : pairs) {
      visible.push_back(p.visible);
      thermal.push_back(p.thermal);
    }
    const auto f_v = embed(*extractor, visible, config.batch_size);
    const auto f_t = embed(*extractor, thermal, config.batch_size);
    std::vector<std::vector<float>> f_hat_t, f_hat_v;  // G_vt(x_v), G_tv(x_t)
    if (synth) {
      GeneratorPair& gens = source(trial, split);
      if (!gens.t2v || !gens.v2t) throw ConfigError("generator source returned no generators");
      f_hat_t = embed(*extractor, translate(*gens.v2t, visible, config.thermal, config.batch_size),
                      config.batch_size);
      f_hat_v = embed(*extractor, translate(*gens.t2v, thermal, Modality::kVisible, config.batch_size),
                      config.batch_size);
    }
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const VerifyMode mode = modes[m];
      std::vector<Template> gallery, probes;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::span<const float> none;
        Template g = make_template(f_v[i], synth ? std::span<const float>(f_hat_t[i]) : none, mode,
                                   Side::kGallery, config.normalize_templates);
        g.subject_id = visible[i].subject_id;
        g.id = image_id(visible[i], i);
        gallery.push_back(std::move(g));
        Template p = make_template(f_t[i], synth ? std::span<const float>(f_hat_v[i]) : none, mode,
                                   Side::kProbe, config.normalize_templates);
        p.subject_id = thermal[i].subject_id;
        p.id = image_id(thermal[i], i);
        probes.push_back(std::move(p));
      }
      TrialResult result;
      result.trial = trial;
      result.trial_seed = trial_seed;
      result.scores = score_matrix(probes, gallery);
      if (config.exclude_same_capture) {
        // pairs[i] holds one acquisition, so index equality marks it.
        for (int i = 0; i < result.scores.probes; ++i) {
          result.scores.counted[static_cast<std::size_t>(i) * result.scores.gallery + i] = 0;
        }
      }
      result.roc = roc_auc_eer(result.scores);
      result.auc = result.roc.auc;
      result.eer = result.roc.eer;
      reports[m].trials.push_back(std::move(result));
    }
  }
  for (auto& r : reports) aggregate(r);
  return reports;
}

EvalReport run_protocol(const GeneratorSource& source, const SubjectCatalog& catalog,
                        const EvalConfig& config, VerifyMode mode) {
  return run_protocol(source, catalog, config, std::vector<VerifyMode>{mode}).front();
}

}  // namespace polarface
