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

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "polarface/data/split.hpp"
#include "polarface/objectives/features.hpp"
#include "polarface/trainer/trainer.hpp"

namespace polarface {

/// fusion: gallery (f(x_v) + f(G_vt(x_v))) / 2 against probe (f(x_t) + f(G_tv(x_t))) / 2.
/// polar2vis: f(x_v) against f(G_tv(x_t)). vis2polar: f(G_vt(x_v)) against f(x_t).
/// raw: f(x_v) against f(x_t), no synthesis.
enum class VerifyMode { kFusion, kPolar2Vis, kVis2Polar, kRaw };
enum class Side { kGallery, kProbe };

const char* to_string(VerifyMode m) noexcept;
VerifyMode parse_verify_mode(const std::string& name);
bool needs_synthesis(VerifyMode m) noexcept;

struct Template {
  std::vector<double> vector;
  std::string subject_id;
  std::string id;  // image identifier used in score exports
  Side side = Side::kGallery;
  VerifyMode mode = VerifyMode::kRaw;
};

/// Template from the feature of the original image and of its synthesized
/// counterpart (`f_hat` may be empty for raw mode; it is ignored there).
/// `normalize` L2-normalizes each feature before fusion.
Template make_template(std::span<const float> f_x, std::span<const float> f_hat, VerifyMode mode,
                       Side side, bool normalize = false);

/// Image-level form: x is visible for the gallery and thermal for the probe;
/// x_hat is its translation (ignored in raw mode).
Template build_template(const FaceImage& x, const FaceImage* x_hat,
                        const FeatureExtractor<float>& extractor, VerifyMode mode, Side side,
                        bool normalize = false);

/// <a, b> / (|a| |b|); DegenerateTemplateError on a zero or non-finite norm,
/// ConfigError on a dimensionality mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const Template& a, const Template& b);

struct ScoreMatrix {
  int probes = 0, gallery = 0;
  std::vector<double> scores;         // row-major [probes, gallery]
  std::vector<std::uint8_t> genuine;  // subject ids equal
  std::vector<std::uint8_t> counted;  // 0 for pairs excluded from metrics
  std::vector<std::string> probe_ids, gallery_ids;

  double score(int p, int g) const { return scores[static_cast<std::size_t>(p) * gallery + g]; }
};

/// All probe x gallery cosine scores; every pair counts.
ScoreMatrix score_matrix(const std::vector<Template>& probes, const std::vector<Template>& gallery);

struct RocPoint {
  double fpr = 0, tpr = 0, threshold = 0;
};

struct ROCResult {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last, FPR non-decreasing
  double auc = 0;
  double eer = 0;
  double eer_fpr = 0, eer_fnr = 0, eer_threshold = 0;
};

/// ROC over every distinct threshold (score >= t accepts). AUC is the
/// trapezoid area, which equals P(g > i) + 0.5 P(g = i). EER is where the
/// polyline crosses FPR = FNR, linearly interpolated between the bracketing
/// operating points. UndefinedMetricError without both score classes.
ROCResult roc_auc_eer(const ScoreMatrix& m);
ROCResult roc_auc_eer(std::span<const double> genuine, std::span<const double> impostor);

struct TrialResult {
  int trial = 0;
  std::uint64_t trial_seed = 0;
  double auc = 0, eer = 0;
  ROCResult roc;
  ScoreMatrix scores;
};

struct EvalReport {
  VerifyMode mode = VerifyMode::kFusion;
  Protocol protocol = Protocol::kI;
  std::vector<TrialResult> trials;
  double auc_mean = 0, auc_std = 0, eer_mean = 0, eer_std = 0;

  nlohmann::json to_json() const;
  /// report.json plus roc_trial<k>.csv and scores_trial<k>.csv.
  void write(const std::string& dir) const;
};

struct EvalConfig {
  Protocol protocol = Protocol::kI;
  ProtocolCounts counts;
  int trials = 5;
  std::uint64_t seed = 0;  // trial k uses split seed derive_seed(seed, k)
  Modality thermal = Modality::kPolar;
  int image_size = 224;
  ExtractorConfig extractor;
  bool normalize_templates = false;
  /// Drops probe/gallery pairs from one acquisition (a capture's own
  /// visible/thermal pair) from the metrics.
  bool exclude_same_capture = true;
  int batch_size = 8;

  void validate() const;
};

/// Supplies trained generators for a trial; called at most once per trial
/// and never when no requested mode needs synthesis.
using GeneratorSource = std::function<GeneratorPair&(int trial, const ProtocolSplit& split)>;

std::vector<EvalReport> run_protocol(const GeneratorSource& source, const SubjectCatalog& catalog,
                                     const EvalConfig& config, const std::vector<VerifyMode>& modes);
EvalReport run_protocol(const GeneratorSource& source, const SubjectCatalog& catalog,
                        const EvalConfig& config, VerifyMode mode);

/// Runs a generator over images in evaluation mode, batch by batch.
std::vector<FaceImage> translate(Generator& generator, const std::vector<FaceImage>& images,
                                 Modality result, int batch_size = 8);
/// fc7-style embeddings of 3-channel images.
std::vector<std::vector<float>> embed(const FeatureExtractor<float>& extractor,
                                      const std::vector<FaceImage>& images, int batch_size = 8);

}  // namespace polarface
