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

#include "polarface/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "polarface/core/error.hpp"

namespace polarface {

namespace fs = std::filesystem;
using nlohmann::json;

// --- Adam ---------------------------------------------------------------------

Adam::Adam(NamedParameters params, const AdamConfig& config)
    : params_(std::move(params)), config_(config) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back((*p)->value.shape());
    v_.emplace_back((*p)->value.shape());
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) (*p)->zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Node<float>& node = **params_[k].second;
    if (node.grad.numel() != node.value.numel() || node.grad.empty()) continue;
    float* w = node.value.data();
    const float* g = node.grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (std::size_t i = 0; i < node.value.numel(); ++i) {
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

void Adam::save(Archive& archive, const std::string& prefix) const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    archive.arrays[prefix + params_[k].first + ".m"] = m_[k];
    archive.arrays[prefix + params_[k].first + ".v"] = v_[k];
  }
}

void Adam::load(const Archive& archive, const std::string& prefix, std::int64_t steps) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    for (auto [suffix, dst] : {std::pair{".m", &m_[k]}, std::pair{".v", &v_[k]}}) {
      const Tensor<float>& src = archive.at(prefix + params_[k].first + suffix);
      if (src.shape() != dst->shape()) throw DecodeError("optimizer state shape mismatch");
      *dst = src;
    }
  }
  t_ = steps;
}

// --- batches ------------------------------------------------------------------

Batch make_batch(const std::vector<ImagePair>& pairs, const std::vector<std::size_t>& visible_index,
                 const std::vector<std::size_t>& thermal_index) {
  if (visible_index.empty() || visible_index.size() != thermal_index.size()) {
    throw ShapeError("batch index lists must be non-empty and equally long");
  }
  const int b = static_cast<int>(visible_index.size());
  const Shape img = pairs.at(visible_index[0]).visible.pixels.shape();
  Batch batch;
  batch.visible = Tensor<float>(Shape{b, img[0], img[1], img[2]});
  batch.thermal = Tensor<float>(Shape{b, img[0], img[1], img[2]});
  const std::size_t n = shape_numel(img);
  std::set<std::string> subjects;
  for (int i = 0; i < b; ++i) {
    const FaceImage& v = pairs.at(visible_index[i]).visible;
    const FaceImage& t = pairs.at(thermal_index[i]).thermal;
    require_same_shape(v.pixels.shape(), img, "batch visible image");
    require_same_shape(t.pixels.shape(), img, "batch thermal image");
    std::copy(v.pixels.data(), v.pixels.data() + n, batch.visible.data() + i * n);
    std::copy(t.pixels.data(), t.pixels.data() + n, batch.thermal.data() + i * n);
    subjects.insert(v.subject_id);
    subjects.insert(t.subject_id);
  }
  batch.subjects.assign(subjects.begin(), subjects.end());
  return batch;
}

// --- trainer ------------------------------------------------------------------

namespace {

template <typename Net>
void set_trainable(Net& net, bool on) {
  StateVisitor<float> v;
  v.param = [on](const std::string&, Var<float>& p) { p->requires_grad = on; };
  net.visit(v);
}

template <typename Net>
void check_parameters(Net& net, const std::string& label) {
  StateVisitor<float> v;
  v.param = [&](const std::string& name, Var<float>& p) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      if (!std::isfinite(p->value[i])) {
        throw DivergenceError(label + "." + name, "non-finite parameter " + label + "." + name);
      }
    }
  };
  net.visit(v);
}

template <typename Net>
void save_net(Net& net, Archive& archive, const std::string& prefix) {
  StateVisitor<float> v;
  v.param = [&](const std::string& name, Var<float>& p) { archive.arrays[prefix + name] = p->value; };
  v.buffer = [&](const std::string& name, Tensor<float>& t) { archive.arrays[prefix + name] = t; };
  net.visit(v);
}

template <typename Net>
void load_net(Net& net, const Archive& archive, const std::string& prefix) {
  auto copy = [&](const std::string& name, Tensor<float>& dst) {
    const Tensor<float>& src = archive.at(prefix + name);
    if (src.shape() != dst.shape()) {
      throw DecodeError("checkpoint array " + prefix + name + " has shape " +
                        shape_string(src.shape()) + ", expected " + shape_string(dst.shape()));
    }
    dst = src;
  };
  StateVisitor<float> v;
  v.param = [&](const std::string& name, Var<float>& p) { copy(name, p->value); };
  v.buffer = copy;
  net.visit(v);
}

double finite_value(const Var<float>& v, const char* term) {
  const double x = v->value[0];
  if (!std::isfinite(x)) throw DivergenceError(term, std::string("non-finite loss term ") + term);
  return x;
}

/// Discriminator outputs feed log terms, which reject NaN as out of domain;
/// a non-finite output is a divergence of the term it feeds.
const Var<float>& finite_output(const Var<float>& v, const char* term) {
  const auto& t = v->value;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i])) {
      throw DivergenceError(term, std::string("non-finite discriminator output for ") + term);
    }
  }
  return v;
}

json parse_manifest(const Archive& archive) {
  try {
    json m = json::parse(archive.manifest);
    if (m.value("format", std::string()) != "polarface-checkpoint") {
      throw DecodeError("archive is not a training checkpoint");
    }
    return m;
  } catch (const json::exception& e) {
    throw DecodeError("bad checkpoint manifest: " + std::string(e.what()));
  }
}

std::uint64_t network_seed(const TrainConfig& c, std::uint64_t which) {
  return derive_seed(derive_seed(c.seed, c.network.seed), which);
}

}  // namespace

Trainer::Trainer(const TrainConfig& config) : config_(config) {
  config_.epochs = config_.resolved_epochs();
  config_.validate();
  build();
}

Trainer::Trainer(const Archive& checkpoint)
    : config_(train_config_from_json(parse_manifest(checkpoint).at("config"))) {
  config_.validate();
  build();
  restore(checkpoint);
}

void Trainer::build() {
  g_tv_ = std::make_unique<Generator>(config_.network, network_seed(config_, 1));
  g_vt_ = std::make_unique<Generator>(config_.network, network_seed(config_, 2));
  d_v_ = std::make_unique<Discriminator>(config_.network, network_seed(config_, 3));
  d_t_ = std::make_unique<Discriminator>(config_.network, network_seed(config_, 4));
  opt_g_tv_ = std::make_unique<Adam>(named_parameters(*g_tv_), config_.adam);
  opt_g_vt_ = std::make_unique<Adam>(named_parameters(*g_vt_), config_.adam);
  opt_d_v_ = std::make_unique<Adam>(named_parameters(*d_v_), config_.adam);
  opt_d_t_ = std::make_unique<Adam>(named_parameters(*d_t_), config_.adam);
  extractor_ = make_extractor(config_.extractor);
}

LossRecord Trainer::train_step(const Batch& batch, double lr) {
  const int s = config_.network.image_size;
  const Shape want{batch.visible.dim(0), 3, s, s};
  require_same_shape(batch.visible.shape(), want, "visible batch");
  require_same_shape(batch.thermal.shape(), want, "thermal batch");
  const LossWeights& w = config_.weights;
  const float eps = static_cast<float>(kLogEps);
  LossRecord rec;

  auto x_v = constant(batch.visible);
  auto x_t = constant(batch.thermal);
  auto fake_v = g_tv_->forward(x_t, true);
  auto fake_t = g_vt_->forward(x_v, true);

  // Discriminators on real images and detached fakes.
  set_trainable(*d_v_, true);
  set_trainable(*d_t_, true);
  opt_d_v_->zero_grad();
  opt_d_t_->zero_grad();
  auto loss_dv = discriminator_loss(finite_output(d_v_->forward(x_v, true), "total_D_v"),
                                    finite_output(d_v_->forward(detach(fake_v), true), "total_D_v"), eps);
  auto loss_dt = discriminator_loss(finite_output(d_t_->forward(x_t, true), "total_D_t"),
                                    finite_output(d_t_->forward(detach(fake_t), true), "total_D_t"), eps);
  rec.total_D_v = finite_value(loss_dv, "total_D_v");
  rec.total_D_t = finite_value(loss_dt, "total_D_t");
  backward(add(loss_dv, loss_dt));
  opt_d_v_->step(lr);
  opt_d_t_->step(lr);
  check_parameters(*d_v_, "D_v");
  check_parameters(*d_t_, "D_t");

  // Generators against the updated discriminators.
  set_trainable(*d_v_, false);
  set_trainable(*d_t_, false);
  opt_g_tv_->zero_grad();
  opt_g_vt_->zero_grad();
  auto gan_v = generator_adversarial_loss(finite_output(d_v_->forward(fake_v, true), "gan_v"),
                                          config_.gan_form, eps);
  auto gan_t = generator_adversarial_loss(finite_output(d_t_->forward(fake_t, true), "gan_t"),
                                          config_.gan_form, eps);
  auto cycle = add(l1_loss(g_vt_->forward(fake_v, true), x_t), l1_loss(g_tv_->forward(fake_t, true), x_v));
  rec.gan_v = finite_value(gan_v, "gan_v");
  rec.gan_t = finite_value(gan_t, "gan_t");
  rec.cycle = finite_value(cycle, "cycle");
  Var<float> total = add(add(gan_v, gan_t), cycle);

  if (w.supervised) {
    auto weighted = [&](const Var<float>& term, double lambda) {
      total = add(total, scale(term, static_cast<float>(lambda)));
    };
    if (w.lambda_l1 > 0) {
      auto l1_v = l1_loss(fake_v, x_v), l1_t = l1_loss(fake_t, x_t);
      rec.l1_v = finite_value(l1_v, "l1_v");
      rec.l1_t = finite_value(l1_t, "l1_t");
      weighted(add(l1_v, l1_t), w.lambda_l1);
    }
    if (w.lambda_perceptual > 0 || w.lambda_identity > 0) {
      auto [perc_v, id_v] = feature_losses(*extractor_, fake_v, x_v);
      auto [perc_t, id_t] = feature_losses(*extractor_, fake_t, x_t);
      rec.perc_v = finite_value(perc_v, "perc_v");
      rec.perc_t = finite_value(perc_t, "perc_t");
      rec.id_v = finite_value(id_v, "id_v");
      rec.id_t = finite_value(id_t, "id_t");
      if (w.lambda_perceptual > 0) weighted(add(perc_v, perc_t), w.lambda_perceptual);
      if (w.lambda_identity > 0) weighted(add(id_v, id_t), w.lambda_identity);
    }
  }
  rec.total_G = total_objective(rec, w);
  if (!std::isfinite(rec.total_G)) throw DivergenceError("total_G", "non-finite total_G");
  backward(total);
  opt_g_tv_->step(lr);
  opt_g_vt_->step(lr);
  check_parameters(*g_tv_, "G_tv");
  check_parameters(*g_vt_, "G_vt");
  set_trainable(*d_v_, true);
  set_trainable(*d_t_, true);
  ++step_;
  return rec;
}

Archive Trainer::checkpoint() {
  Archive a;
  save_net(*g_tv_, a, "G_tv.");
  save_net(*g_vt_, a, "G_vt.");
  save_net(*d_v_, a, "D_v.");
  save_net(*d_t_, a, "D_t.");
  opt_g_tv_->save(a, "adam.G_tv.");
  opt_g_vt_->save(a, "adam.G_vt.");
  opt_d_v_->save(a, "adam.D_v.");
  opt_d_t_->save(a, "adam.D_t.");
  json manifest = {
      {"format", "polarface-checkpoint"},
      {"version", kArchiveVersion},
      {"epoch", epoch_},
      {"step", step_},
      {"config", to_json(config_)},
      {"adam_steps",
       {{"G_tv", opt_g_tv_->steps()}, {"G_vt", opt_g_vt_->steps()}, {"D_v", opt_d_v_->steps()},
        {"D_t", opt_d_t_->steps()}}},
      // Epoch order is a pure function of (seed, epoch); no stream state is carried.
      {"rng", {{"seed", config_.seed}, {"epoch_stream", "derive_seed(seed, epoch)"}}},
  };
  a.manifest = manifest.dump(2);
  return a;
}

void Trainer::restore(const Archive& archive) {
  const json m = parse_manifest(archive);
  load_net(*g_tv_, archive, "G_tv.");
  load_net(*g_vt_, archive, "G_vt.");
  load_net(*d_v_, archive, "D_v.");
  load_net(*d_t_, archive, "D_t.");
  const json& steps = m.at("adam_steps");
  opt_g_tv_->load(archive, "adam.G_tv.", steps.at("G_tv").get<std::int64_t>());
  opt_g_vt_->load(archive, "adam.G_vt.", steps.at("G_vt").get<std::int64_t>());
  opt_d_v_->load(archive, "adam.D_v.", steps.at("D_v").get<std::int64_t>());
  opt_d_t_->load(archive, "adam.D_t.", steps.at("D_t").get<std::int64_t>());
  epoch_ = m.at("epoch").get<int>();
  step_ = m.at("step").get<std::int64_t>();
}

std::string loss_log_header() {
  std::string h = "step,epoch,lr";
  for (const char* name : LossRecord::field_names()) h += std::string(",") + name;
  return h;
}

std::string loss_log_row(const StepLog& e) {
  char buf[64];
  std::string row = std::to_string(e.step) + "," + std::to_string(e.epoch);
  std::snprintf(buf, sizeof buf, ",%.17g", e.lr);
  row += buf;
  for (double v : e.losses.values()) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    row += buf;
  }
  return row;
}

FitResult Trainer::fit(const SubjectCatalog& catalog, const ProtocolSplit& split,
                       const FitOptions& options) {
  if (split.train_subjects.empty()) throw ConfigError("training split has no subjects");
  const std::set<std::string> allowed(split.train_subjects.begin(), split.train_subjects.end());
  for (const auto& id : split.eval_subjects) {
    if (allowed.count(id)) throw ConfigError("subject " + id + " is in both train and eval sets");
  }
  const auto pairs = collect_pairs(catalog, split.train_subjects, config_.thermal,
                                   config_.network.image_size, split.train_range);
  if (pairs.empty()) throw ConfigError("training split yields no visible/thermal pairs");

  const int epochs = config_.resolved_epochs();
  const std::size_t n = pairs.size();
  const auto batch_size = static_cast<std::size_t>(config_.batch_size);
  FitResult result;

  std::ofstream loss_csv, audit_csv;
  if (!options.out_dir.empty()) {
    fs::create_directories(fs::path(options.out_dir) / "checkpoints");
    const fs::path loss_path = fs::path(options.out_dir) / "losses.csv";
    const fs::path audit_path = fs::path(options.out_dir) / "audit.csv";
    // On resume keep only rows from epochs before the restored one.
    auto keep_prefix = [&](const fs::path& p, const std::string& header, int epoch_column) {
      std::vector<std::string> kept;
      std::ifstream in(p);
      std::string line;
      bool first = true;
      while (in && std::getline(in, line)) {
        if (first) {
          first = false;
          continue;
        }
        std::stringstream ss(line);
        std::string cell;
        for (int c = 0; c <= epoch_column && std::getline(ss, cell, ','); ++c) {
        }
        if (!cell.empty() && std::stoi(cell) < epoch_) kept.push_back(line);
      }
      std::ofstream out(p, std::ios::trunc);
      if (!out) throw IoError("cannot write " + p.string());
      out << header << "\n";
      for (const auto& k : kept) out << k << "\n";
    };
    keep_prefix(loss_path, loss_log_header(), 1);
    keep_prefix(audit_path, "step,epoch,subjects", 1);
    loss_csv.open(loss_path, std::ios::app);
    audit_csv.open(audit_path, std::ios::app);
  }
  auto write_checkpoint = [&](const std::string& name) {
    if (options.out_dir.empty()) return;
    const std::string path = (fs::path(options.out_dir) / "checkpoints" / name).string();
    save_archive(path, checkpoint());
    result.checkpoints.push_back(path);
  };

  for (int epoch = epoch_; epoch < epochs; ++epoch) {
    const double lr = lr_at(epoch, config_);
    std::vector<std::size_t> order(n), thermal_order;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(config_.seed, static_cast<std::uint64_t>(epoch)));
    shuffle.shuffle(order.begin(), order.end());
    if (config_.weights.supervised) {
      thermal_order = order;
    } else {
      // Independent orders: only batch co-sampling links the two modalities.
      thermal_order.resize(n);
      std::iota(thermal_order.begin(), thermal_order.end(), std::size_t{0});
      shuffle.shuffle(thermal_order.begin(), thermal_order.end());
    }
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(n, start + batch_size);
      const std::vector<std::size_t> vi(order.begin() + start, order.begin() + end);
      const std::vector<std::size_t> ti(thermal_order.begin() + start, thermal_order.begin() + end);
      const Batch batch = make_batch(pairs, vi, ti);
      for (const auto& id : batch.subjects) {
        if (!allowed.count(id)) throw ConfigError("audit: subject " + id + " is not a training subject");
        result.consumed_subjects.insert(id);
      }
      StepLog entry;
      entry.epoch = epoch;
      entry.lr = lr;
      entry.losses = train_step(batch, lr);
      entry.step = step_ - 1;
      result.log.push_back(entry);
      if (loss_csv.is_open()) {
        loss_csv << loss_log_row(entry) << "\n";
        loss_csv.flush();
        audit_csv << entry.step << "," << epoch << ",";
        for (std::size_t k = 0; k < batch.subjects.size(); ++k) {
          audit_csv << (k ? ";" : "") << batch.subjects[k];
        }
        audit_csv << "\n";
        audit_csv.flush();
      }
      if (options.on_step) options.on_step(entry);
    }
    epoch_ = epoch + 1;
    if (epoch_ % config_.checkpoint_interval == 0 || epoch_ == epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.pfck", epoch_);
      write_checkpoint(name);
    }
    if (options.stop_after_epoch >= 0 && epoch_ >= options.stop_after_epoch && epoch_ < epochs) {
      return result;
    }
  }
  write_checkpoint("final.pfck");
  return result;
}

GeneratorPair load_generators(const Archive& checkpoint) {
  const json m = parse_manifest(checkpoint);
  GeneratorPair pair;
  pair.config = train_config_from_json(m.at("config"));
  pair.t2v = std::make_unique<Generator>(pair.config.network, 0);
  pair.v2t = std::make_unique<Generator>(pair.config.network, 0);
  load_net(*pair.t2v, checkpoint, "G_tv.");
  load_net(*pair.v2t, checkpoint, "G_vt.");
  return pair;
}

}  // namespace polarface
