#include "recapture/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "recapture/checkpoint.hpp"
#include "recapture/error.hpp"
#include "recapture/metrics.hpp"

namespace recapture {

namespace {

nlohmann::json geo_to_json(const GeoNetConfig& c) {
  return {{"base_width", c.base_width}, {"max_width", c.max_width}, {"depth", c.depth}, {"spectral", c.spectral}, {"norm", c.norm}};
}

GeoNetConfig geo_from_json(const nlohmann::json& j) {
  GeoNetConfig c;
  c.base_width = j.value("base_width", c.base_width);
  c.max_width = j.value("max_width", c.max_width);
  c.depth = j.value("depth", c.depth);
  c.spectral = j.value("spectral", c.spectral);
  c.norm = j.value("norm", c.norm);
  return c;
}

nlohmann::json app_to_json(const AppearanceConfig& c) {
  return {{"depth", c.depth},         {"base_width", c.base_width}, {"max_width", c.max_width},
          {"signal_width", c.signal_width}, {"sat_level", c.sat_level}, {"lgr_level", c.lgr_level},
          {"lgr_steps", c.lgr_steps}, {"node_dim", c.node_dim},     {"key_dim", c.key_dim},
          {"use_sat", c.use_sat},     {"use_lgr", c.use_lgr},       {"spectral", c.spectral},
          {"norm", c.norm}};
}

AppearanceConfig app_from_json(const nlohmann::json& j) {
  AppearanceConfig c;
  c.depth = j.value("depth", c.depth);
  c.base_width = j.value("base_width", c.base_width);
  c.max_width = j.value("max_width", c.max_width);
  c.signal_width = j.value("signal_width", c.signal_width);
  c.sat_level = j.value("sat_level", c.sat_level);
  c.lgr_level = j.value("lgr_level", c.lgr_level);
  c.lgr_steps = j.value("lgr_steps", c.lgr_steps);
  c.node_dim = j.value("node_dim", c.node_dim);
  c.key_dim = j.value("key_dim", c.key_dim);
  c.use_sat = j.value("use_sat", c.use_sat);
  c.use_lgr = j.value("use_lgr", c.use_lgr);
  c.spectral = j.value("spectral", c.spectral);
  c.norm = j.value("norm", c.norm);
  return c;
}

// splitmix64 finalizer; decorrelates (seed, epoch) pairs.
uint64_t mix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

NamedTensors prefixed(torch::nn::Module& module, const std::string& prefix, bool buffers = true) {
  NamedTensors out;
  for (const auto& p : module.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
  if (buffers) {
    for (const auto& b : module.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  }
  return out;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

void TrainConfig::sync() {
  const int n = static_cast<int>(class_names.size());
  geo.num_classes = n;
  geo.height = height;
  geo.width = width;
  app.num_classes = n;
  app.height = height;
  app.width = width;
}

void TrainConfig::validate() const {
  if (batch_size <= 0 || steps < 0) fail(ErrorKind::kInvalidArgument, "batch size must be positive and steps non-negative");
  if (learning_rate <= 0) fail(ErrorKind::kInvalidArgument, "learning rate must be positive");
  if (teacher_forcing < 0 || teacher_forcing > 1) fail(ErrorKind::kInvalidArgument, "teacher forcing fraction must lie in [0, 1]");
  if (class_names.size() < 2 || class_names.size() > 255) fail(ErrorKind::kInvalidArgument, "class count must lie in [2, 255]");
  weights.validate();
  geo.validate();
  app.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"height", height},
          {"width", width},
          {"batch_size", batch_size},
          {"steps", steps},
          {"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_eps", adam_eps},
          {"weights", {weights.lambda1, weights.lambda2, weights.lambda3, weights.lambda4}},
          {"seed", seed},
          {"teacher_forcing", teacher_forcing},
          {"eval_every", eval_every},
          {"generator_loss", generator_loss == GeneratorLossMode::kSaturating ? "saturating" : "non_saturating"},
          {"literal_image_term", literal_image_term},
          {"d3_weight", d3_weight},
          {"perceptual_seed", perceptual_seed},
          {"perceptual_channels", perceptual_channels},
          {"train_data", train_data},
          {"test_data", test_data},
          {"class_names", class_names},
          {"geo", geo_to_json(geo)},
          {"app", app_to_json(app)},
          {"disc", {{"base_width", disc.base_width}, {"layers", disc.layers}, {"spectral", disc.spectral}}}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      if (w.is_string()) {
        const auto name = w.get<std::string>();
        if (name == "deepfashion") {
          c.weights = LossWeights::deepfashion();
        } else if (name == "market") {
          c.weights = LossWeights::market();
        } else {
          fail(ErrorKind::kInvalidArgument, "unknown weight preset '" + name + "'");
        }
      } else {
        const auto v = w.get<std::vector<double>>();
        if (v.size() != 4) fail(ErrorKind::kInvalidArgument, "weights must list four values");
        c.weights = {v[0], v[1], v[2], v[3]};
      }
    }
    c.seed = j.value("seed", c.seed);
    c.teacher_forcing = j.value("teacher_forcing", c.teacher_forcing);
    c.eval_every = j.value("eval_every", c.eval_every);
    const auto mode = j.value("generator_loss", std::string("saturating"));
    if (mode == "saturating") {
      c.generator_loss = GeneratorLossMode::kSaturating;
    } else if (mode == "non_saturating") {
      c.generator_loss = GeneratorLossMode::kNonSaturating;
    } else {
      fail(ErrorKind::kInvalidArgument, "generator_loss must be saturating or non_saturating");
    }
    c.literal_image_term = j.value("literal_image_term", c.literal_image_term);
    c.d3_weight = j.value("d3_weight", c.d3_weight);
    c.perceptual_seed = j.value("perceptual_seed", c.perceptual_seed);
    c.perceptual_channels = j.value("perceptual_channels", c.perceptual_channels);
    c.train_data = j.value("train_data", c.train_data);
    c.test_data = j.value("test_data", c.test_data);
    if (j.contains("class_names")) {
      c.class_names = j.at("class_names").get<std::vector<std::string>>();
    } else if (j.value("num_classes", 20) == 7) {
      c.class_names = coarse7_class_names();
    }
    if (j.contains("geo")) c.geo = geo_from_json(j.at("geo"));
    if (j.contains("app")) c.app = app_from_json(j.at("app"));
    if (j.contains("variant")) apply_variant(c, j.at("variant").get<std::string>());
    if (j.contains("disc")) {
      const auto& d = j.at("disc");
      c.disc.base_width = d.value("base_width", c.disc.base_width);
      c.disc.layers = d.value("layers", c.disc.layers);
      c.disc.spectral = d.value("spectral", c.disc.spectral);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidArgument, std::string("bad training config: ") + e.what());
  }
  c.sync();
  c.validate();
  return c;
}

void apply_variant(TrainConfig& config, const std::string& variant) {
  if (variant == "full") {
    config.app.use_sat = true;
    config.app.use_lgr = true;
  } else if (variant == "basic") {
    config.app.use_sat = false;
    config.app.use_lgr = false;
  } else if (variant == "basic+sat") {
    config.app.use_sat = true;
    config.app.use_lgr = false;
  } else if (variant == "basic+lgr") {
    config.app.use_sat = false;
    config.app.use_lgr = true;
  } else {
    fail(ErrorKind::kInvalidArgument, "unknown variant '" + variant + "' (full, basic, basic+sat, basic+lgr)");
  }
}

CompactPair compact(const TrainSamplePair& pair, const std::string& id) {
  auto one = [](const TrainSample& s) {
    return CompactSample{s.image.pixels.contiguous(), s.layout.labels().to(torch::kUInt8).contiguous(), s.keypoints};
  };
  return {id, one(pair.source), one(pair.target)};
}

std::vector<CompactPair> load_compact(const std::filesystem::path& directory, const std::string& split) {
  std::vector<CompactPair> out;
  for_each_pair(directory, split, 1, [&](LoadedPair&& lp) { out.push_back(compact(lp.pair, lp.entry.id)); });
  return out;
}

Batch make_batch(const std::vector<const CompactPair*>& pairs, int num_classes, int radius) {
  require(!pairs.empty(), "empty batch");
  std::vector<torch::Tensor> si, sl, sp, ti, tl, tp, tm;
  auto onehot = [&](const torch::Tensor& labels) {
    const auto l = labels.to(torch::kLong);
    if (l.max().item<int64_t>() >= num_classes) fail(ErrorKind::kUnprocessable, "label exceeds the class count");
    return torch::one_hot(l, num_classes).permute({2, 0, 1}).to(torch::kFloat32);
  };
  for (const auto* p : pairs) {
    const auto h = static_cast<int>(p->source.labels.size(0));
    const auto w = static_cast<int>(p->source.labels.size(1));
    si.push_back(p->source.image);
    sl.push_back(onehot(p->source.labels));
    sp.push_back(keypoints_to_heatmap(p->source.keypoints, h, w, radius).channels);
    ti.push_back(p->target.image);
    tl.push_back(onehot(p->target.labels));
    tp.push_back(keypoints_to_heatmap(p->target.keypoints, h, w, radius).channels);
    tm.push_back(p->target.labels.ne(0).to(torch::kFloat32));
  }
  return {torch::stack(si), torch::stack(sl), torch::stack(sp), torch::stack(ti),
          torch::stack(tl), torch::stack(tp), torch::stack(tm)};
}

Adam::Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, p] : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    const auto& g = p.grad();
    if (!g.defined()) continue;
    m_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    const auto denom = (v_[i].sqrt() / std::sqrt(bc2)).add_(eps_);
    p.addcdiv_(m_[i], denom, -lr_ / bc1);
  }
}

std::vector<std::pair<std::string, torch::Tensor>> Adam::state() {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("m." + params_[i].first, m_[i]);
    out.emplace_back("v." + params_[i].first, v_[i]);
  }
  return out;
}

nlohmann::json LossRecord::to_json() const {
  nlohmann::json j = {{"step", step}, {"teacher_forced", teacher_forced}};
  for (const auto& [k, v] : values) j[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(std::to_string(v));
  return j;
}

bool LossRecord::finite() const {
  for (const auto& [k, v] : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& v : iou) per_class.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  nlohmann::json j = {{"step", step},         {"eval", true},        {"pairs", pairs},
                      {"ssim", ssim},         {"m_ssim", m_ssim},    {"l1", l1},
                      {"acc", accuracy},      {"mean_iou", mean_iou}, {"iou", per_class}};
  j["identity_l1"] = identity_l1 ? nlohmann::json(*identity_l1) : nlohmann::json(nullptr);
  return j;
}

Trainer::Trainer(TrainConfig config)
    : config_(std::move(config)), extractor_(FeatureExtractor::seeded_random(0)) {
  config_.sync();
  config_.validate();
  torch::manual_seed(config_.seed);
  graph_ = build_skeleton_graph(config_.class_names);
  geo_ = GeometricNet(config_.geo);
  app_ = AppearanceNet(config_.app, graph_);
  const int n = static_cast<int>(config_.class_names.size());
  auto disc = [&](int in, int cond) {
    DiscriminatorConfig c = config_.disc;
    c.in_channels = in;
    c.cond_channels = cond;
    return Discriminator(c);
  };
  d1_ = disc(n, kNumKeypoints);
  d2_ = disc(3, kNumKeypoints);
  d3_ = disc(3, 3);
  extractor_ = FeatureExtractor::seeded_random(config_.perceptual_seed, config_.perceptual_channels);

  auto g_params = prefixed(*geo_, "geo.", false);
  for (auto& p : prefixed(*app_, "app.", false)) g_params.push_back(p);
  NamedTensors d_params;
  for (auto& p : prefixed(*d1_, "d1.", false)) d_params.push_back(p);
  for (auto& p : prefixed(*d2_, "d2.", false)) d_params.push_back(p);
  for (auto& p : prefixed(*d3_, "d3.", false)) d_params.push_back(p);
  opt_g_ = Adam(g_params, config_.learning_rate, config_.beta1, config_.beta2, config_.adam_eps);
  opt_d_ = Adam(d_params, config_.learning_rate, config_.beta1, config_.beta2, config_.adam_eps);
}

int Trainer::heatmap_radius() const {
  PuppetConfig pc;
  pc.height = config_.height;
  pc.width = config_.width;
  return pc.effective_radius();
}

std::vector<const CompactPair*> Trainer::batch_for_step(const std::vector<CompactPair>& data, int64_t step) const {
  require(!data.empty(), "no training pairs");
  const auto n = static_cast<int64_t>(data.size());
  std::vector<const CompactPair*> out;
  int64_t cached_epoch = -1;
  std::vector<int64_t> order(n);
  for (int64_t i = 0; i < config_.batch_size; ++i) {
    const int64_t g = step * config_.batch_size + i;
    const int64_t epoch = g / n;
    if (epoch != cached_epoch) {
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(mix(config_.seed ^ mix(static_cast<uint64_t>(epoch))));
      std::shuffle(order.begin(), order.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(&data[order[g % n]]);
  }
  return out;
}

LossRecord Trainer::train_step(const std::vector<const CompactPair*>& pairs) {
  geo_->train();
  app_->train();
  d1_->train();
  d2_->train();
  d3_->train();
  const int n = static_cast<int>(config_.class_names.size());
  const auto b = make_batch(pairs, n, heatmap_radius());
  const auto mode = config_.generator_loss;

  LossRecord record;
  record.step = step_;
  record.teacher_forced = static_cast<double>(step_) < config_.teacher_forcing * config_.steps;

  const auto pred = geo_->forward(b.source_layout, b.source_pose, b.target_pose);
  const auto layout_in = record.teacher_forced ? b.target_layout : harden(pred.detach());
  const auto out = app_->forward(b.source_image, b.source_layout, b.source_pose, layout_in, b.target_pose);
  auto f1 = as_fn(d1_);
  auto f2 = as_fn(d2_);
  auto f3 = as_fn(d3_);

  auto abort_if_non_finite = [&](const char* phase) {
    if (!record.finite()) fail(ErrorKind::kNonFinite, std::string("non-finite loss in ") + phase + " update: " + record.to_json().dump());
  };

  // Discriminator update on detached generator outputs.
  opt_d_.zero_grad();
  const auto fake_image = out.detach();
  const auto d_s = adv_loss_d(f1, pred.detach(), b.target_layout, b.target_pose);
  auto d_h = adv_loss_d(f2, fake_image, b.target_image, b.target_pose);
  if (config_.d3_weight != 0.0) d_h = d_h + config_.d3_weight * adv_loss_d(f3, fake_image, b.target_image, b.source_image);
  const auto zero = torch::zeros({});
  const auto d_total = total_losses(config_.weights, {d_s, zero, d_h, zero, zero, zero, zero}).d;
  record.values["L_D_S"] = d_s.item<double>();
  record.values["L_D_H"] = d_h.item<double>();
  record.values["L_D"] = d_total.item<double>();
  abort_if_non_finite("discriminator");
  d_total.backward();
  opt_d_.step();

  // Generator update against the refreshed discriminators.
  opt_g_.zero_grad();
  const auto g_s = adv_loss_g(f1, pred, b.target_pose, mode);
  auto g_h = adv_loss_g(f2, out, b.target_pose, mode);
  if (config_.d3_weight != 0.0) g_h = g_h + config_.d3_weight * adv_loss_g(f3, out, b.source_image, mode);
  const auto l1 = recapture::l1_loss(out, b.target_image);
  const auto lp = perceptual_loss(extractor_, out, b.target_image);
  const auto ce = recapture::cross_entropy_loss(pred, b.target_layout);
  const auto g_total =
      total_losses(config_.weights, {d_s.detach(), g_s, d_h.detach(), g_h, l1, lp, ce}, config_.literal_image_term).g;
  record.values["L_G_S"] = g_s.item<double>();
  record.values["L_G_H"] = g_h.item<double>();
  record.values["L_1"] = l1.item<double>();
  record.values["L_p"] = lp.item<double>();
  record.values["L_s"] = ce.item<double>();
  record.values["L_G"] = g_total.item<double>();
  abort_if_non_finite("generator");
  g_total.backward();
  opt_g_.step();
  // The generator pass also left gradients on the discriminators.
  opt_d_.zero_grad();

  ++step_;
  return record;
}

EvalReport Trainer::evaluate(const std::vector<CompactPair>& test, const EvalOptions& options) {
  require(!test.empty(), "evaluation needs at least one pair");
  torch::NoGradGuard no_grad;
  const bool geo_training = geo_->is_training();
  const bool app_training = app_->is_training();
  geo_->eval();
  app_->eval();
  const int n = static_cast<int>(config_.class_names.size());
  const int chunk = std::max(1, std::min(config_.batch_size, 16));

  EvalReport report;
  report.step = step_;
  IouAccumulator iou(n);
  double ssim_sum = 0, mssim_sum = 0, l1_sum = 0, acc_sum = 0, id_sum = 0;
  int mssim_count = 0;
  for (size_t start = 0; start < test.size(); start += chunk) {
    std::vector<const CompactPair*> pairs;
    for (size_t i = start; i < std::min(test.size(), start + chunk); ++i) pairs.push_back(&test[i]);
    const auto b = make_batch(pairs, n, heatmap_radius());
    torch::Tensor hard, out;
    if (options.ground_truth) {
      hard = b.target_layout;
      out = b.target_image;
    } else {
      hard = harden(geo_->forward(b.source_layout, b.source_pose, b.target_pose));
      out = app_->forward(b.source_image, b.source_layout, b.source_pose, hard, b.target_pose);
    }
    torch::Tensor identity;
    if (options.identity) {
      if (options.ground_truth) {
        identity = b.source_image;
      } else {
        identity = app_->forward(b.source_image, b.source_layout, b.source_pose, b.source_layout, b.source_pose);
      }
    }
    const auto pred_labels = hard.argmax(1);
    const auto true_labels = b.target_layout.argmax(1);
    for (size_t i = 0; i < pairs.size(); ++i) {
      const auto k = static_cast<int64_t>(i);
      acc_sum += pixel_accuracy(pred_labels[k], true_labels[k]);
      iou.add(pred_labels[k], true_labels[k]);
      const PortraitImage generated{out[k]};
      const PortraitImage truth{b.target_image[k]};
      ssim_sum += ssim(generated, truth);
      l1_sum += mean_l1(generated, truth);
      if (const auto m = masked_ssim(generated, truth, PoseMask{b.target_mask[k]})) {
        mssim_sum += *m;
        ++mssim_count;
      }
      if (options.identity) id_sum += mean_l1(PortraitImage{identity[k]}, PortraitImage{b.source_image[k]});
    }
  }
  const double count = static_cast<double>(test.size());
  report.pairs = static_cast<int>(test.size());
  report.ssim = ssim_sum / count;
  report.m_ssim = mssim_count > 0 ? mssim_sum / mssim_count : std::nan("");
  report.l1 = l1_sum / count;
  report.accuracy = acc_sum / count;
  report.iou = iou.per_class();
  report.mean_iou = iou.mean();
  if (options.identity) report.identity_l1 = id_sum / count;
  geo_->train(geo_training);
  app_->train(app_training);
  return report;
}

std::vector<std::pair<std::string, NamedTensors>> Trainer::tensor_groups() {
  NamedTensors appearance, sat, lgr;
  for (auto& [name, t] : prefixed(*app_, "")) {
    if (starts_with(name, "sat.")) {
      sat.emplace_back(name, t);
    } else if (starts_with(name, "lgr.")) {
      lgr.emplace_back(name, t);
    } else {
      appearance.emplace_back(name, t);
    }
  }
  return {{"geometric", prefixed(*geo_, "")},
          {"appearance", appearance},
          {"sat", sat},
          {"lgr", lgr},
          {"d1", prefixed(*d1_, "")},
          {"d2", prefixed(*d2_, "")},
          {"d3", prefixed(*d3_, "")},
          {"adam_g", opt_g_.state()},
          {"adam_d", opt_d_.state()}};
}

void Trainer::save(const std::filesystem::path& path) {
  TensorArchive archive;
  archive.meta = {{"config", config_.to_json()},
                  {"step", step_},
                  {"adam_g_steps", opt_g_.steps_taken()},
                  {"adam_d_steps", opt_d_.steps_taken()}};
  archive.groups = tensor_groups();
  write_archive(path, archive);
}

std::unique_ptr<Trainer> Trainer::load(const std::filesystem::path& path) {
  const auto archive = read_archive(path);
  if (!archive.meta.contains("config")) fail(ErrorKind::kInvalidArgument, "checkpoint has no config: " + path.string());
  auto trainer = std::make_unique<Trainer>(TrainConfig::from_json(archive.meta.at("config")));
  torch::NoGradGuard no_grad;
  for (auto& [group, tensors] : trainer->tensor_groups()) {
    for (auto& [name, target] : tensors) {
      const auto& source = archive.at(group, name);
      if (!source.sizes().equals(target.sizes())) {
        fail(ErrorKind::kInvalidArgument, "checkpoint tensor " + group + "/" + name + " has the wrong shape");
      }
      target.copy_(source);
    }
  }
  trainer->step_ = archive.meta.value("step", int64_t{0});
  trainer->opt_g_.set_steps_taken(archive.meta.value("adam_g_steps", int64_t{0}));
  trainer->opt_d_.set_steps_taken(archive.meta.value("adam_d_steps", int64_t{0}));
  return trainer;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, bool append) : path_(path) {
  if (path_.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, append ? std::ios::app : std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open log " + path_.string());
}

void JsonlWriter::write(const nlohmann::json& record) {
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  out << record.dump() << '\n';
  if (!out) fail(ErrorKind::kIo, "cannot write log " + path_.string());
}

void check_disjoint(const std::vector<CompactPair>& train, const std::vector<CompactPair>& test) {
  std::set<std::string> ids;
  for (const auto& p : train) ids.insert(p.id);
  for (const auto& p : test) {
    if (ids.count(p.id)) fail(ErrorKind::kInvalidArgument, "train and test splits overlap at pair " + p.id);
  }
}

void run_training(Trainer& trainer, const std::vector<CompactPair>& train, const std::vector<CompactPair>& test,
                  const TrainRunOptions& options) {
  if (!test.empty()) check_disjoint(train, test);
  JsonlWriter log(options.log_path, trainer.step() > 0);
  const auto& config = trainer.config();
  while (trainer.step() < config.steps) {
    LossRecord record;
    try {
      record = trainer.train_step(trainer.batch_for_step(train, trainer.step()));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kNonFinite) log.write({{"step", trainer.step()}, {"error", "non_finite"}, {"detail", e.what()}});
      throw;
    }
    log.write(record.to_json());
    if (options.on_step) options.on_step(record);
    const auto step = trainer.step();
    if (config.eval_every > 0 && !test.empty() && step % config.eval_every == 0) {
      log.write(trainer.evaluate(test).to_json());
    }
    if (options.checkpoint_every > 0 && !options.checkpoint_path.empty() && step % options.checkpoint_every == 0) {
      trainer.save(options.checkpoint_path);
    }
  }
  if (!options.checkpoint_path.empty()) trainer.save(options.checkpoint_path);
}

}  // namespace recapture
