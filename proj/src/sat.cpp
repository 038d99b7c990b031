#include "recapture/sat.hpp"

#include "recapture/error.hpp"

namespace recapture {

namespace {

void check_features(const torch::Tensor& enc_feat, const torch::Tensor& dec_feat) {
  require(enc_feat.dim() == 3 && dec_feat.dim() == 3, "SAT features must be C x H x W");
  require(enc_feat.sizes().equals(dec_feat.sizes()), "SAT encoder/decoder feature shapes differ");
}

void check_labels(const torch::Tensor& labels, const torch::Tensor& feat) {
  if (labels.dim() != 2 || labels.size(0) != feat.size(1) || labels.size(1) != feat.size(2)) {
    fail(ErrorKind::kInvalidArgument, "layout resolution does not match the feature grid");
  }
}

// Flat pixel indices per class, grouped by a stable sort so each class keeps
// row-major order.
std::vector<torch::Tensor> indices_by_class(const torch::Tensor& labels, int num_classes) {
  const auto flat = labels.reshape({-1}).to(torch::kLong);
  const auto order = std::get<1>(flat.sort(/*stable=*/true, 0, false));
  const auto counts = torch::bincount(flat, {}, num_classes).contiguous();
  std::vector<torch::Tensor> out(num_classes);
  int64_t offset = 0;
  auto acc = counts.accessor<int64_t, 1>();
  for (int c = 0; c < num_classes; ++c) {
    out[c] = order.slice(0, offset, offset + acc[c]);
    offset += acc[c];
  }
  return out;
}

torch::Tensor pixel_index(const std::vector<Pixel>& pixels, int64_t width) {
  std::vector<int64_t> flat;
  flat.reserve(pixels.size());
  for (const auto& p : pixels) flat.push_back(static_cast<int64_t>(p.y) * width + p.x);
  return torch::tensor(flat, torch::kLong);
}

}  // namespace

torch::Tensor sat_scores(const SatWeights& weights, const torch::Tensor& dec_feat, const torch::Tensor& enc_feat,
                         Pixel j, const std::vector<Pixel>& source) {
  check_features(enc_feat, dec_feat);
  if (source.empty()) fail(ErrorKind::kInvalidArgument, "SAT scores need a non-empty source part");
  const auto width = enc_feat.size(2);
  const auto channels = enc_feat.size(0);
  const auto query = torch::mv(weights.g, dec_feat.reshape({channels, -1}).select(1, j.y * width + j.x));
  const auto keys = torch::mm(weights.theta, enc_feat.reshape({channels, -1}).index_select(1, pixel_index(source, width)));
  return torch::mv(keys.t(), query);
}

torch::Tensor masked_softmax(const torch::Tensor& scores) {
  require(scores.dim() == 1 && scores.numel() > 0, "softmax needs a non-empty score vector");
  const auto shifted = scores - std::get<0>(scores.detach().max(0));
  const auto e = shifted.exp();
  return e / e.sum();
}

torch::Tensor sat_transfer(const SatWeights& weights, const torch::Tensor& enc_feat, const torch::Tensor& dec_feat,
                           const torch::Tensor& source_labels, const torch::Tensor& target_labels, int num_classes) {
  check_features(enc_feat, dec_feat);
  check_labels(source_labels, enc_feat);
  check_labels(target_labels, enc_feat);
  const auto channels = enc_feat.size(0);
  const auto enc = enc_feat.reshape({channels, -1});
  const auto dec = dec_feat.reshape({channels, -1});
  const auto queries = torch::mm(weights.g, dec);   // Ck x HW
  const auto keys = torch::mm(weights.theta, enc);  // Ck x HW

  const auto sources = indices_by_class(source_labels, num_classes);
  const auto targets = indices_by_class(target_labels, num_classes);

  std::vector<torch::Tensor> target_index;
  std::vector<torch::Tensor> values;
  for (int c = 1; c < num_classes; ++c) {
    const auto& src = sources[c];
    const auto& tgt = targets[c];
    if (src.numel() == 0 || tgt.numel() == 0) continue;
    const auto scores = torch::mm(queries.index_select(1, tgt).t(), keys.index_select(1, src));  // nt x ns
    const auto attention = torch::softmax(scores, 1);
    values.push_back(torch::mm(enc.index_select(1, src), attention.t()));  // C x nt
    target_index.push_back(tgt);
  }
  auto out = torch::zeros_like(enc);
  if (!values.empty()) out = out.index_copy(1, torch::cat(target_index), torch::cat(values, 1));
  return out.view(enc_feat.sizes());
}

torch::Tensor sat_transfer_batch(const SatWeights& weights, const torch::Tensor& enc_feat,
                                 const torch::Tensor& dec_feat, const torch::Tensor& source_labels,
                                 const torch::Tensor& target_labels, int num_classes) {
  require(enc_feat.dim() == 4, "batched SAT expects B x C x H x W");
  std::vector<torch::Tensor> outs;
  for (int64_t b = 0; b < enc_feat.size(0); ++b) {
    outs.push_back(sat_transfer(weights, enc_feat[b], dec_feat[b], source_labels[b], target_labels[b], num_classes));
  }
  return torch::stack(outs);
}

nlohmann::json AttentionRecord::to_json() const {
  nlohmann::json coords_json = nlohmann::json::array();
  for (const auto& p : coords) coords_json.push_back({p.x, p.y});
  return {{"pixel", {pixel.x, pixel.y}}, {"class", part}, {"coords", coords_json}, {"weights", weights}};
}

std::optional<AttentionRecord> sat_attention_map(const SatWeights& weights, const torch::Tensor& enc_feat,
                                                 const torch::Tensor& dec_feat, const torch::Tensor& source_labels,
                                                 const torch::Tensor& target_labels, Pixel j) {
  check_features(enc_feat, dec_feat);
  check_labels(source_labels, enc_feat);
  check_labels(target_labels, enc_feat);
  require(j.y >= 0 && j.y < target_labels.size(0) && j.x >= 0 && j.x < target_labels.size(1),
          "attention pixel outside the feature grid");
  const auto part = target_labels[j.y][j.x].item<int64_t>();
  if (part == 0) return std::nullopt;

  AttentionRecord record;
  record.pixel = j;
  record.part = static_cast<int>(part);
  const auto src = source_labels.to(torch::kLong).contiguous();
  auto acc = src.accessor<int64_t, 2>();
  for (int y = 0; y < src.size(0); ++y) {
    for (int x = 0; x < src.size(1); ++x) {
      if (acc[y][x] == part) record.coords.push_back({y, x});
    }
  }
  if (record.coords.empty()) return std::nullopt;

  torch::NoGradGuard no_grad;
  const auto attention = masked_softmax(sat_scores(weights, dec_feat, enc_feat, j, record.coords))
                             .to(torch::kDouble)
                             .contiguous();
  record.weights.assign(attention.data_ptr<double>(), attention.data_ptr<double>() + attention.numel());
  return record;
}

torch::Tensor resize_labels(const torch::Tensor& labels, int64_t height, int64_t width) {
  require(labels.dim() == 3, "resize_labels expects B x H x W");
  std::vector<torch::Tensor> out;
  for (int64_t b = 0; b < labels.size(0); ++b) {
    out.push_back(downsample_labels(labels[b], static_cast<int>(height), static_cast<int>(width)));
  }
  return torch::stack(out);
}

SatModuleImpl::SatModuleImpl(int64_t channels, int64_t key_channels, int num_classes, bool spectral)
    : num_classes_(num_classes) {
  g_ = register_module("g", SNLinearMap(channels, key_channels, spectral));
  theta_ = register_module("theta", SNLinearMap(channels, key_channels, spectral));
}

SatWeights SatModuleImpl::weights() const { return {g_->weight(), theta_->weight()}; }

torch::Tensor SatModuleImpl::forward(const torch::Tensor& enc_feat, const torch::Tensor& dec_feat,
                                     const torch::Tensor& source_labels, const torch::Tensor& target_labels) {
  const auto h = enc_feat.size(2);
  const auto w = enc_feat.size(3);
  return sat_transfer_batch(weights(), enc_feat, dec_feat, resize_labels(source_labels, h, w),
                            resize_labels(target_labels, h, w), num_classes_);
}

}  // namespace recapture
