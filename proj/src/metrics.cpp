#include "recapture/metrics.hpp"

#include <cmath>

#include "recapture/error.hpp"

namespace recapture {

namespace {

torch::Tensor gaussian_kernel(const SsimParams& p) {
  auto k = torch::arange(p.window, torch::TensorOptions().dtype(torch::kDouble)) - (p.window - 1) / 2.0;
  k = torch::exp(-(k * k) / (2.0 * p.sigma * p.sigma));
  return k / k.sum();
}

// Separable valid-mode Gaussian filter over every channel of a C x H x W tensor.
torch::Tensor blur(const torch::Tensor& x, const torch::Tensor& kernel) {
  const auto c = x.size(0);
  const auto w = kernel.size(0);
  auto in = x.unsqueeze(0);
  auto kh = kernel.view({1, 1, w, 1}).expand({c, 1, w, 1}).contiguous();
  auto kw = kernel.view({1, 1, 1, w}).expand({c, 1, 1, w}).contiguous();
  in = torch::conv2d(in, kh, torch::Tensor(), torch::IntArrayRef{1}, torch::IntArrayRef{0}, torch::IntArrayRef{1}, c);
  in = torch::conv2d(in, kw, torch::Tensor(), torch::IntArrayRef{1}, torch::IntArrayRef{0}, torch::IntArrayRef{1}, c);
  return in.squeeze(0);
}

torch::Tensor to_unit(const PortraitImage& img) { return (img.pixels.to(torch::kDouble) + 1.0) / 2.0; }

void check_pair(const PortraitImage& a, const PortraitImage& b) {
  if (!a.pixels.sizes().equals(b.pixels.sizes())) fail(ErrorKind::kInvalidArgument, "image shapes differ");
}

}  // namespace

torch::Tensor ssim_map(const torch::Tensor& a01, const torch::Tensor& b01, const SsimParams& p) {
  if (!a01.sizes().equals(b01.sizes()) || a01.dim() != 3) {
    fail(ErrorKind::kInvalidArgument, "SSIM needs two C x H x W tensors of the same shape");
  }
  if (a01.size(1) < p.window || a01.size(2) < p.window) fail(ErrorKind::kInvalidArgument, "image smaller than SSIM window");
  const auto a = a01.to(torch::kDouble);
  const auto b = b01.to(torch::kDouble);
  const auto kernel = gaussian_kernel(p);
  const double c1 = std::pow(p.k1 * p.dynamic_range, 2);
  const double c2 = std::pow(p.k2 * p.dynamic_range, 2);
  const auto mu_a = blur(a, kernel);
  const auto mu_b = blur(b, kernel);
  const auto var_a = blur(a * a, kernel) - mu_a * mu_a;
  const auto var_b = blur(b * b, kernel) - mu_b * mu_b;
  const auto cov = blur(a * b, kernel) - mu_a * mu_b;
  const auto num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
  const auto den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
  return (num / den).mean(0);
}

double ssim(const PortraitImage& a, const PortraitImage& b, const SsimParams& params) {
  check_pair(a, b);
  return ssim_map(to_unit(a), to_unit(b), params).mean().item<double>();
}

std::optional<double> masked_ssim(const PortraitImage& a, const PortraitImage& b, const PoseMask& mask,
                                  const SsimParams& params) {
  check_pair(a, b);
  const auto h = a.pixels.size(1);
  const auto w = a.pixels.size(2);
  if (mask.mask.dim() != 2 || mask.mask.size(0) != h || mask.mask.size(1) != w) {
    fail(ErrorKind::kInvalidArgument, "mask shape does not match the images");
  }
  const auto m = (mask.mask.to(torch::kDouble) > 0.5).to(torch::kDouble);
  const auto half = params.window / 2;
  const auto centres = m.slice(0, half, h - half).slice(1, half, w - half);
  const double count = centres.sum().item<double>();
  if (count == 0.0) return std::nullopt;
  const auto ua = to_unit(a) * m;
  const auto ub = to_unit(b) * m;
  const auto map = ssim_map(ua, ub, params);
  return (map * centres).sum().item<double>() / count;
}

double mean_l1(const PortraitImage& a, const PortraitImage& b) {
  check_pair(a, b);
  return (a.pixels.to(torch::kDouble) - b.pixels.to(torch::kDouble)).abs().mean().item<double>();
}

double pixel_accuracy(const torch::Tensor& predicted, const torch::Tensor& truth) {
  if (!predicted.sizes().equals(truth.sizes())) fail(ErrorKind::kInvalidArgument, "label map shapes differ");
  return predicted.eq(truth).to(torch::kDouble).mean().item<double>();
}

IouAccumulator::IouAccumulator(int num_classes) : intersection(num_classes, 0), uni(num_classes, 0) {}

void IouAccumulator::add(const torch::Tensor& predicted, const torch::Tensor& truth) {
  if (!predicted.sizes().equals(truth.sizes())) fail(ErrorKind::kInvalidArgument, "label map shapes differ");
  for (size_t k = 0; k < intersection.size(); ++k) {
    const auto p = predicted.eq(static_cast<int64_t>(k));
    const auto t = truth.eq(static_cast<int64_t>(k));
    intersection[k] += (p & t).sum().item<int64_t>();
    uni[k] += (p | t).sum().item<int64_t>();
  }
}

std::vector<std::optional<double>> IouAccumulator::per_class() const {
  std::vector<std::optional<double>> out;
  for (size_t k = 0; k < uni.size(); ++k) {
    if (uni[k] == 0) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(static_cast<double>(intersection[k]) / static_cast<double>(uni[k]));
    }
  }
  return out;
}

double IouAccumulator::mean() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : per_class()) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / n;
}

}  // namespace recapture
