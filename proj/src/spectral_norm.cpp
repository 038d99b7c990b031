#include "recapture/spectral_norm.hpp"

#include <cmath>

#include "recapture/error.hpp"

namespace recapture {

namespace {

torch::Tensor normalized(const torch::Tensor& x) { return x / (x.norm() + 1e-12); }

}  // namespace

torch::Tensor spectral_normalize(const torch::Tensor& weight, torch::Tensor& u, torch::Tensor& v, int iterations,
                                 bool update) {
  require(weight.dim() == 2, "spectral_normalize expects a 2-D weight");
  require(u.dim() == 1 && u.size(0) == weight.size(0), "power-iteration u has the wrong size");
  require(v.dim() == 1 && v.size(0) == weight.size(1), "power-iteration v has the wrong size");
  if (update) {
    torch::NoGradGuard no_grad;
    const auto w = weight.detach();
    for (int i = 0; i < iterations; ++i) {
      v.copy_(normalized(torch::mv(w.t(), u)));
      u.copy_(normalized(torch::mv(w, v)));
    }
  }
  // Later calls update u and v in place; the graph keeps its own copies.
  const auto sigma = torch::dot(u.clone(), torch::mv(weight, v.clone()));
  if (std::abs(sigma.item<double>()) < 1e-12) return weight;
  return weight / sigma;
}

double spectral_sigma(const torch::Tensor& weight, const torch::Tensor& u, const torch::Tensor& v) {
  torch::NoGradGuard no_grad;
  return torch::dot(u, torch::mv(weight, v)).item<double>();
}

SpectralWeight::SpectralWeight(torch::nn::Module& owner, const std::string& name, torch::Tensor init, bool enabled)
    : enabled_(enabled) {
  weight_ = owner.register_parameter(name, std::move(init));
  if (enabled_) {
    const auto rows = weight_.size(0);
    const auto cols = weight_.numel() / rows;
    u_ = owner.register_buffer(name + "_u", normalized(torch::randn({rows}, weight_.options())));
    v_ = owner.register_buffer(name + "_v", normalized(torch::randn({cols}, weight_.options())));
  }
}

torch::Tensor SpectralWeight::get(bool training) const {
  if (!enabled_) return weight_;
  const auto flat = weight_.reshape({weight_.size(0), -1});
  return spectral_normalize(flat, u_, v_, 1, training).view(weight_.sizes());
}

SNConv2dImpl::SNConv2dImpl(const ConvOptions& opts) : options(opts) {
  require(opts.in > 0 && opts.out > 0 && opts.kernel > 0, "conv needs positive sizes");
  const double fan_in = static_cast<double>(opts.in * opts.kernel * opts.kernel);
  const double bound = 1.0 / std::sqrt(fan_in);
  auto w = torch::empty({opts.out, opts.in, opts.kernel, opts.kernel}).uniform_(-bound, bound);
  weight_ = SpectralWeight(*this, "weight", w, opts.spectral);
  if (opts.bias) bias_ = register_parameter("bias", torch::empty({opts.out}).uniform_(-bound, bound));
  if (opts.norm) {
    norm_weight_ = register_parameter("norm_weight", torch::ones({opts.out}));
    norm_bias_ = register_parameter("norm_bias", torch::zeros({opts.out}));
  }
}

torch::Tensor SNConv2dImpl::effective_weight() const { return weight_.get(false); }

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
  const auto w = weight_.get(is_training());
  auto y = torch::conv2d(x, w, options.bias ? bias_ : torch::Tensor(), options.stride,
                         (options.kernel - options.stride + 1) / 2);
  if (!options.norm) return y;
  return torch::instance_norm(y, norm_weight_, norm_bias_, {}, {}, /*use_input_stats=*/true, 0.1, 1e-5,
                              /*cudnn_enabled=*/false);
}

SNLinearMapImpl::SNLinearMapImpl(int64_t in, int64_t out, bool spectral, torch::Tensor init) {
  if (!init.defined()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    init = torch::empty({out, in}).uniform_(-bound, bound);
  }
  require(init.dim() == 2 && init.size(0) == out && init.size(1) == in, "linear map init has the wrong shape");
  weight_ = SpectralWeight(*this, "weight", init, spectral);
}

torch::Tensor SNLinearMapImpl::weight() const { return weight_.get(is_training()); }

torch::Tensor SNLinearMapImpl::forward(const torch::Tensor& x) {
  const auto w = weight_.get(is_training());
  if (x.dim() == 4) return torch::conv2d(x, w.view({w.size(0), w.size(1), 1, 1}));
  return torch::matmul(x, w.t());
}

}  // namespace recapture
