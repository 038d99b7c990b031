#pragma once

// Scalar reference implementations used to cross-check the tensor code. Each
// works on plain row-major std::vector<double> buffers and shares no code with
// the library.

#include <functional>
#include <random>
#include <torch/torch.h>
#include <vector>

namespace oracle {

/// C x H x W buffer.
struct Grid {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int channels, int height, int width) : c(channels), h(height), w(width), v(static_cast<size_t>(c) * h * w) {}
  double& at(int ch, int y, int x) { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
};

/// rows x cols, row-major.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c) {}
  double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

using Labels = std::vector<std::vector<int>>;  // [y][x]

Grid to_grid(const torch::Tensor& t);
Mat to_mat(const torch::Tensor& t);
Labels to_labels(const torch::Tensor& t);
torch::Tensor to_tensor(const Grid& g);
torch::Tensor to_tensor(const Mat& m);
torch::Tensor to_tensor(const Labels& labels);

double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b);

// --- SAT ---------------------------------------------------------------------

/// Double loop over every (target j, source i) pair of each non-background class.
Grid sat_transfer(const Mat& g, const Mat& theta, const Grid& enc, const Grid& dec, const Labels& src,
                  const Labels& tgt, int num_classes);

// --- LGR ---------------------------------------------------------------------

Mat normalized_adjacency(const Mat& e);
Mat gather_project(const Mat& assign_logits, const Mat& value, const Grid& feat);
Mat gather_sample(const Grid& feat, const Labels& labels, int num_nodes);
Mat fuse(const Mat& fuse_w, const Mat& projected, const Mat& sampled, double slope);
Mat propagate(const std::vector<Mat>& weights, const Mat& nodes, const Mat& norm_adj, int steps, double slope);
Grid distribute(const Mat& assign_logits, const Mat& node_mix, const Mat& out_w, const Mat& nodes,
                const Labels& labels, int h, int w);

// --- metrics -----------------------------------------------------------------

/// Direct sliding-window SSIM on [0, 1] images: per-channel windowed means,
/// variances and covariance with an explicit 2-D Gaussian, averaged over
/// channels and valid window centres. With a mask, only centres inside it count;
/// returns NaN when none do.
double ssim(const Grid& a, const Grid& b, const std::vector<std::vector<int>>* mask = nullptr);

// --- gradients ---------------------------------------------------------------

struct GradCheck {
  double max_rel_error = 0;
  double max_abs_grad = 0;
  int checked = 0;
};

/// Compares autograd gradients of `f` w.r.t. every element of `inputs` (double
/// tensors, requires_grad set here) with central differences of step h. The
/// relative error is |a - n| / max(1, |a|, |n|).
GradCheck gradient_check(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& f,
                         std::vector<torch::Tensor> inputs, double h = 1e-3);

// --- linear algebra ----------------------------------------------------------

/// Largest singular value by full decomposition.
double top_singular_value(const torch::Tensor& m);

}  // namespace oracle
