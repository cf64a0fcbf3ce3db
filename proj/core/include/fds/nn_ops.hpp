#pragma once

#include <vector>

#include "fds/autograd.hpp"

namespace fds::ag {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
};

/// weight: [Cout, Cin, kh, kw]; bias: [1, Cout, 1, 1] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dOptions opts);

/// Running statistics for one batch-norm layer, owned by the model.
struct BatchNormBuffers {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  explicit BatchNormBuffers(int channels = 0)
      : running_mean(static_cast<std::size_t>(channels), 0.0),
        running_var(static_cast<std::size_t>(channels), 1.0) {}
};

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// gamma, beta: [1, C, 1, 1]. Training mode normalises with batch statistics
/// and updates `buffers`; eval mode uses the stored running statistics.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormBuffers& buffers,
               BatchNormOptions opts);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
/// Max pooling with a square window.
Var max_pool2d(const Var& x, int kernel, int stride, int padding);
Var upsample_nearest2x(const Var& x);
Var concat_channels(const Var& a, const Var& b);
/// x * mask with mask [N, 1, H, W] broadcast over channels. Mask is a constant.
Var mask_multiply(const Var& x, const Tensor& mask);
/// Per-channel spatial mean: [N, C, H, W] -> [N, C, 1, 1].
Var global_avg_pool(const Var& x);
/// Sum of all elements -> scalar.
Var sum(const Var& x);
Var scale(const Var& x, double factor);

}  // namespace fds::ag
