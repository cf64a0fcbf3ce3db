#include "fds/nn_ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "fds/error.hpp"

namespace fds::ag {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  int cin, h, w, k, stride, pad, hout, wout;
  int rows() const { return cin * k * k; }
  int cols() const { return hout * wout; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// col[(c*k + ky)*k + kx][oy*wout + ox] = x[c][oy*s - p + ky][ox*s - p + kx]
void im2col(const double* x, const ConvGeometry& g, double* col) {
  for (int c = 0; c < g.cin; ++c) {
    const double* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + oy * g.wout;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wout, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wout; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* dx) {
  for (int c = 0; c < g.cin; ++c) {
    double* plane = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row =
            col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + oy * g.wout;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wout; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dOptions opts) {
  const Tensor& in = x.value();
  const Tensor& wt = weight.value();
  if (wt.h() != wt.w()) throw ShapeError("conv2d: only square kernels are supported");
  if (in.c() != wt.c()) {
    throw ShapeError("conv2d: input has " + std::to_string(in.c()) + " channels, weight expects " +
                     std::to_string(wt.c()));
  }
  ConvGeometry g{in.c(), in.h(), in.w(), wt.h(), opts.stride, opts.padding, 0, 0};
  g.hout = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wout = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (g.hout <= 0 || g.wout <= 0) throw ShapeError("conv2d: input smaller than kernel");
  const int cout = wt.n();
  const int batch = in.n();

  Tensor out(batch, cout, g.hout, g.wout);
  ConstMapMat wmat(wt.data(), cout, g.rows());
  std::vector<double> col(g.is_pointwise() ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());
  for (int i = 0; i < batch; ++i) {
    const double* src = in.data() + i * in.sample_size();
    if (!g.is_pointwise()) im2col(src, g, col.data());
    ConstMapMat cmat(g.is_pointwise() ? src : col.data(), g.rows(), g.cols());
    MapMat omat(out.data() + i * out.sample_size(), cout, g.cols());
    omat.noalias() = wmat * cmat;
    if (bias.defined()) {
      for (int co = 0; co < cout; ++co) omat.row(co).array() += bias.value()[co];
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [g, cout, batch](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    Node* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    const Tensor& gout = self.grad;
    ConstMapMat wmat(wn.value.data(), cout, g.rows());
    std::vector<double> col(static_cast<std::size_t>(g.rows()) * g.cols());
    for (int i = 0; i < batch; ++i) {
      ConstMapMat gmat(gout.data() + i * gout.sample_size(), cout, g.cols());
      const double* src = xn.value.data() + i * xn.value.sample_size();
      if (wn.requires_grad) {
        MapMat gw(wn.grad_buffer().data(), cout, g.rows());
        if (g.is_pointwise()) {
          gw.noalias() += gmat * ConstMapMat(src, g.rows(), g.cols()).transpose();
        } else {
          im2col(src, g, col.data());
          gw.noalias() += gmat * ConstMapMat(col.data(), g.rows(), g.cols()).transpose();
        }
      }
      if (bn && bn->requires_grad) {
        double* gb = bn->grad_buffer().data();
        for (int co = 0; co < cout; ++co) gb[co] += gmat.row(co).sum();
      }
      if (xn.requires_grad) {
        double* gx = xn.grad_buffer().data() + i * xn.value.sample_size();
        if (g.is_pointwise()) {
          MapMat(gx, g.rows(), g.cols()).noalias() += wmat.transpose() * gmat;
        } else {
          MapMat(col.data(), g.rows(), g.cols()).noalias() = wmat.transpose() * gmat;
          col2im_add(col.data(), g, gx);
        }
      }
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormBuffers& buffers,
               BatchNormOptions opts) {
  const Tensor& in = x.value();
  const int n = in.n(), c = in.c();
  const std::size_t plane = in.plane_size();
  if (gamma.value().size() != static_cast<std::size_t>(c) ||
      buffers.running_mean.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm: channel count mismatch");
  }
  const double count = static_cast<double>(n) * static_cast<double>(plane);
  std::vector<double> mean(c), invstd(c);
  if (opts.training) {
    if (count <= 1) throw ShapeError("batch_norm: need more than one value per channel");
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* p = in.data() + i * in.sample_size() + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) s += p[k];
      }
      const double m = s / count;
      double ss = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* p = in.data() + i * in.sample_size() + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) ss += (p[k] - m) * (p[k] - m);
      }
      const double var = ss / count;
      mean[ch] = m;
      invstd[ch] = 1.0 / std::sqrt(var + opts.eps);
      buffers.running_mean[ch] = (1.0 - opts.momentum) * buffers.running_mean[ch] + opts.momentum * m;
      buffers.running_var[ch] = (1.0 - opts.momentum) * buffers.running_var[ch] +
                                opts.momentum * ss / (count - 1.0);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = buffers.running_mean[ch];
      invstd[ch] = 1.0 / std::sqrt(buffers.running_var[ch] + opts.eps);
    }
  }

  Tensor xhat = Tensor::like(in);
  Tensor out = Tensor::like(in);
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = i * in.sample_size() + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double xh = (in[off + k] - mean[ch]) * invstd[ch];
        xhat[off + k] = xh;
        out[off + k] = gm[ch] * xh + bt[ch];
      }
    }
  }

  const bool training = opts.training;
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), invstd, n, c, plane, count, training](Node& self) {
    Node& xn = *self.inputs[0];
    Node& gn = *self.inputs[1];
    Node& bn = *self.inputs[2];
    const Tensor& gout = self.grad;
    const std::size_t ss = static_cast<std::size_t>(c) * plane;
    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = i * ss + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          sum_dy[ch] += gout[off + k];
          sum_dy_xhat[ch] += gout[off + k] * xhat[off + k];
        }
      }
    }
    if (gn.requires_grad) {
      double* g = gn.grad_buffer().data();
      for (int ch = 0; ch < c; ++ch) g[ch] += sum_dy_xhat[ch];
    }
    if (bn.requires_grad) {
      double* g = bn.grad_buffer().data();
      for (int ch = 0; ch < c; ++ch) g[ch] += sum_dy[ch];
    }
    if (!xn.requires_grad) return;
    double* gx = xn.grad_buffer().data();
    const Tensor& gm = gn.value;
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = i * ss + ch * plane;
        const double scale = gm[ch] * invstd[ch];
        if (training) {
          const double mdy = sum_dy[ch] / count;
          const double mdyx = sum_dy_xhat[ch] / count;
          for (std::size_t k = 0; k < plane; ++k) {
            gx[off + k] += scale * (gout[off + k] - mdy - xhat[off + k] * mdyx);
          }
        } else {
          for (std::size_t k = 0; k < plane; ++k) gx[off + k] += scale * gout[off + k];
        }
      }
    }
  });
}

Var relu(const Var& x) {
  Tensor out = Tensor::like(x.value());
  const Tensor& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& xn = *self.inputs[0];
    double* gx = xn.grad_buffer().data();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      if (xn.value[i] > 0.0) gx[i] += self.grad[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = Tensor::like(x.value());
  const Tensor& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    // Branches keep exp() from overflowing for large |v|.
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double p = self.value[i];
      gx[i] += self.grad[i] * p * (1.0 - p);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->grad_buffer() += self.grad;
    }
  });
}

Var max_pool2d(const Var& x, int kernel, int stride, int padding) {
  const Tensor& in = x.value();
  const int hout = (in.h() + 2 * padding - kernel) / stride + 1;
  const int wout = (in.w() + 2 * padding - kernel) / stride + 1;
  if (hout <= 0 || wout <= 0) throw ShapeError("max_pool2d: input smaller than window");
  Tensor out(in.n(), in.c(), hout, wout);
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (int i = 0; i < in.n(); ++i) {
    for (int ch = 0; ch < in.c(); ++ch) {
      for (int oy = 0; oy < hout; ++oy) {
        for (int ox = 0; ox < wout; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= in.h()) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= in.w()) continue;
              const std::size_t idx =
                  ((static_cast<std::size_t>(i) * in.c() + ch) * in.h() + iy) * in.w() + ix;
              if (in[idx] > best) {
                best = in[idx];
                best_idx = idx;
              }
            }
          }
          out[o] = best;
          argmax[o] = best_idx;
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (std::size_t k = 0; k < argmax.size(); ++k) gx[argmax[k]] += self.grad[k];
  });
}

Var upsample_nearest2x(const Var& x) {
  const Tensor& in = x.value();
  Tensor out(in.n(), in.c(), in.h() * 2, in.w() * 2);
  const int planes = in.n() * in.c();
  for (int p = 0; p < planes; ++p) {
    const double* src = in.data() + static_cast<std::size_t>(p) * in.plane_size();
    double* dst = out.data() + static_cast<std::size_t>(p) * out.plane_size();
    for (int y = 0; y < out.h(); ++y) {
      for (int xx = 0; xx < out.w(); ++xx) dst[y * out.w() + xx] = src[(y / 2) * in.w() + xx / 2];
    }
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& xn = *self.inputs[0];
    double* gx = xn.grad_buffer().data();
    const Tensor& g = self.grad;
    const int planes = g.n() * g.c();
    const int iw = xn.value.w();
    for (int p = 0; p < planes; ++p) {
      const double* src = g.data() + static_cast<std::size_t>(p) * g.plane_size();
      double* dst = gx + static_cast<std::size_t>(p) * xn.value.plane_size();
      for (int y = 0; y < g.h(); ++y) {
        for (int xx = 0; xx < g.w(); ++xx) dst[(y / 2) * iw + xx / 2] += src[y * g.w() + xx];
      }
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.n() != tb.n() || ta.h() != tb.h() || ta.w() != tb.w()) {
    throw ShapeError("concat_channels: " + ta.shape_string() + " vs " + tb.shape_string());
  }
  Tensor out(ta.n(), ta.c() + tb.c(), ta.h(), ta.w());
  for (int i = 0; i < ta.n(); ++i) {
    auto sa = ta.sample(i);
    auto sb = tb.sample(i);
    double* dst = out.data() + i * out.sample_size();
    dst = std::copy(sa.begin(), sa.end(), dst);
    std::copy(sb.begin(), sb.end(), dst);
  }
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    const std::size_t sa = an.value.sample_size();
    const std::size_t sb = bn.value.sample_size();
    for (int i = 0; i < self.grad.n(); ++i) {
      const double* g = self.grad.data() + i * self.grad.sample_size();
      if (an.requires_grad) {
        double* d = an.grad_buffer().data() + i * sa;
        for (std::size_t k = 0; k < sa; ++k) d[k] += g[k];
      }
      if (bn.requires_grad) {
        double* d = bn.grad_buffer().data() + i * sb;
        for (std::size_t k = 0; k < sb; ++k) d[k] += g[sa + k];
      }
    }
  });
}

Var mask_multiply(const Var& x, const Tensor& mask) {
  const Tensor& in = x.value();
  if (mask.n() != in.n() || mask.c() != 1 || mask.h() != in.h() || mask.w() != in.w()) {
    throw ShapeError("mask_multiply: mask " + mask.shape_string() + " does not fit " +
                     in.shape_string());
  }
  Tensor out = Tensor::like(in);
  const std::size_t plane = in.plane_size();
  for (int i = 0; i < in.n(); ++i) {
    const double* m = mask.data() + i * plane;
    for (int ch = 0; ch < in.c(); ++ch) {
      const std::size_t off = i * in.sample_size() + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) out[off + k] = in[off + k] * m[k];
    }
  }
  return make_result(std::move(out), {x}, [mask](Node& self) {
    Node& xn = *self.inputs[0];
    double* gx = xn.grad_buffer().data();
    const std::size_t plane = xn.value.plane_size();
    for (int i = 0; i < xn.value.n(); ++i) {
      const double* m = mask.data() + i * plane;
      for (int ch = 0; ch < xn.value.c(); ++ch) {
        const std::size_t off = i * xn.value.sample_size() + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) gx[off + k] += self.grad[off + k] * m[k];
      }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& in = x.value();
  const std::size_t plane = in.plane_size();
  if (plane == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Tensor out(in.n(), in.c(), 1, 1);
  for (int i = 0; i < in.n(); ++i) {
    for (int ch = 0; ch < in.c(); ++ch) {
      const double* p = in.data() + i * in.sample_size() + ch * plane;
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      out.at(i, ch, 0, 0) = s / static_cast<double>(plane);
    }
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& xn = *self.inputs[0];
    double* gx = xn.grad_buffer().data();
    const std::size_t plane = xn.value.plane_size();
    const double inv = 1.0 / static_cast<double>(plane);
    for (int i = 0; i < xn.value.n(); ++i) {
      for (int ch = 0; ch < xn.value.c(); ++ch) {
        const double g = self.grad.at(i, ch, 0, 0) * inv;
        double* d = gx + i * xn.value.sample_size() + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) d[k] += g;
      }
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_result(Tensor::scalar(s), {x}, [](Node& self) {
    const double g = self.grad[0];
    for (double& d : self.inputs[0]->grad_buffer().values()) d += g;
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  return make_result(std::move(out), {x}, [factor](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

}  // namespace fds::ag
