#include "icsc/nn/ops.hpp"

#include <array>
#include <string>

#include "icsc/error.hpp"
#include "icsc/simd/kernels.hpp"

namespace icsc::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

// Column matrix [C*K*K, H*W] for a same-padded stride-1 convolution.
Tensor im2col(const Tensor& x, std::size_t k) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor col({c * k * k, h * w});
  double* out = col.ptr();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = x.ptr() + ch * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + kx) - pad;
            const bool inside = iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix >= 0 &&
                                ix < static_cast<std::ptrdiff_t>(w);
            *out++ = inside ? plane[iy * static_cast<std::ptrdiff_t>(w) + ix] : 0.0;
          }
        }
      }
    }
  }
  return col;
}

void col2im_add(const Tensor& col, std::size_t k, Tensor& gx) {
  const std::size_t c = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const double* in = col.ptr();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double* plane = gx.ptr() + ch * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          for (std::size_t xx = 0; xx < w; ++xx, ++in) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + kx) - pad;
            if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix >= 0 &&
                ix < static_cast<std::ptrdiff_t>(w)) {
              plane[iy * static_cast<std::ptrdiff_t>(w) + ix] += *in;
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Tape& tape, Var input, Var weight, Var bias) {
  const Tensor& x = tape.value(input);
  const Tensor& wt = tape.value(weight);
  const Tensor& b = tape.value(bias);
  require(x.rank() == 3, "conv2d input must be [C,H,W], got " + shape_string(x.shape()));
  require(wt.rank() == 4 && wt.dim(1) == x.dim(0) && wt.dim(2) == wt.dim(3) && wt.dim(2) % 2 == 1,
          "conv2d weight " + shape_string(wt.shape()) + " incompatible with input " +
              shape_string(x.shape()));
  require(b.rank() == 1 && b.dim(0) == wt.dim(0), "conv2d bias must be [OC]");

  const std::size_t oc = wt.dim(0), k = wt.dim(2);
  const std::size_t h = x.dim(1), w = x.dim(2), hw = h * w;
  const std::size_t taps = x.dim(0) * k * k;
  const auto& kern = simd::active_kernels();

  Tensor col = im2col(x, k);
  Tensor out({oc, h, w});
  for (std::size_t o = 0; o < oc; ++o) {
    double* dst = out.ptr() + o * hw;
    std::fill(dst, dst + hw, b[o]);
    const double* wrow = wt.ptr() + o * taps;
    for (std::size_t j = 0; j < taps; ++j) {
      if (wrow[j] != 0.0) kern.axpy(wrow[j], col.ptr() + j * hw, dst, hw);
    }
  }

  const std::array<Var, 3> parents{input, weight, bias};
  return tape.record(std::move(out), parents,
                     [input, weight, bias, col = std::move(col), oc, k, hw, taps](Tape& t, Var self) {
                       const auto& kern = simd::active_kernels();
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(weight)) {
                         Tensor& gw = t.grad(weight);
                         for (std::size_t o = 0; o < oc; ++o) {
                           for (std::size_t j = 0; j < taps; ++j) {
                             gw[o * taps + j] += kern.dot(g.ptr() + o * hw, col.ptr() + j * hw, hw);
                           }
                         }
                       }
                       if (t.requires_grad(bias)) {
                         Tensor& gb = t.grad(bias);
                         for (std::size_t o = 0; o < oc; ++o) {
                           double s = 0.0;
                           const double* go = g.ptr() + o * hw;
                           for (std::size_t i = 0; i < hw; ++i) s += go[i];
                           gb[o] += s;
                         }
                       }
                       if (t.requires_grad(input)) {
                         const Tensor& wt = t.value(weight);
                         Tensor gcol(col.shape());
                         for (std::size_t o = 0; o < oc; ++o) {
                           const double* wrow = wt.ptr() + o * taps;
                           for (std::size_t j = 0; j < taps; ++j) {
                             kern.axpy(wrow[j], g.ptr() + o * hw, gcol.ptr() + j * hw, hw);
                           }
                         }
                         col2im_add(gcol, k, t.grad(input));
                       }
                     });
}

Var relu(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  Tensor out(x.shape());
  simd::active_kernels().relu_forward(x.ptr(), out.ptr(), x.size());
  const std::array<Var, 1> parents{input};
  return tape.record(std::move(out), parents, [input](Tape& t, Var self) {
    const Tensor& x = t.value(input);
    simd::active_kernels().relu_backward(x.ptr(), t.grad(self).ptr(), t.grad(input).ptr(),
                                         x.size());
  });
}

Var maxpool2(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  require(x.rank() == 3, "maxpool2 input must be [C,H,W], got " + shape_string(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h / 2, ow = w / 2;
  require(oh > 0 && ow > 0, "maxpool2 input too small: " + shape_string(x.shape()));
  Tensor out({c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  std::size_t idx = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx, ++idx) {
        std::size_t best = (ch * h + 2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t at = (ch * h + 2 * y + dy) * w + 2 * xx + dx;
            if (x[at] > x[best]) best = at;
          }
        }
        argmax[idx] = best;
        out[idx] = x[best];
      }
    }
  }
  const std::array<Var, 1> parents{input};
  return tape.record(std::move(out), parents,
                     [input, argmax = std::move(argmax)](Tape& t, Var self) {
                       const Tensor& g = t.grad(self);
                       Tensor& gx = t.grad(input);
                       for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += g[i];
                     });
}

Var flatten(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  const std::array<Var, 1> parents{input};
  return tape.record(x.reshaped({x.size()}), parents, [input](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(input);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var dense(Tape& tape, Var input, Var weight, Var bias) {
  const Tensor& x = tape.value(input);
  const Tensor& wt = tape.value(weight);
  const Tensor& b = tape.value(bias);
  require(x.rank() == 1, "dense input must be rank 1, got " + shape_string(x.shape()));
  require(wt.rank() == 2 && wt.dim(1) == x.size(),
          "dense weight " + shape_string(wt.shape()) + " incompatible with input " +
              shape_string(x.shape()));
  require(b.rank() == 1 && b.dim(0) == wt.dim(0), "dense bias must be [M]");
  const std::size_t m = wt.dim(0), n = wt.dim(1);
  const auto& kern = simd::active_kernels();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) out[i] = b[i] + kern.dot(wt.ptr() + i * n, x.ptr(), n);

  const std::array<Var, 3> parents{input, weight, bias};
  return tape.record(std::move(out), parents, [input, weight, bias, m, n](Tape& t, Var self) {
    const auto& kern = simd::active_kernels();
    const Tensor& g = t.grad(self);
    if (t.requires_grad(weight)) {
      const Tensor& x = t.value(input);
      Tensor& gw = t.grad(weight);
      for (std::size_t i = 0; i < m; ++i) kern.axpy(g[i], x.ptr(), gw.ptr() + i * n, n);
    }
    if (t.requires_grad(bias)) {
      Tensor& gb = t.grad(bias);
      for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
    }
    if (t.requires_grad(input)) {
      const Tensor& wt = t.value(weight);
      Tensor& gx = t.grad(input);
      for (std::size_t i = 0; i < m; ++i) kern.axpy(g[i], wt.ptr() + i * n, gx.ptr(), n);
    }
  });
}

}  // namespace icsc::nn
