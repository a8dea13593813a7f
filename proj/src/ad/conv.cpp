// Convolution, pooling, upsampling and padding on channels-last grids.

#include <algorithm>
#include <cstring>

#include <Eigen/Dense>

#include "nfem/autodiff.hpp"

namespace nfem::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using Offsets = std::array<std::size_t, 3>;

std::size_t flat(const GridDims& d, std::size_t b, std::size_t i0, std::size_t i1, std::size_t i2) {
  return ((b * d.extent[0] + i0) * d.extent[1] + i1) * d.extent[2] + i2;
}

// Row p of `col` holds the receptive field of output position p:
// (k0 * k1 * k2) blocks of c_in values, zero outside the grid.
void im2col(const double* x, const GridDims& d, const Offsets& k, double* col) {
  const std::size_t cin = d.channels;
  const std::size_t row = k[0] * k[1] * k[2] * cin;
  const auto half = [&](int a) { return static_cast<std::ptrdiff_t>((k[a] - 1) / 2); };
  const auto inside = [&](std::ptrdiff_t s, int a) { return s >= 0 && s < static_cast<std::ptrdiff_t>(d.extent[a]); };
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t i0 = 0; i0 < d.extent[0]; ++i0)
      for (std::size_t i1 = 0; i1 < d.extent[1]; ++i1)
        for (std::size_t i2 = 0; i2 < d.extent[2]; ++i2) {
          double* dst = col + flat(d, b, i0, i1, i2) * row;
          for (std::size_t a0 = 0; a0 < k[0]; ++a0) {
            const std::ptrdiff_t s0 = static_cast<std::ptrdiff_t>(i0 + a0) - half(0);
            for (std::size_t a1 = 0; a1 < k[1]; ++a1) {
              const std::ptrdiff_t s1 = static_cast<std::ptrdiff_t>(i1 + a1) - half(1);
              for (std::size_t a2 = 0; a2 < k[2]; ++a2, dst += cin) {
                const std::ptrdiff_t s2 = static_cast<std::ptrdiff_t>(i2 + a2) - half(2);
                if (inside(s0, 0) && inside(s1, 1) && inside(s2, 2))
                  std::memcpy(dst, x + flat(d, b, s0, s1, s2) * cin, cin * sizeof(double));
                else
                  std::memset(dst, 0, cin * sizeof(double));
              }
            }
          }
        }
}

void col2im(const double* col, const GridDims& d, const Offsets& k, double* dx) {
  const std::size_t cin = d.channels;
  const std::size_t row = k[0] * k[1] * k[2] * cin;
  const auto half = [&](int a) { return static_cast<std::ptrdiff_t>((k[a] - 1) / 2); };
  const auto inside = [&](std::ptrdiff_t s, int a) { return s >= 0 && s < static_cast<std::ptrdiff_t>(d.extent[a]); };
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t i0 = 0; i0 < d.extent[0]; ++i0)
      for (std::size_t i1 = 0; i1 < d.extent[1]; ++i1)
        for (std::size_t i2 = 0; i2 < d.extent[2]; ++i2) {
          const double* src = col + flat(d, b, i0, i1, i2) * row;
          for (std::size_t a0 = 0; a0 < k[0]; ++a0) {
            const std::ptrdiff_t s0 = static_cast<std::ptrdiff_t>(i0 + a0) - half(0);
            for (std::size_t a1 = 0; a1 < k[1]; ++a1) {
              const std::ptrdiff_t s1 = static_cast<std::ptrdiff_t>(i1 + a1) - half(1);
              for (std::size_t a2 = 0; a2 < k[2]; ++a2, src += cin) {
                const std::ptrdiff_t s2 = static_cast<std::ptrdiff_t>(i2 + a2) - half(2);
                if (!(inside(s0, 0) && inside(s1, 1) && inside(s2, 2))) continue;
                double* t = dx + flat(d, b, s0, s1, s2) * cin;
                for (std::size_t c = 0; c < cin; ++c) t[c] += src[c];
              }
            }
          }
        }
}

Tensor convolve(Tape& tape, const Tensor& x, const Tensor& kernel, const Tensor& bias, const Offsets& k,
                const char* op) {
  const GridDims d = grid_dims(x.shape());
  const Shape& ks = kernel.shape();
  const std::size_t taps = k[0] * k[1] * k[2];
  if (ks.size() < 2 || numel(ks) != taps * ks[ks.size() - 2] * ks.back())
    throw ShapeError("ad", std::string(op) + ": bad kernel shape " + shape_string(ks));
  const std::size_t cin = ks[ks.size() - 2], cout = ks.back();
  if (cin != d.channels)
    throw ShapeError("ad", std::string(op) + ": input has " + std::to_string(d.channels) + " channels, kernel expects " +
                               std::to_string(cin));
  if (bias.size() != cout) throw ShapeError("ad", std::string(op) + ": bias size does not match output channels");

  const std::size_t P = d.batch * d.positions();
  const std::size_t width = taps * cin;
  std::shared_ptr<std::vector<double>> col;
  const double* col_data = x.values().data();
  if (taps > 1) {
    col = std::make_shared<std::vector<double>>(P * width);
    im2col(x.values().data(), d, k, col->data());
    col_data = col->data();
  }

  std::vector<double> out(P * cout);
  MutMap Y(out.data(), P, cout);
  Y.noalias() = ConstMap(col_data, P, width) * ConstMap(kernel.values().data(), width, cout);
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), cout);

  GridDims od = d;
  od.channels = cout;
  return tape.record(od.shape(), std::move(out), {x, kernel, bias}, op, [d, k, P, width, cout, col](Node& self) {
    Node& xn = *self.parents[0];
    Node& kn = *self.parents[1];
    Node& bn = *self.parents[2];
    const ConstMap dY(self.grad.data(), P, cout);
    const double* col_data = col ? col->data() : xn.value.data();
    const ConstMap C(col_data, P, width);
    if (kn.requires_grad) MutMap(kn.ensure_grad().data(), width, cout).noalias() += C.transpose() * dY;
    if (bn.requires_grad) {
      // Fixed summation order: the vectorised column sum depends on buffer alignment.
      auto& db = bn.ensure_grad();
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t c = 0; c < cout; ++c) db[c] += dY(p, c);
    }
    if (xn.requires_grad) {
      const ConstMap W(kn.value.data(), width, cout);
      if (col) {
        RowMat dcol = dY * W.transpose();
        col2im(dcol.data(), d, k, xn.ensure_grad().data());
      } else {
        MutMap(xn.ensure_grad().data(), P, width).noalias() += dY * W.transpose();
      }
    }
  });
}

}  // namespace

Tensor conv3x3(Tape& tape, const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const GridDims d = grid_dims(x.shape());
  if (kernel.shape().size() != static_cast<std::size_t>(d.spatial_rank) + 2)
    throw ShapeError("ad", "conv3x3: kernel rank must be spatial rank + 2, got " + shape_string(kernel.shape()));
  for (int a = 0; a < d.spatial_rank; ++a)
    if (kernel.shape()[a] != 3) throw ShapeError("ad", "conv3x3: kernel spatial extents must be 3");
  const Offsets k{3, 3, d.spatial_rank == 3 ? 3u : 1u};
  return convolve(tape, x, kernel, bias, k, "conv3x3");
}

Tensor conv1x1(Tape& tape, const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (kernel.shape().size() != 2) throw ShapeError("ad", "conv1x1: kernel must be (c_in, c_out)");
  return convolve(tape, x, kernel, bias, {1, 1, 1}, "conv1x1");
}

Tensor maxpool2(Tape& tape, const Tensor& x) {
  const GridDims d = grid_dims(x.shape());
  GridDims od = d;
  Offsets win{1, 1, 1};
  for (int a = 0; a < d.spatial_rank; ++a) {
    if (d.extent[a] % 2 != 0)
      throw ShapeError("ad", "maxpool2: odd spatial extent " + std::to_string(d.extent[a]) + " on axis " +
                                 std::to_string(a));
    od.extent[a] = d.extent[a] / 2;
    win[a] = 2;
  }
  const std::size_t C = d.channels;
  std::vector<double> out(od.batch * od.positions() * C);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& in = x.values();
  for (std::size_t b = 0; b < od.batch; ++b)
    for (std::size_t o0 = 0; o0 < od.extent[0]; ++o0)
      for (std::size_t o1 = 0; o1 < od.extent[1]; ++o1)
        for (std::size_t o2 = 0; o2 < od.extent[2]; ++o2) {
          const std::size_t obase = flat(od, b, o0, o1, o2) * C;
          for (std::size_t c = 0; c < C; ++c) {
            std::size_t best = 0;
            double best_v = 0.0;
            bool first = true;
            for (std::size_t a0 = 0; a0 < win[0]; ++a0)
              for (std::size_t a1 = 0; a1 < win[1]; ++a1)
                for (std::size_t a2 = 0; a2 < win[2]; ++a2) {
                  const std::size_t idx = flat(d, b, o0 * win[0] + a0, o1 * win[1] + a1, o2 * win[2] + a2) * C + c;
                  if (first || in[idx] > best_v) {
                    best = idx;
                    best_v = in[idx];
                    first = false;
                  }
                }
            out[obase + c] = best_v;
            (*argmax)[obase + c] = best;
          }
        }
  return tape.record(od.shape(), std::move(out), {x}, "maxpool2", [argmax](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[(*argmax)[i]] += self.grad[i];
  });
}

Tensor upsample_concat(Tape& tape, const Tensor& coarse, const Tensor& skip) {
  const GridDims dc = grid_dims(coarse.shape());
  const GridDims ds = grid_dims(skip.shape());
  if (dc.spatial_rank != ds.spatial_rank || dc.batch != ds.batch)
    throw ShapeError("ad", "upsample_concat: batch or rank mismatch");
  for (int a = 0; a < dc.spatial_rank; ++a)
    if (ds.extent[a] != 2 * dc.extent[a])
      throw ShapeError("ad", "upsample_concat: skip extents " + shape_string(skip.shape()) +
                                 " are not twice the coarse extents " + shape_string(coarse.shape()));
  const std::size_t c1 = dc.channels, c2 = ds.channels, co = c1 + c2;
  GridDims od = ds;
  od.channels = co;
  const int r = dc.spatial_rank;
  std::vector<double> out(od.batch * od.positions() * co);
  const auto& cv = coarse.values();
  const auto& sv = skip.values();
  for (std::size_t b = 0; b < od.batch; ++b)
    for (std::size_t i0 = 0; i0 < od.extent[0]; ++i0)
      for (std::size_t i1 = 0; i1 < od.extent[1]; ++i1)
        for (std::size_t i2 = 0; i2 < od.extent[2]; ++i2) {
          const std::size_t p = flat(od, b, i0, i1, i2);
          const std::size_t q = flat(dc, b, i0 / 2, i1 / 2, r == 3 ? i2 / 2 : i2);
          std::memcpy(&out[p * co], &cv[q * c1], c1 * sizeof(double));
          std::memcpy(&out[p * co + c1], &sv[p * c2], c2 * sizeof(double));
        }
  return tape.record(od.shape(), std::move(out), {coarse, skip}, "upsample_concat", [dc, od, c1, c2, r](Node& self) {
    Node& cn = *self.parents[0];
    Node& sn = *self.parents[1];
    const std::size_t co = c1 + c2;
    double* gc = cn.requires_grad ? cn.ensure_grad().data() : nullptr;
    double* gs = sn.requires_grad ? sn.ensure_grad().data() : nullptr;
    for (std::size_t b = 0; b < od.batch; ++b)
      for (std::size_t i0 = 0; i0 < od.extent[0]; ++i0)
        for (std::size_t i1 = 0; i1 < od.extent[1]; ++i1)
          for (std::size_t i2 = 0; i2 < od.extent[2]; ++i2) {
            const std::size_t p = flat(od, b, i0, i1, i2);
            const double* g = &self.grad[p * co];
            if (gc) {
              double* t = gc + flat(dc, b, i0 / 2, i1 / 2, r == 3 ? i2 / 2 : i2) * c1;
              for (std::size_t c = 0; c < c1; ++c) t[c] += g[c];
            }
            if (gs) {
              double* t = gs + p * c2;
              for (std::size_t c = 0; c < c2; ++c) t[c] += g[c1 + c];
            }
          }
  });
}

namespace {

// Copies between a grid and the same grid grown by `pad` on every side.
// grow = true scatters small -> big, false gathers big -> small.
void pad_copy(const GridDims& small, const GridDims& big, std::size_t pad, int rank, const double* src, double* dst,
              bool grow, bool accumulate) {
  const std::size_t C = small.channels;
  const std::size_t p2 = rank == 3 ? pad : 0;
  for (std::size_t b = 0; b < small.batch; ++b)
    for (std::size_t i0 = 0; i0 < small.extent[0]; ++i0)
      for (std::size_t i1 = 0; i1 < small.extent[1]; ++i1)
        for (std::size_t i2 = 0; i2 < small.extent[2]; ++i2) {
          const std::size_t s = flat(small, b, i0, i1, i2) * C;
          const std::size_t g = flat(big, b, i0 + pad, i1 + pad, i2 + p2) * C;
          const double* from = src + (grow ? s : g);
          double* to = dst + (grow ? g : s);
          if (accumulate)
            for (std::size_t c = 0; c < C; ++c) to[c] += from[c];
          else
            std::memcpy(to, from, C * sizeof(double));
        }
}

}  // namespace

Tensor pad_spatial(Tape& tape, const Tensor& x, std::size_t pad) {
  const GridDims d = grid_dims(x.shape());
  GridDims od = d;
  for (int a = 0; a < d.spatial_rank; ++a) od.extent[a] += 2 * pad;
  std::vector<double> out(od.batch * od.positions() * od.channels, 0.0);
  pad_copy(d, od, pad, d.spatial_rank, x.values().data(), out.data(), true, false);
  return tape.record(od.shape(), std::move(out), {x}, "pad", [d, od, pad](Node& self) {
    pad_copy(d, od, pad, d.spatial_rank, self.grad.data(), self.parents[0]->ensure_grad().data(), false, true);
  });
}

Tensor crop_spatial(Tape& tape, const Tensor& x, std::size_t pad) {
  const GridDims d = grid_dims(x.shape());
  GridDims od = d;
  for (int a = 0; a < d.spatial_rank; ++a) {
    if (d.extent[a] <= 2 * pad) throw ShapeError("ad", "crop: padding exceeds the spatial extent");
    od.extent[a] -= 2 * pad;
  }
  std::vector<double> out(od.batch * od.positions() * od.channels);
  pad_copy(od, d, pad, d.spatial_rank, x.values().data(), out.data(), false, false);
  return tape.record(od.shape(), std::move(out), {x}, "crop", [d, od, pad](Node& self) {
    pad_copy(od, d, pad, d.spatial_rank, self.grad.data(), self.parents[0]->ensure_grad().data(), true, true);
  });
}

}  // namespace nfem::ad
