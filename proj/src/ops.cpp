#include "ssvaerr/ops.hpp"

#include <cmath>

namespace ssvaerr::diff {

namespace {

enum class BinKind { kElementwise, kScalarRight, kScalarLeft };

BinKind classify(const Array& a, const Array& b, const char* op) {
    if (a.same_shape(b)) return BinKind::kElementwise;
    if (b.size() == 1) return BinKind::kScalarRight;
    if (a.size() == 1) return BinKind::kScalarLeft;
    throw ContractError(std::string(op) + ": incompatible shapes " +
                        Array::shape_str(a.shape()) + " vs " + Array::shape_str(b.shape()));
}

void accumulate_scalar(Array& sink, const Array& g) {
    double s = 0.0;
    for (std::int64_t i = 0; i < g.size(); ++i) s += g[i];
    sink[0] += s;
}

} // namespace

NodeId add(Tape& t, NodeId a, NodeId b) {
    const Array& va = t.value(a);
    const Array& vb = t.value(b);
    BinKind kind = classify(va, vb, "add");
    Array out(kind == BinKind::kScalarLeft ? vb.shape() : va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) {
        double x = kind == BinKind::kScalarLeft ? va[0] : va[i];
        double y = kind == BinKind::kScalarRight ? vb[0] : vb[i];
        out[i] = x + y;
    }
    return t.push(std::move(out), {a, b},
                  [a, b, kind](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      if (Array* ga = tp.grad_sink(a)) {
                          if (kind == BinKind::kScalarLeft) accumulate_scalar(*ga, g);
                          else for (std::int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                      }
                      if (Array* gb = tp.grad_sink(b)) {
                          if (kind == BinKind::kScalarRight) accumulate_scalar(*gb, g);
                          else for (std::int64_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
                      }
                  },
                  t.any_requires_grad({a, b}));
}

NodeId sub(Tape& t, NodeId a, NodeId b) {
    const Array& va = t.value(a);
    const Array& vb = t.value(b);
    BinKind kind = classify(va, vb, "sub");
    Array out(kind == BinKind::kScalarLeft ? vb.shape() : va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) {
        double x = kind == BinKind::kScalarLeft ? va[0] : va[i];
        double y = kind == BinKind::kScalarRight ? vb[0] : vb[i];
        out[i] = x - y;
    }
    return t.push(std::move(out), {a, b},
                  [a, b, kind](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      if (Array* ga = tp.grad_sink(a)) {
                          if (kind == BinKind::kScalarLeft) accumulate_scalar(*ga, g);
                          else for (std::int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                      }
                      if (Array* gb = tp.grad_sink(b)) {
                          if (kind == BinKind::kScalarRight) {
                              double s = 0.0;
                              for (std::int64_t i = 0; i < g.size(); ++i) s += g[i];
                              (*gb)[0] -= s;
                          } else {
                              for (std::int64_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                          }
                      }
                  },
                  t.any_requires_grad({a, b}));
}

NodeId mul(Tape& t, NodeId a, NodeId b) {
    const Array& va = t.value(a);
    const Array& vb = t.value(b);
    BinKind kind = classify(va, vb, "mul");
    Array out(kind == BinKind::kScalarLeft ? vb.shape() : va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) {
        double x = kind == BinKind::kScalarLeft ? va[0] : va[i];
        double y = kind == BinKind::kScalarRight ? vb[0] : vb[i];
        out[i] = x * y;
    }
    return t.push(std::move(out), {a, b},
                  [a, b, kind](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& va = tp.value(a);
                      const Array& vb = tp.value(b);
                      if (Array* ga = tp.grad_sink(a)) {
                          if (kind == BinKind::kScalarLeft) {
                              double s = 0.0;
                              for (std::int64_t i = 0; i < g.size(); ++i) s += g[i] * vb[i];
                              (*ga)[0] += s;
                          } else {
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  (*ga)[i] += g[i] * (kind == BinKind::kScalarRight ? vb[0] : vb[i]);
                          }
                      }
                      if (Array* gb = tp.grad_sink(b)) {
                          if (kind == BinKind::kScalarRight) {
                              double s = 0.0;
                              for (std::int64_t i = 0; i < g.size(); ++i) s += g[i] * va[i];
                              (*gb)[0] += s;
                          } else {
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  (*gb)[i] += g[i] * (kind == BinKind::kScalarLeft ? va[0] : va[i]);
                          }
                      }
                  },
                  t.any_requires_grad({a, b}));
}

NodeId div(Tape& t, NodeId a, NodeId b) {
    const Array& va = t.value(a);
    const Array& vb = t.value(b);
    BinKind kind = classify(va, vb, "div");
    Array out(kind == BinKind::kScalarLeft ? vb.shape() : va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) {
        double x = kind == BinKind::kScalarLeft ? va[0] : va[i];
        double y = kind == BinKind::kScalarRight ? vb[0] : vb[i];
        out[i] = x / y;
    }
    return t.push(std::move(out), {a, b},
                  [a, b, kind](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& va = tp.value(a);
                      const Array& vb = tp.value(b);
                      auto xa = [&](std::int64_t i) { return kind == BinKind::kScalarLeft ? va[0] : va[i]; };
                      auto xb = [&](std::int64_t i) { return kind == BinKind::kScalarRight ? vb[0] : vb[i]; };
                      if (Array* ga = tp.grad_sink(a)) {
                          if (kind == BinKind::kScalarLeft) {
                              double s = 0.0;
                              for (std::int64_t i = 0; i < g.size(); ++i) s += g[i] / xb(i);
                              (*ga)[0] += s;
                          } else {
                              for (std::int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / xb(i);
                          }
                      }
                      if (Array* gb = tp.grad_sink(b)) {
                          if (kind == BinKind::kScalarRight) {
                              double s = 0.0;
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  s -= g[i] * xa(i) / (vb[0] * vb[0]);
                              (*gb)[0] += s;
                          } else {
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  (*gb)[i] -= g[i] * xa(i) / (xb(i) * xb(i));
                          }
                      }
                  },
                  t.any_requires_grad({a, b}));
}

NodeId add_scalar(Tape& t, NodeId a, double c) {
    const Array& va = t.value(a);
    Array out(va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = va[i] + c;
    return t.push(std::move(out), {a},
                  [a](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                  },
                  t.requires_grad(a));
}

NodeId mul_scalar(Tape& t, NodeId a, double c) {
    const Array& va = t.value(a);
    Array out(va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = va[i] * c;
    return t.push(std::move(out), {a},
                  [a, c](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * c;
                  },
                  t.requires_grad(a));
}

NodeId relu(Tape& t, NodeId a) {
    const Array& va = t.value(a);
    Array out(va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
    return t.push(std::move(out), {a},
                  [a](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& va = tp.value(a);
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < g.size(); ++i)
                              if (va[i] > 0.0) (*ga)[i] += g[i];
                  },
                  t.requires_grad(a));
}

NodeId tanh_op(Tape& t, NodeId a) {
    const Array& va = t.value(a);
    Array out(va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
    return t.push(std::move(out), {a},
                  [a](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& y = tp.value(self);
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < g.size(); ++i)
                              (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
                  },
                  t.requires_grad(a));
}

NodeId sigmoid(Tape& t, NodeId a) {
    const Array& va = t.value(a);
    Array out(va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) {
        double x = va[i];
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                          : std::exp(x) / (1.0 + std::exp(x));
    }
    return t.push(std::move(out), {a},
                  [a](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& y = tp.value(self);
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < g.size(); ++i)
                              (*ga)[i] += g[i] * y[i] * (1.0 - y[i]);
                  },
                  t.requires_grad(a));
}

NodeId square(Tape& t, NodeId a) {
    const Array& va = t.value(a);
    Array out(va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = va[i] * va[i];
    return t.push(std::move(out), {a},
                  [a](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& va = tp.value(a);
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < g.size(); ++i)
                              (*ga)[i] += 2.0 * g[i] * va[i];
                  },
                  t.requires_grad(a));
}

NodeId abs_op(Tape& t, NodeId a) {
    const Array& va = t.value(a);
    Array out(va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::fabs(va[i]);
    return t.push(std::move(out), {a},
                  [a](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& va = tp.value(a);
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < g.size(); ++i) {
                              if (va[i] > 0.0) (*ga)[i] += g[i];
                              else if (va[i] < 0.0) (*ga)[i] -= g[i];
                          }
                  },
                  t.requires_grad(a));
}

NodeId log_op(Tape& t, NodeId a, double clamp_min) {
    const Array& va = t.value(a);
    Array out(va.shape());
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = std::log(clamp_min > 0.0 && va[i] < clamp_min ? clamp_min : va[i]);
    return t.push(std::move(out), {a},
                  [a, clamp_min](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& va = tp.value(a);
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < g.size(); ++i) {
                              if (clamp_min > 0.0 && va[i] < clamp_min) continue;
                              (*ga)[i] += g[i] / va[i];
                          }
                  },
                  t.requires_grad(a));
}

NodeId softmax_last(Tape& t, NodeId a) {
    const Array& va = t.value(a);
    check(va.rank() >= 1, "softmax_last: rank 0 input");
    const int L = va.dim(va.rank() - 1);
    check(L >= 1, "softmax_last: empty last axis");
    const std::int64_t rows = va.size() / L;
    Array out(va.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = va.data() + r * L;
        double* y = out.data() + r * L;
        double m = x[0];
        for (int j = 1; j < L; ++j) m = std::max(m, x[j]);
        double z = 0.0;
        for (int j = 0; j < L; ++j) {
            y[j] = std::exp(x[j] - m);
            z += y[j];
        }
        for (int j = 0; j < L; ++j) y[j] /= z;
    }
    return t.push(std::move(out), {a},
                  [a, L, rows](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& y = tp.value(self);
                      Array* ga = tp.grad_sink(a);
                      if (!ga) return;
                      for (std::int64_t r = 0; r < rows; ++r) {
                          const double* gr = g.data() + r * L;
                          const double* yr = y.data() + r * L;
                          double dot = 0.0;
                          for (int j = 0; j < L; ++j) dot += gr[j] * yr[j];
                          double* gar = ga->data() + r * L;
                          for (int j = 0; j < L; ++j) gar[j] += yr[j] * (gr[j] - dot);
                      }
                  },
                  t.requires_grad(a));
}

NodeId l2_normalize_last(Tape& t, NodeId a, double eps) {
    const Array& va = t.value(a);
    check(va.rank() >= 1, "l2_normalize_last: rank 0 input");
    const int L = va.dim(va.rank() - 1);
    const std::int64_t rows = va.size() / L;
    Array out(va.shape());
    std::vector<double> norms(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = va.data() + r * L;
        double s = 0.0;
        for (int j = 0; j < L; ++j) s += x[j] * x[j];
        double n = std::sqrt(s);
        if (n < eps) n = eps;
        norms[static_cast<std::size_t>(r)] = n;
        double* y = out.data() + r * L;
        for (int j = 0; j < L; ++j) y[j] = x[j] / n;
    }
    return t.push(std::move(out), {a},
                  [a, L, rows, norms = std::move(norms)](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& y = tp.value(self);
                      Array* ga = tp.grad_sink(a);
                      if (!ga) return;
                      for (std::int64_t r = 0; r < rows; ++r) {
                          const double* gr = g.data() + r * L;
                          const double* yr = y.data() + r * L;
                          double dot = 0.0;
                          for (int j = 0; j < L; ++j) dot += gr[j] * yr[j];
                          double n = norms[static_cast<std::size_t>(r)];
                          double* gar = ga->data() + r * L;
                          for (int j = 0; j < L; ++j) gar[j] += (gr[j] - yr[j] * dot) / n;
                      }
                  },
                  t.requires_grad(a));
}

NodeId matmul(Tape& t, NodeId a, NodeId b) {
    const Array& va = t.value(a);
    const Array& vb = t.value(b);
    check(va.rank() == 2 && vb.rank() == 2, "matmul: inputs must be rank 2");
    check(va.dim(1) == vb.dim(0), "matmul: inner dimensions differ: " +
                                      Array::shape_str(va.shape()) + " x " +
                                      Array::shape_str(vb.shape()));
    const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Array out({m, n});
    for (int i = 0; i < m; ++i) {
        const double* ar = va.data() + static_cast<std::int64_t>(i) * k;
        double* orow = out.data() + static_cast<std::int64_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const double x = ar[l];
            const double* br = vb.data() + static_cast<std::int64_t>(l) * n;
            for (int j = 0; j < n; ++j) orow[j] += x * br[j];
        }
    }
    return t.push(std::move(out), {a, b},
                  [a, b, m, k, n](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& va = tp.value(a);
                      const Array& vb = tp.value(b);
                      if (Array* ga = tp.grad_sink(a)) {
                          // dA = g . B^T
                          for (int i = 0; i < m; ++i) {
                              const double* gr = g.data() + static_cast<std::int64_t>(i) * n;
                              double* gar = ga->data() + static_cast<std::int64_t>(i) * k;
                              for (int l = 0; l < k; ++l) {
                                  const double* br = vb.data() + static_cast<std::int64_t>(l) * n;
                                  double s = 0.0;
                                  for (int j = 0; j < n; ++j) s += gr[j] * br[j];
                                  gar[l] += s;
                              }
                          }
                      }
                      if (Array* gb = tp.grad_sink(b)) {
                          // dB = A^T . g
                          for (int i = 0; i < m; ++i) {
                              const double* ar = va.data() + static_cast<std::int64_t>(i) * k;
                              const double* gr = g.data() + static_cast<std::int64_t>(i) * n;
                              for (int l = 0; l < k; ++l) {
                                  double* gbr = gb->data() + static_cast<std::int64_t>(l) * n;
                                  const double x = ar[l];
                                  for (int j = 0; j < n; ++j) gbr[j] += x * gr[j];
                              }
                          }
                      }
                  },
                  t.any_requires_grad({a, b}));
}

namespace {

struct ConvDims {
    int ci, co;
    int in[3], k[3], s[3], p[3], out[3];
};

int conv_out_extent(int d, int k, int s, int p, const char* axis) {
    check(k >= 1 && s >= 1 && p >= 0, std::string("conv: bad kernel/stride/pad on ") + axis);
    const int span = d + 2 * p - k;
    check(span >= 0, std::string("conv: kernel does not fit padded input on ") + axis);
    return span / s + 1;
}

// Shared 3-axis kernel; 2-D convolution runs it with a singleton time axis.
void conv_forward(const ConvDims& d, const double* in, const double* kr, double* out) {
    const std::int64_t in_thw = static_cast<std::int64_t>(d.in[0]) * d.in[1] * d.in[2];
    const std::int64_t in_hw = static_cast<std::int64_t>(d.in[1]) * d.in[2];
    const std::int64_t out_thw = static_cast<std::int64_t>(d.out[0]) * d.out[1] * d.out[2];
    const std::int64_t out_hw = static_cast<std::int64_t>(d.out[1]) * d.out[2];
    auto axis_range = [](int kk, int pad, int stride, int in_d, int out_d, int& o0, int& o1) {
        // output positions o with 0 <= o*stride + kk - pad < in_d
        int lo = pad - kk;
        o0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
        int hi = in_d - 1 + pad - kk;
        o1 = hi < 0 ? 0 : std::min(out_d, hi / stride + 1);
        if (o1 < o0) o1 = o0;
    };
    for (int co = 0; co < d.co; ++co) {
        double* oc = out + co * out_thw;
        for (int ci = 0; ci < d.ci; ++ci) {
            const double* icp = in + ci * in_thw;
            const double* kc = kr + (static_cast<std::int64_t>(co) * d.ci + ci) *
                                        (static_cast<std::int64_t>(d.k[0]) * d.k[1] * d.k[2]);
            for (int kt = 0; kt < d.k[0]; ++kt) {
                int ot0, ot1; axis_range(kt, d.p[0], d.s[0], d.in[0], d.out[0], ot0, ot1);
                for (int kh = 0; kh < d.k[1]; ++kh) {
                    int oh0, oh1; axis_range(kh, d.p[1], d.s[1], d.in[1], d.out[1], oh0, oh1);
                    for (int kw = 0; kw < d.k[2]; ++kw) {
                        int ow0, ow1; axis_range(kw, d.p[2], d.s[2], d.in[2], d.out[2], ow0, ow1);
                        const double w = kc[(static_cast<std::int64_t>(kt) * d.k[1] + kh) * d.k[2] + kw];
                        if (w == 0.0) continue;
                        for (int ot = ot0; ot < ot1; ++ot) {
                            const int it = ot * d.s[0] + kt - d.p[0];
                            const double* ip = icp + it * in_hw;
                            double* op = oc + static_cast<std::int64_t>(ot) * out_hw;
                            for (int oh = oh0; oh < oh1; ++oh) {
                                const int ih = oh * d.s[1] + kh - d.p[1];
                                const double* irow = ip + static_cast<std::int64_t>(ih) * d.in[2] + kw - d.p[2];
                                double* orow = op + static_cast<std::int64_t>(oh) * d.out[2];
                                for (int ow = ow0; ow < ow1; ++ow)
                                    orow[ow] += w * irow[ow * d.s[2]];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_input(const ConvDims& d, const double* kr, const double* gout, double* gin) {
    const std::int64_t in_thw = static_cast<std::int64_t>(d.in[0]) * d.in[1] * d.in[2];
    const std::int64_t in_hw = static_cast<std::int64_t>(d.in[1]) * d.in[2];
    const std::int64_t out_thw = static_cast<std::int64_t>(d.out[0]) * d.out[1] * d.out[2];
    const std::int64_t out_hw = static_cast<std::int64_t>(d.out[1]) * d.out[2];
    auto axis_range = [](int kk, int pad, int stride, int in_d, int out_d, int& o0, int& o1) {
        int lo = pad - kk;
        o0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
        int hi = in_d - 1 + pad - kk;
        o1 = hi < 0 ? 0 : std::min(out_d, hi / stride + 1);
        if (o1 < o0) o1 = o0;
    };
    for (int ci = 0; ci < d.ci; ++ci) {
        double* gic = gin + ci * in_thw;
        for (int co = 0; co < d.co; ++co) {
            const double* goc = gout + co * out_thw;
            const double* kc = kr + (static_cast<std::int64_t>(co) * d.ci + ci) *
                                        (static_cast<std::int64_t>(d.k[0]) * d.k[1] * d.k[2]);
            for (int kt = 0; kt < d.k[0]; ++kt) {
                int ot0, ot1; axis_range(kt, d.p[0], d.s[0], d.in[0], d.out[0], ot0, ot1);
                for (int kh = 0; kh < d.k[1]; ++kh) {
                    int oh0, oh1; axis_range(kh, d.p[1], d.s[1], d.in[1], d.out[1], oh0, oh1);
                    for (int kw = 0; kw < d.k[2]; ++kw) {
                        int ow0, ow1; axis_range(kw, d.p[2], d.s[2], d.in[2], d.out[2], ow0, ow1);
                        const double w = kc[(static_cast<std::int64_t>(kt) * d.k[1] + kh) * d.k[2] + kw];
                        if (w == 0.0) continue;
                        for (int ot = ot0; ot < ot1; ++ot) {
                            const int it = ot * d.s[0] + kt - d.p[0];
                            double* gip = gic + it * in_hw;
                            const double* gop = goc + static_cast<std::int64_t>(ot) * out_hw;
                            for (int oh = oh0; oh < oh1; ++oh) {
                                const int ih = oh * d.s[1] + kh - d.p[1];
                                double* girow = gip + static_cast<std::int64_t>(ih) * d.in[2] + kw - d.p[2];
                                const double* gorow = gop + static_cast<std::int64_t>(oh) * d.out[2];
                                for (int ow = ow0; ow < ow1; ++ow)
                                    girow[ow * d.s[2]] += w * gorow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_kernel(const ConvDims& d, const double* in, const double* gout, double* gk) {
    const std::int64_t in_thw = static_cast<std::int64_t>(d.in[0]) * d.in[1] * d.in[2];
    const std::int64_t in_hw = static_cast<std::int64_t>(d.in[1]) * d.in[2];
    const std::int64_t out_thw = static_cast<std::int64_t>(d.out[0]) * d.out[1] * d.out[2];
    const std::int64_t out_hw = static_cast<std::int64_t>(d.out[1]) * d.out[2];
    auto axis_range = [](int kk, int pad, int stride, int in_d, int out_d, int& o0, int& o1) {
        int lo = pad - kk;
        o0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
        int hi = in_d - 1 + pad - kk;
        o1 = hi < 0 ? 0 : std::min(out_d, hi / stride + 1);
        if (o1 < o0) o1 = o0;
    };
    for (int co = 0; co < d.co; ++co) {
        const double* goc = gout + co * out_thw;
        for (int ci = 0; ci < d.ci; ++ci) {
            const double* icp = in + ci * in_thw;
            double* gkc = gk + (static_cast<std::int64_t>(co) * d.ci + ci) *
                                   (static_cast<std::int64_t>(d.k[0]) * d.k[1] * d.k[2]);
            for (int kt = 0; kt < d.k[0]; ++kt) {
                int ot0, ot1; axis_range(kt, d.p[0], d.s[0], d.in[0], d.out[0], ot0, ot1);
                for (int kh = 0; kh < d.k[1]; ++kh) {
                    int oh0, oh1; axis_range(kh, d.p[1], d.s[1], d.in[1], d.out[1], oh0, oh1);
                    for (int kw = 0; kw < d.k[2]; ++kw) {
                        int ow0, ow1; axis_range(kw, d.p[2], d.s[2], d.in[2], d.out[2], ow0, ow1);
                        double acc = 0.0;
                        for (int ot = ot0; ot < ot1; ++ot) {
                            const int it = ot * d.s[0] + kt - d.p[0];
                            const double* ip = icp + it * in_hw;
                            const double* gop = goc + static_cast<std::int64_t>(ot) * out_hw;
                            for (int oh = oh0; oh < oh1; ++oh) {
                                const int ih = oh * d.s[1] + kh - d.p[1];
                                const double* irow = ip + static_cast<std::int64_t>(ih) * d.in[2] + kw - d.p[2];
                                const double* gorow = gop + static_cast<std::int64_t>(oh) * d.out[2];
                                for (int ow = ow0; ow < ow1; ++ow)
                                    acc += gorow[ow] * irow[ow * d.s[2]];
                            }
                        }
                        gkc[(static_cast<std::int64_t>(kt) * d.k[1] + kh) * d.k[2] + kw] += acc;
                    }
                }
            }
        }
    }
}

NodeId conv_common(Tape& t, NodeId input, NodeId kernel, const ConvDims& dims,
                   std::vector<int> out_shape) {
    Array out(std::move(out_shape));
    conv_forward(dims, t.value(input).data(), t.value(kernel).data(), out.data());
    return t.push(std::move(out), {input, kernel},
                  [input, kernel, dims](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      if (Array* gi = tp.grad_sink(input))
                          conv_backward_input(dims, tp.value(kernel).data(), g.data(), gi->data());
                      if (Array* gk = tp.grad_sink(kernel))
                          conv_backward_kernel(dims, tp.value(input).data(), g.data(), gk->data());
                  },
                  t.any_requires_grad({input, kernel}));
}

} // namespace

NodeId conv2d(Tape& t, NodeId input, NodeId kernel, const Conv2dSpec& spec) {
    const Array& x = t.value(input);
    const Array& k = t.value(kernel);
    check(x.rank() == 3, "conv2d: input must be [C,H,W], got " + Array::shape_str(x.shape()));
    check(k.rank() == 4, "conv2d: kernel must be [C',C,kh,kw], got " + Array::shape_str(k.shape()));
    check(k.dim(1) == x.dim(0), "conv2d: kernel input channels " + std::to_string(k.dim(1)) +
                                    " != input channels " + std::to_string(x.dim(0)));
    ConvDims d{};
    d.ci = x.dim(0);
    d.co = k.dim(0);
    d.in[0] = 1; d.in[1] = x.dim(1); d.in[2] = x.dim(2);
    d.k[0] = 1; d.k[1] = k.dim(2); d.k[2] = k.dim(3);
    d.s[0] = 1; d.s[1] = spec.stride[0]; d.s[2] = spec.stride[1];
    d.p[0] = 0; d.p[1] = spec.pad[0]; d.p[2] = spec.pad[1];
    d.out[0] = 1;
    d.out[1] = conv_out_extent(d.in[1], d.k[1], d.s[1], d.p[1], "H");
    d.out[2] = conv_out_extent(d.in[2], d.k[2], d.s[2], d.p[2], "W");
    return conv_common(t, input, kernel, d, {d.co, d.out[1], d.out[2]});
}

NodeId conv3d(Tape& t, NodeId input, NodeId kernel, const Conv3dSpec& spec) {
    const Array& x = t.value(input);
    const Array& k = t.value(kernel);
    check(x.rank() == 4, "conv3d: input must be [C,T,H,W], got " + Array::shape_str(x.shape()));
    check(k.rank() == 5, "conv3d: kernel must be [C',C,kt,kh,kw], got " + Array::shape_str(k.shape()));
    check(k.dim(1) == x.dim(0), "conv3d: kernel input channels " + std::to_string(k.dim(1)) +
                                    " != input channels " + std::to_string(x.dim(0)));
    ConvDims d{};
    d.ci = x.dim(0);
    d.co = k.dim(0);
    d.in[0] = x.dim(1); d.in[1] = x.dim(2); d.in[2] = x.dim(3);
    d.k[0] = k.dim(2); d.k[1] = k.dim(3); d.k[2] = k.dim(4);
    d.s[0] = spec.stride[0]; d.s[1] = spec.stride[1]; d.s[2] = spec.stride[2];
    d.p[0] = spec.pad[0]; d.p[1] = spec.pad[1]; d.p[2] = spec.pad[2];
    d.out[0] = conv_out_extent(d.in[0], d.k[0], d.s[0], d.p[0], "T");
    d.out[1] = conv_out_extent(d.in[1], d.k[1], d.s[1], d.p[1], "H");
    d.out[2] = conv_out_extent(d.in[2], d.k[2], d.s[2], d.p[2], "W");
    return conv_common(t, input, kernel, d, {d.co, d.out[0], d.out[1], d.out[2]});
}

NodeId sum_all(Tape& t, NodeId a) {
    const Array& va = t.value(a);
    double s = 0.0;
    for (std::int64_t i = 0; i < va.size(); ++i) s += va[i];
    return t.push(Array::scalar(s), {a},
                  [a](Tape& tp, NodeId self) {
                      const double g = tp.out_grad(self)[0];
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < ga->size(); ++i) (*ga)[i] += g;
                  },
                  t.requires_grad(a));
}

NodeId mean_all(Tape& t, NodeId a) {
    const Array& va = t.value(a);
    check(va.size() > 0, "mean_all: empty input");
    double s = 0.0;
    for (std::int64_t i = 0; i < va.size(); ++i) s += va[i];
    const double inv = 1.0 / static_cast<double>(va.size());
    return t.push(Array::scalar(s * inv), {a},
                  [a, inv](Tape& tp, NodeId self) {
                      const double g = tp.out_grad(self)[0] * inv;
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < ga->size(); ++i) (*ga)[i] += g;
                  },
                  t.requires_grad(a));
}

namespace {

// Decompose shape around `axis` into [outer, axis, inner] extents.
void axis_split(const Array& a, int axis, std::int64_t& outer, std::int64_t& n, std::int64_t& inner) {
    check(axis >= 0 && axis < a.rank(), "reduction: axis out of range");
    outer = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    n = a.dim(axis);
    inner = 1;
    for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
}

NodeId reduce_axis(Tape& t, NodeId a, int axis, bool mean) {
    const Array& va = t.value(a);
    std::int64_t outer, n, inner;
    axis_split(va, axis, outer, n, inner);
    check(n > 0, "reduction: empty axis");
    std::vector<int> out_shape;
    for (int i = 0; i < va.rank(); ++i)
        if (i != axis) out_shape.push_back(va.dim(i));
    if (out_shape.empty()) out_shape.push_back(1);
    Array out(out_shape);
    const double scale = mean ? 1.0 / static_cast<double>(n) : 1.0;
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t j = 0; j < n; ++j) {
            const double* src = va.data() + (o * n + j) * inner;
            double* dst = out.data() + o * inner;
            for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i] * scale;
        }
    return t.push(std::move(out), {a},
                  [a, outer, n, inner, scale](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      Array* ga = tp.grad_sink(a);
                      if (!ga) return;
                      for (std::int64_t o = 0; o < outer; ++o)
                          for (std::int64_t j = 0; j < n; ++j) {
                              double* dst = ga->data() + (o * n + j) * inner;
                              const double* src = g.data() + o * inner;
                              for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i] * scale;
                          }
                  },
                  t.requires_grad(a));
}

} // namespace

NodeId sum_axis(Tape& t, NodeId a, int axis) { return reduce_axis(t, a, axis, false); }
NodeId mean_axis(Tape& t, NodeId a, int axis) { return reduce_axis(t, a, axis, true); }

NodeId concat(Tape& t, const std::vector<NodeId>& parts, int axis) {
    check(!parts.empty(), "concat: no inputs");
    const Array& first = t.value(parts[0]);
    check(axis >= 0 && axis < first.rank(), "concat: axis out of range");
    std::vector<int> out_shape = first.shape();
    int total = 0;
    for (NodeId p : parts) {
        const Array& v = t.value(p);
        check(v.rank() == first.rank(), "concat: rank mismatch");
        for (int i = 0; i < first.rank(); ++i)
            if (i != axis)
                check(v.dim(i) == first.dim(i), "concat: non-axis dimension mismatch");
        total += v.dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = total;

    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= first.dim(i);
    for (int i = axis + 1; i < first.rank(); ++i) inner *= first.dim(i);

    Array out(out_shape);
    std::vector<std::int64_t> offsets;  // per-part row offset (in elements) within a slab
    offsets.reserve(parts.size());
    std::int64_t off = 0;
    for (NodeId p : parts) {
        offsets.push_back(off);
        const Array& v = t.value(p);
        const std::int64_t rows = static_cast<std::int64_t>(v.dim(axis)) * inner;
        for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = v.data() + o * rows;
            double* dst = out.data() + o * total * inner + off;
            for (std::int64_t i = 0; i < rows; ++i) dst[i] = src[i];
        }
        off += rows;
    }
    return t.push(std::move(out), parts,
                  [parts, offsets, outer, inner, total](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                          Array* gp = tp.grad_sink(parts[pi]);
                          if (!gp) continue;
                          const std::int64_t rows = gp->size() / (outer == 0 ? 1 : outer);
                          for (std::int64_t o = 0; o < outer; ++o) {
                              const double* src = g.data() + o * total * inner + offsets[pi];
                              double* dst = gp->data() + o * rows;
                              for (std::int64_t i = 0; i < rows; ++i) dst[i] += src[i];
                          }
                      }
                  },
                  t.any_requires_grad(parts));
}

NodeId slice(Tape& t, NodeId a, int axis, int start, int len) {
    const Array& va = t.value(a);
    check(axis >= 0 && axis < va.rank(), "slice: axis out of range");
    check(start >= 0 && len >= 0 && start + len <= va.dim(axis),
          "slice: window [" + std::to_string(start) + "," + std::to_string(start + len) +
              ") outside axis of extent " + std::to_string(va.dim(axis)));
    std::int64_t outer, n, inner;
    axis_split(va, axis, outer, n, inner);
    std::vector<int> out_shape = va.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    Array out(out_shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        const double* src = va.data() + (o * n + start) * inner;
        double* dst = out.data() + o * len * inner;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(len) * inner; ++i) dst[i] = src[i];
    }
    return t.push(std::move(out), {a},
                  [a, outer, n, inner, start, len](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      Array* ga = tp.grad_sink(a);
                      if (!ga) return;
                      for (std::int64_t o = 0; o < outer; ++o) {
                          const double* src = g.data() + o * len * inner;
                          double* dst = ga->data() + (o * n + start) * inner;
                          for (std::int64_t i = 0; i < static_cast<std::int64_t>(len) * inner; ++i)
                              dst[i] += src[i];
                      }
                  },
                  t.requires_grad(a));
}

NodeId reshape(Tape& t, NodeId a, std::vector<int> new_shape) {
    const Array& va = t.value(a);
    check(Array::count(new_shape) == va.size(), "reshape: element count mismatch");
    Array out(std::move(new_shape), va.vec());
    return t.push(std::move(out), {a},
                  [a](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      if (Array* ga = tp.grad_sink(a))
                          for (std::int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                  },
                  t.requires_grad(a));
}

NodeId channel_affine(Tape& t, NodeId x, NodeId scale, NodeId shift) {
    const Array& vx = t.value(x);
    const Array& vs = t.value(scale);
    const Array& vb = t.value(shift);
    check(vx.rank() >= 1, "channel_affine: rank 0 input");
    const int C = vx.dim(0);
    check(vs.size() == C && vb.size() == C,
          "channel_affine: scale/shift length must equal channel count " + std::to_string(C));
    const std::int64_t inner = vx.size() / C;
    Array out(vx.shape());
    for (int c = 0; c < C; ++c) {
        const double s = vs[c], b = vb[c];
        const double* src = vx.data() + c * inner;
        double* dst = out.data() + c * inner;
        for (std::int64_t i = 0; i < inner; ++i) dst[i] = src[i] * s + b;
    }
    return t.push(std::move(out), {x, scale, shift},
                  [x, scale, shift, C, inner](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      const Array& vx = tp.value(x);
                      const Array& vs = tp.value(scale);
                      if (Array* gx = tp.grad_sink(x))
                          for (int c = 0; c < C; ++c) {
                              const double s = vs[c];
                              const double* gr = g.data() + c * inner;
                              double* dst = gx->data() + c * inner;
                              for (std::int64_t i = 0; i < inner; ++i) dst[i] += gr[i] * s;
                          }
                      if (Array* gs = tp.grad_sink(scale))
                          for (int c = 0; c < C; ++c) {
                              const double* gr = g.data() + c * inner;
                              const double* src = vx.data() + c * inner;
                              double acc = 0.0;
                              for (std::int64_t i = 0; i < inner; ++i) acc += gr[i] * src[i];
                              (*gs)[c] += acc;
                          }
                      if (Array* gb = tp.grad_sink(shift))
                          for (int c = 0; c < C; ++c) {
                              const double* gr = g.data() + c * inner;
                              double acc = 0.0;
                              for (std::int64_t i = 0; i < inner; ++i) acc += gr[i];
                              (*gb)[c] += acc;
                          }
                  },
                  t.any_requires_grad({x, scale, shift}));
}

NodeId add_bias(Tape& t, NodeId x, NodeId b) {
    const Array& vx = t.value(x);
    const Array& vb = t.value(b);
    check(vx.rank() >= 1, "add_bias: rank 0 input");
    const int L = vx.dim(vx.rank() - 1);
    check(vb.size() == L, "add_bias: bias length must equal last axis extent " + std::to_string(L));
    const std::int64_t rows = vx.size() / L;
    Array out(vx.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* src = vx.data() + r * L;
        double* dst = out.data() + r * L;
        for (int j = 0; j < L; ++j) dst[j] = src[j] + vb[j];
    }
    return t.push(std::move(out), {x, b},
                  [x, b, rows, L](Tape& tp, NodeId self) {
                      const Array& g = tp.out_grad(self);
                      if (Array* gx = tp.grad_sink(x))
                          for (std::int64_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                      if (Array* gb = tp.grad_sink(b))
                          for (std::int64_t r = 0; r < rows; ++r) {
                              const double* gr = g.data() + r * L;
                              for (int j = 0; j < L; ++j) (*gb)[j] += gr[j];
                          }
                  },
                  t.any_requires_grad({x, b}));
}

} // namespace ssvaerr::diff
