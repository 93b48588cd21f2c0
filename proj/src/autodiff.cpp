#include "emdr/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "emdr/kernels.hpp"

namespace emdr::ad {

namespace {

size_t numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

NodePtr make(std::vector<int> shape, const char* op,
             std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->v.assign(numel(shape), 0.0);
  n->shape = std::move(shape);
  n->op = op;
  for (const auto& p : parents)
    if (p->needs_grad) n->needs_grad = true;
  n->parents = std::move(parents);
  return n;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

double Tensor::scalar() const {
  require(n_ && n_->size() == 1, "scalar(): tensor is not a scalar");
  return n_->v[0];
}

Tensor constant(std::vector<int> shape, std::vector<double> values) {
  require(numel(shape) == values.size(), "constant: shape/value size mismatch");
  auto n = make(std::move(shape), "const", {});
  n->v = std::move(values);
  return Tensor(n);
}

Tensor constant_scalar(double x) { return constant({1}, {x}); }

Tensor leaf(std::vector<int> shape, std::vector<double> values) {
  require(numel(shape) == values.size(), "leaf: shape/value size mismatch");
  auto n = make(std::move(shape), "leaf", {});
  n->v = std::move(values);
  n->needs_grad = true;
  return Tensor(n);
}

Tensor add(const Tensor& a, const Tensor& b) {
  const size_t na = a.size(), nb = b.size();
  if (na == nb) {
    require(a.cols() == b.cols(), "add: shape mismatch");
    auto n = make(a.node().shape, "add", {a.ptr(), b.ptr()});
    for (size_t i = 0; i < na; ++i) n->v[i] = a.values()[i] + b.values()[i];
    n->back = [](Node& self) {
      for (int side = 0; side < 2; ++side) {
        Node& p = *self.parents[side];
        if (!p.needs_grad || p.stop) continue;
        p.ensure_grad();
        for (size_t i = 0; i < self.size(); ++i) p.g[i] += self.g[i];
      }
    };
    return Tensor(n);
  }
  // row-vector broadcast: b is [C], added to every row of a [R,C]
  require(b.rows() == 1 && b.cols() == a.cols(),
          "add: incompatible shapes for broadcast");
  const int R = a.rows(), C = a.cols();
  auto n = make(a.node().shape, "add_rowvec", {a.ptr(), b.ptr()});
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      n->v[r * C + c] = a.values()[r * C + c] + b.values()[c];
  n->back = [R, C](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.needs_grad && !pa.stop) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) pa.g[i] += self.g[i];
    }
    if (pb.needs_grad && !pb.stop) {
      pb.ensure_grad();
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) pb.g[c] += self.g[r * C + c];
    }
  };
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size() && a.cols() == b.cols(), "sub: shape mismatch");
  auto n = make(a.node().shape, "sub", {a.ptr(), b.ptr()});
  for (size_t i = 0; i < a.size(); ++i)
    n->v[i] = a.values()[i] - b.values()[i];
  n->back = [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.needs_grad && !pa.stop) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) pa.g[i] += self.g[i];
    }
    if (pb.needs_grad && !pb.stop) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) pb.g[i] -= self.g[i];
    }
  };
  return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size() && a.cols() == b.cols(), "mul: shape mismatch");
  auto n = make(a.node().shape, "mul", {a.ptr(), b.ptr()});
  for (size_t i = 0; i < a.size(); ++i)
    n->v[i] = a.values()[i] * b.values()[i];
  n->back = [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.needs_grad && !pa.stop) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i)
        pa.g[i] += self.g[i] * pb.v[i];
    }
    if (pb.needs_grad && !pb.stop) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i)
        pb.g[i] += self.g[i] * pa.v[i];
    }
  };
  return Tensor(n);
}

Tensor scale(const Tensor& a, double s) {
  auto n = make(a.node().shape, "scale", {a.ptr()});
  for (size_t i = 0; i < a.size(); ++i) n->v[i] = a.values()[i] * s;
  n->back = [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i) p.g[i] += self.g[i] * s;
  };
  return Tensor(n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), k = a.cols(), k2 = b.rows(), nn = b.cols();
  require(k == k2, "matmul: inner dimension mismatch");
  auto n = make({m, nn}, "matmul", {a.ptr(), b.ptr()});
  kernels::gemm(a.values().data(), b.values().data(), n->v.data(), m, k, nn);
  n->back = [m, k, nn](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.needs_grad && !pa.stop) {
      pa.ensure_grad();
      kernels::gemm_bt(self.g.data(), pb.v.data(), pa.g.data(), m, nn, k);
    }
    if (pb.needs_grad && !pb.stop) {
      pb.ensure_grad();
      kernels::gemm_at(pa.v.data(), self.g.data(), pb.g.data(), k, m, nn);
    }
  };
  return Tensor(n);
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), k = a.cols(), nn = b.rows();
  require(k == b.cols(), "matmul_bt: inner dimension mismatch");
  auto n = make({m, nn}, "matmul_bt", {a.ptr(), b.ptr()});
  kernels::gemm_bt(a.values().data(), b.values().data(), n->v.data(), m, k, nn);
  n->back = [m, k, nn](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.needs_grad && !pa.stop) {
      pa.ensure_grad();
      kernels::gemm(self.g.data(), pb.v.data(), pa.g.data(), m, nn, k);
    }
    if (pb.needs_grad && !pb.stop) {
      pb.ensure_grad();
      kernels::gemm_at(self.g.data(), pa.v.data(), pb.g.data(), nn, m, k);
    }
  };
  return Tensor(n);
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  const int V = table.rows(), C = table.cols();
  for (int id : ids)
    require(id >= 0 && id < V, "gather_rows: id out of range");
  auto n = make({static_cast<int>(ids.size()), C}, "gather_rows",
                {table.ptr()});
  for (size_t t = 0; t < ids.size(); ++t)
    std::memcpy(&n->v[t * C], &table.values()[static_cast<size_t>(ids[t]) * C],
                C * sizeof(double));
  n->back = [ids, C](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (size_t t = 0; t < ids.size(); ++t) {
      double* dst = &p.g[static_cast<size_t>(ids[t]) * C];
      const double* src = &self.g[t * C];
      for (int c = 0; c < C; ++c) dst[c] += src[c];
    }
  };
  return Tensor(n);
}

Tensor softmax_rows(const Tensor& x, double tau) {
  require(tau > 0.0, "softmax_rows: temperature must be positive");
  const int R = x.rows(), C = x.cols();
  auto n = make(x.node().shape, "softmax", {x.ptr()});
  for (int r = 0; r < R; ++r) {
    const double* xr = &x.values()[static_cast<size_t>(r) * C];
    double* yr = &n->v[static_cast<size_t>(r) * C];
    double mx = xr[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    double z = 0.0;
    for (int c = 0; c < C; ++c) {
      yr[c] = std::exp((xr[c] - mx) / tau);
      z += yr[c];
    }
    for (int c = 0; c < C; ++c) yr[c] /= z;
  }
  n->back = [R, C, tau](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (int r = 0; r < R; ++r) {
      const double* y = &self.v[static_cast<size_t>(r) * C];
      const double* gy = &self.g[static_cast<size_t>(r) * C];
      double s = 0.0;
      for (int c = 0; c < C; ++c) s += gy[c] * y[c];
      double* gx = &p.g[static_cast<size_t>(r) * C];
      for (int c = 0; c < C; ++c) gx[c] += y[c] * (gy[c] - s) / tau;
    }
  };
  return Tensor(n);
}

Tensor log_softmax_rows(const Tensor& x) {
  const int R = x.rows(), C = x.cols();
  auto n = make(x.node().shape, "log_softmax", {x.ptr()});
  for (int r = 0; r < R; ++r) {
    const double* xr = &x.values()[static_cast<size_t>(r) * C];
    double* yr = &n->v[static_cast<size_t>(r) * C];
    double mx = xr[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(xr[c] - mx);
    const double lse = mx + std::log(z);
    for (int c = 0; c < C; ++c) yr[c] = xr[c] - lse;
  }
  n->back = [R, C](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (int r = 0; r < R; ++r) {
      const double* y = &self.v[static_cast<size_t>(r) * C];
      const double* gy = &self.g[static_cast<size_t>(r) * C];
      double s = 0.0;
      for (int c = 0; c < C; ++c) s += gy[c];
      double* gx = &p.g[static_cast<size_t>(r) * C];
      for (int c = 0; c < C; ++c) gx[c] += gy[c] - std::exp(y[c]) * s;
    }
  };
  return Tensor(n);
}

Tensor logsumexp(const Tensor& x) {
  auto n = make({1}, "logsumexp", {x.ptr()});
  double mx = x.values()[0];
  for (double v : x.values()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : x.values()) z += std::exp(v - mx);
  n->v[0] = mx + std::log(z);
  n->back = [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    const double out = self.v[0], g = self.g[0];
    for (size_t i = 0; i < p.v.size(); ++i)
      p.g[i] += g * std::exp(p.v[i] - out);
  };
  return Tensor(n);
}

Tensor vlog(const Tensor& x) {
  auto n = make(x.node().shape, "log", {x.ptr()});
  for (size_t i = 0; i < x.size(); ++i) n->v[i] = std::log(x.values()[i]);
  n->back = [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i) p.g[i] += self.g[i] / p.v[i];
  };
  return Tensor(n);
}

Tensor vexp(const Tensor& x) {
  auto n = make(x.node().shape, "exp", {x.ptr()});
  for (size_t i = 0; i < x.size(); ++i) n->v[i] = std::exp(x.values()[i]);
  n->back = [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i)
      p.g[i] += self.g[i] * self.v[i];
  };
  return Tensor(n);
}

Tensor relu(const Tensor& x) {
  auto n = make(x.node().shape, "relu", {x.ptr()});
  for (size_t i = 0; i < x.size(); ++i)
    n->v[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
  n->back = [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i)
      if (p.v[i] > 0.0) p.g[i] += self.g[i];
  };
  return Tensor(n);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const int R = x.rows(), C = x.cols();
  require(gain.size() == static_cast<size_t>(C) &&
              bias.size() == static_cast<size_t>(C),
          "layer_norm: gain/bias width mismatch");
  auto n = make(x.node().shape, "layer_norm",
                {x.ptr(), gain.ptr(), bias.ptr()});
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv = std::make_shared<std::vector<double>>(R);
  for (int r = 0; r < R; ++r) {
    const double* xr = &x.values()[static_cast<size_t>(r) * C];
    double mu = 0.0;
    for (int c = 0; c < C; ++c) mu += xr[c];
    mu /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= C;
    const double iv = 1.0 / std::sqrt(var + eps);
    (*inv)[r] = iv;
    double* xh = &(*xhat)[static_cast<size_t>(r) * C];
    double* yr = &n->v[static_cast<size_t>(r) * C];
    for (int c = 0; c < C; ++c) {
      xh[c] = (xr[c] - mu) * iv;
      yr[c] = gain.values()[c] * xh[c] + bias.values()[c];
    }
  }
  n->back = [R, C, xhat, inv](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    if (pg.needs_grad && !pg.stop) {
      pg.ensure_grad();
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
          pg.g[c] += self.g[r * C + c] * (*xhat)[r * C + c];
    }
    if (pb.needs_grad && !pb.stop) {
      pb.ensure_grad();
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) pb.g[c] += self.g[r * C + c];
    }
    if (px.needs_grad && !px.stop) {
      px.ensure_grad();
      for (int r = 0; r < R; ++r) {
        const double* gy = &self.g[static_cast<size_t>(r) * C];
        const double* xh = &(*xhat)[static_cast<size_t>(r) * C];
        double m1 = 0.0, m2 = 0.0;  // mean(dxh), mean(dxh * xhat)
        for (int c = 0; c < C; ++c) {
          const double dxh = gy[c] * pg.v[c];
          m1 += dxh;
          m2 += dxh * xh[c];
        }
        m1 /= C;
        m2 /= C;
        double* gx = &px.g[static_cast<size_t>(r) * C];
        const double iv = (*inv)[r];
        for (int c = 0; c < C; ++c) {
          const double dxh = gy[c] * pg.v[c];
          gx[c] += iv * (dxh - m1 - xh[c] * m2);
        }
      }
    }
  };
  return Tensor(n);
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  require(!xs.empty(), "concat_rows: empty input");
  const int C = xs[0].cols();
  int R = 0;
  std::vector<NodePtr> parents;
  for (const auto& x : xs) {
    require(x.cols() == C, "concat_rows: column mismatch");
    R += x.rows();
    parents.push_back(x.ptr());
  }
  auto n = make({R, C}, "concat_rows", std::move(parents));
  size_t off = 0;
  for (const auto& x : xs) {
    std::memcpy(&n->v[off], x.values().data(), x.size() * sizeof(double));
    off += x.size();
  }
  n->back = [](Node& self) {
    size_t off = 0;
    for (auto& pp : self.parents) {
      Node& p = *pp;
      if (p.needs_grad && !p.stop) {
        p.ensure_grad();
        for (size_t i = 0; i < p.size(); ++i) p.g[i] += self.g[off + i];
      }
      off += p.size();
    }
  };
  return Tensor(n);
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  require(!xs.empty(), "concat_cols: empty input");
  const int R = xs[0].rows();
  int C = 0;
  std::vector<NodePtr> parents;
  for (const auto& x : xs) {
    require(x.rows() == R, "concat_cols: row mismatch");
    C += x.cols();
    parents.push_back(x.ptr());
  }
  auto n = make({R, C}, "concat_cols", std::move(parents));
  int c0 = 0;
  for (const auto& x : xs) {
    const int xc = x.cols();
    for (int r = 0; r < R; ++r)
      std::memcpy(&n->v[static_cast<size_t>(r) * C + c0],
                  &x.values()[static_cast<size_t>(r) * xc],
                  xc * sizeof(double));
    c0 += xc;
  }
  n->back = [R, C](Node& self) {
    int c0 = 0;
    for (auto& pp : self.parents) {
      Node& p = *pp;
      const int xc = p.cols();
      if (p.needs_grad && !p.stop) {
        p.ensure_grad();
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < xc; ++c)
            p.g[static_cast<size_t>(r) * xc + c] +=
                self.g[static_cast<size_t>(r) * C + c0 + c];
      }
      c0 += xc;
    }
  };
  return Tensor(n);
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
  const int R = x.rows(), C = x.cols();
  require(0 <= r0 && r0 < r1 && r1 <= R, "slice_rows: bad range");
  auto n = make({r1 - r0, C}, "slice_rows", {x.ptr()});
  std::memcpy(n->v.data(), &x.values()[static_cast<size_t>(r0) * C],
              n->v.size() * sizeof(double));
  n->back = [r0, C](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i)
      p.g[static_cast<size_t>(r0) * C + i] += self.g[i];
  };
  return Tensor(n);
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  const int R = x.rows(), C = x.cols();
  require(0 <= c0 && c0 < c1 && c1 <= C, "slice_cols: bad range");
  const int W = c1 - c0;
  auto n = make({R, W}, "slice_cols", {x.ptr()});
  for (int r = 0; r < R; ++r)
    std::memcpy(&n->v[static_cast<size_t>(r) * W],
                &x.values()[static_cast<size_t>(r) * C + c0],
                W * sizeof(double));
  n->back = [c0, C, W](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    const int R = self.rows();
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < W; ++c)
        p.g[static_cast<size_t>(r) * C + c0 + c] +=
            self.g[static_cast<size_t>(r) * W + c];
  };
  return Tensor(n);
}

Tensor sum(const Tensor& x) {
  auto n = make({1}, "sum", {x.ptr()});
  double s = 0.0;
  for (double v : x.values()) s += v;
  n->v[0] = s;
  n->back = [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (size_t i = 0; i < p.size(); ++i) p.g[i] += self.g[0];
  };
  return Tensor(n);
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "dot: width mismatch");
  auto n = make({1}, "dot", {a.ptr(), b.ptr()});
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  n->v[0] = s;
  n->back = [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double g = self.g[0];
    if (pa.needs_grad && !pa.stop) {
      pa.ensure_grad();
      for (size_t i = 0; i < pa.size(); ++i) pa.g[i] += g * pb.v[i];
    }
    if (pb.needs_grad && !pb.stop) {
      pb.ensure_grad();
      for (size_t i = 0; i < pb.size(); ++i) pb.g[i] += g * pa.v[i];
    }
  };
  return Tensor(n);
}

Tensor pick_rowwise(const Tensor& x, const std::vector<int>& ids) {
  const int R = x.rows(), C = x.cols();
  require(static_cast<int>(ids.size()) == R, "pick_rowwise: id count");
  for (int id : ids) require(id >= 0 && id < C, "pick_rowwise: id range");
  auto n = make({R}, "pick_rowwise", {x.ptr()});
  for (int r = 0; r < R; ++r)
    n->v[r] = x.values()[static_cast<size_t>(r) * C + ids[r]];
  n->back = [ids, C](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad || p.stop) return;
    p.ensure_grad();
    for (size_t r = 0; r < ids.size(); ++r)
      p.g[r * C + ids[r]] += self.g[r];
  };
  return Tensor(n);
}

Tensor stop_gradient(const Tensor& x) {
  auto n = make(x.node().shape, "stop_gradient", {x.ptr()});
  n->v = x.values();
  n->stop = true;
  n->needs_grad = false;
  return Tensor(n);
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            bool causal) {
  require(q.cols() == k.cols(), "attention: q/k width mismatch");
  require(k.rows() == v.rows(), "attention: k/v length mismatch");
  Tensor scores = scale(matmul_bt(q, k), 1.0 / std::sqrt(q.cols()));
  if (causal) {
    const int Tq = q.rows(), Tk = k.rows();
    std::vector<double> mask(static_cast<size_t>(Tq) * Tk, 0.0);
    for (int i = 0; i < Tq; ++i)
      for (int j = i + 1; j < Tk; ++j) mask[static_cast<size_t>(i) * Tk + j] = -1e30;
    scores = add(scores, constant({Tq, Tk}, std::move(mask)));
  }
  return matmul(softmax_rows(scores), v);
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1, "backward: loss must be scalar");
  if (!std::isfinite(loss.scalar()))
    throw std::runtime_error(std::string("backward: non-finite loss at op ") +
                             loss.node().op);
  if (!loss.node().needs_grad) return;  // nothing trainable reachable

  // iterative post-order topological sort over the needs_grad subgraph
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{&loss.node(), 0}};
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // fresh gradients on interior nodes; leaves accumulate across calls
  for (Node* n : order)
    if (n->back) n->g.assign(n->v.size(), 0.0);
  loss.node().ensure_grad();
  loss.node().g[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->g.empty()) continue;
    for (double g : n->g)
      if (!std::isfinite(g))
        throw std::runtime_error(
            std::string("backward: non-finite gradient at op ") + n->op);
    if (n->back && !n->stop) n->back(*n);
  }
}

}  // namespace emdr::ad
