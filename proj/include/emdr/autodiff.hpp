#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

// Reverse-mode automatic differentiation over dense 64-bit tensors.
// Tensors are 1-D or 2-D, row major. Graphs are built eagerly; backward()
// walks the tape in reverse topological order. Gradients on leaves
// accumulate across backward calls until explicitly reset.

namespace emdr::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  std::vector<int> shape;
  std::vector<double> v;
  std::vector<double> g;  // lazily allocated, same size as v
  std::vector<NodePtr> parents;
  std::function<void(Node&)> back;  // pushes this->g into parents
  const char* op = "leaf";
  bool stop = false;        // stop-gradient: backward treats node as constant
  bool needs_grad = false;  // some ancestor is a trainable leaf

  int rows() const { return shape.size() == 2 ? shape[0] : 1; }
  int cols() const { return shape.empty() ? 1 : shape.back(); }
  size_t size() const { return v.size(); }
  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  bool defined() const { return n_ != nullptr; }
  Node& node() const { return *n_; }
  const NodePtr& ptr() const { return n_; }
  int rows() const { return n_->rows(); }
  int cols() const { return n_->cols(); }
  size_t size() const { return n_->size(); }
  const std::vector<double>& values() const { return n_->v; }
  std::vector<double>& mutable_values() { return n_->v; }
  const std::vector<double>& grad() const { return n_->g; }
  double scalar() const;  // throws unless size() == 1

 private:
  NodePtr n_;
};

// --- construction ---------------------------------------------------------

Tensor constant(std::vector<int> shape, std::vector<double> values);
Tensor constant_scalar(double x);
// Trainable leaf: participates in gradient accumulation.
Tensor leaf(std::vector<int> shape, std::vector<double> values);

// --- primitives -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);      // same shape, or b a row vector
Tensor sub(const Tensor& a, const Tensor& b);      // same shape
Tensor mul(const Tensor& a, const Tensor& b);      // elementwise, same shape
Tensor scale(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_bt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T -> [m,n]
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor softmax_rows(const Tensor& x, double tau = 1.0);
Tensor log_softmax_rows(const Tensor& x);
Tensor logsumexp(const Tensor& x);  // over all entries -> scalar, max-shifted
Tensor vlog(const Tensor& x);
Tensor vexp(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar
Tensor dot(const Tensor& a, const Tensor& b);  // vectors -> scalar
// out[i] = x[i, ids[i]] for x [R,C] -> [R]
Tensor pick_rowwise(const Tensor& x, const std::vector<int>& ids);
Tensor stop_gradient(const Tensor& x);

// q,k: [Tq,D],[Tk,D]; v: [Tk,Dv]. Softmax over keys of q.k^T/sqrt(D),
// optionally masked so position i attends only to keys <= i.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            bool causal);

// --- backward -------------------------------------------------------------

// Populates gradients of every trainable leaf reachable from `loss`.
// Throws on non-scalar loss and on NaN/Inf (message names the op-tag).
// Calling twice without resetting leaf gradients accumulates.
void backward(const Tensor& loss);

}  // namespace emdr::ad
