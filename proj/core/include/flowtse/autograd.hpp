#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace flowtse::ag {

using Mat = Eigen::MatrixXd;

// Dynamic reverse-mode autodiff over dense double matrices. A forward
// pass builds the graph; backward() seeds a scalar root and walks it in
// reverse topological order. Everything runs in 64-bit so analytic
// gradients can be checked against central finite differences tightly.
struct Node {
  Mat value;
  Mat grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // reads this->grad, accumulates into parents
  std::function<void(Node&)> backward_fn;

  void accumulate(const Mat& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

using Var = std::shared_ptr<Node>;

Var constant(Mat v);
Var leaf(Mat v);  // trainable: requires_grad = true

inline const Mat& val(const Var& v) { return v->value; }

// Seeds root (must be 1x1) with grad 1 and backpropagates.
void backward(const Var& root);

// ---- elementwise / linear algebra ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);  // natural log, caller guarantees positivity
Var tanh(const Var& a);
Var silu(const Var& a);
Var gelu(const Var& a);  // tanh approximation
Var square(const Var& a);

// ---- reductions / shape ----
Var sum(const Var& a);   // 1x1
Var mean(const Var& a);  // 1x1
Var slice_rows(const Var& a, int row0, int nrows);
Var slice_cols(const Var& a, int col0, int ncols);
Var concat_rows(const Var& a, const Var& b);
Var concat_cols(const Var& a, const Var& b);
// adds a 1xN row vector to every row of an MxN matrix
Var add_rowvec(const Var& a, const Var& row);
// broadcast a 1xN row vector to M rows
Var broadcast_rows(const Var& row, int nrows);

// ---- scalar (1x1) arithmetic ----
Var div(const Var& a, const Var& b);  // elementwise; used mostly on 1x1
Var sqrt(const Var& a);
Var mul_scalar_var(const Var& a, const Var& s);  // matrix a times 1x1 scalar s

}  // namespace flowtse::ag
