#include "flowtse/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace flowtse::ag {

Var constant(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = false;
  return n;
}

Var leaf(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

namespace {

Var make(Mat v, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return n;
}

void topo(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
  if (seen.count(n) || !n->requires_grad) return;
  seen.insert(n);
  for (const auto& p : n->parents) topo(p.get(), seen, order);
  order.push_back(n);
}

}  // namespace

void backward(const Var& root) {
  if (root->value.size() != 1) throw std::logic_error("backward: root must be scalar");
  std::unordered_set<Node*> seen;
  std::vector<Node*> order;
  topo(root.get(), seen, order);
  root->grad = Mat::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  return make(a->value + b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  return make(a->value - b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(-n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  return make(a->value.cwiseProduct(b->value), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->accumulate(n.grad.cwiseProduct(n.parents[1]->value));
    if (n.parents[1]->requires_grad)
      n.parents[1]->accumulate(n.grad.cwiseProduct(n.parents[0]->value));
  });
}

Var matmul(const Var& a, const Var& b) {
  return make(a->value * b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->accumulate(n.grad * n.parents[1]->value.transpose());
    if (n.parents[1]->requires_grad)
      n.parents[1]->accumulate(n.parents[0]->value.transpose() * n.grad);
  });
}

Var transpose(const Var& a) {
  return make(a->value.transpose(), {a},
              [](Node& n) { n.parents[0]->accumulate(n.grad.transpose()); });
}

Var scale(const Var& a, double s) {
  return make(a->value * s, {a},
              [s](Node& n) { n.parents[0]->accumulate(n.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  return make(a->value.array() + s, {a},
              [](Node& n) { n.parents[0]->accumulate(n.grad); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var exp(const Var& a) {
  Mat v = a->value.array().exp();
  return make(v, {a}, [v](Node& n) { n.parents[0]->accumulate(n.grad.cwiseProduct(v)); });
}

Var log(const Var& a) {
  return make(a->value.array().log(), {a}, [](Node& n) {
    n.parents[0]->accumulate(n.grad.cwiseQuotient(n.parents[0]->value));
  });
}

Var tanh(const Var& a) {
  Mat v = a->value.array().tanh();
  return make(v, {a}, [v](Node& n) {
    n.parents[0]->accumulate(n.grad.cwiseProduct((1.0 - v.array().square()).matrix()));
  });
}

Var silu(const Var& a) {
  Mat sig = (1.0 / (1.0 + (-a->value.array()).exp())).matrix();
  Mat v = a->value.cwiseProduct(sig);
  return make(v, {a}, [sig](Node& n) {
    const Mat& x = n.parents[0]->value;
    Mat d = sig.array() * (1.0 + x.array() * (1.0 - sig.array()));
    n.parents[0]->accumulate(n.grad.cwiseProduct(d));
  });
}

Var gelu(const Var& a) {
  // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
  const double c = std::sqrt(2.0 / M_PI);
  Eigen::ArrayXXd x = a->value.array();
  Eigen::ArrayXXd inner = c * (x + 0.044715 * x.cube());
  Eigen::ArrayXXd th = inner.tanh();
  Mat v = (0.5 * x * (1.0 + th)).matrix();
  return make(v, {a}, [c, th](Node& n) {
    Eigen::ArrayXXd x = n.parents[0]->value.array();
    Eigen::ArrayXXd sech2 = 1.0 - th.square();
    Eigen::ArrayXXd d =
        0.5 * (1.0 + th) + 0.5 * x * sech2 * c * (1.0 + 3.0 * 0.044715 * x.square());
    n.parents[0]->accumulate(n.grad.cwiseProduct(d.matrix()));
  });
}

Var square(const Var& a) {
  return make(a->value.array().square(), {a}, [](Node& n) {
    n.parents[0]->accumulate(2.0 * n.grad.cwiseProduct(n.parents[0]->value));
  });
}

Var sum(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a->value.sum();
  return make(v, {a}, [](Node& n) {
    n.parents[0]->accumulate(Mat::Constant(n.parents[0]->value.rows(),
                                           n.parents[0]->value.cols(), n.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->value.size());
  Mat v(1, 1);
  v(0, 0) = a->value.sum() * inv;
  return make(v, {a}, [inv](Node& n) {
    n.parents[0]->accumulate(Mat::Constant(n.parents[0]->value.rows(),
                                           n.parents[0]->value.cols(),
                                           n.grad(0, 0) * inv));
  });
}

Var slice_rows(const Var& a, int row0, int nrows) {
  return make(a->value.middleRows(row0, nrows), {a}, [row0, nrows](Node& n) {
    Mat g = Mat::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
    g.middleRows(row0, nrows) = n.grad;
    n.parents[0]->accumulate(g);
  });
}

Var slice_cols(const Var& a, int col0, int ncols) {
  return make(a->value.middleCols(col0, ncols), {a}, [col0, ncols](Node& n) {
    Mat g = Mat::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
    g.middleCols(col0, ncols) = n.grad;
    n.parents[0]->accumulate(g);
  });
}

Var concat_rows(const Var& a, const Var& b) {
  Mat v(a->value.rows() + b->value.rows(), a->value.cols());
  v << a->value, b->value;
  return make(v, {a, b}, [](Node& n) {
    const auto ra = n.parents[0]->value.rows();
    const auto rb = n.parents[1]->value.rows();
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad.topRows(ra));
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad.bottomRows(rb));
  });
}

Var concat_cols(const Var& a, const Var& b) {
  Mat v(a->value.rows(), a->value.cols() + b->value.cols());
  v << a->value, b->value;
  return make(v, {a, b}, [](Node& n) {
    const auto ca = n.parents[0]->value.cols();
    const auto cb = n.parents[1]->value.cols();
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad.leftCols(ca));
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad.rightCols(cb));
  });
}

Var add_rowvec(const Var& a, const Var& row) {
  Mat v = a->value.rowwise() + row->value.row(0);
  return make(v, {a, row}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad.colwise().sum());
  });
}

Var broadcast_rows(const Var& row, int nrows) {
  Mat v = row->value.row(0).replicate(nrows, 1);
  return make(v, {row},
              [](Node& n) { n.parents[0]->accumulate(n.grad.colwise().sum()); });
}

Var div(const Var& a, const Var& b) {
  return make(a->value.cwiseQuotient(b->value), {a, b}, [](Node& n) {
    const Mat& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad.cwiseQuotient(bv));
    if (n.parents[1]->requires_grad) {
      Mat g = -n.grad.cwiseProduct(n.parents[0]->value).cwiseQuotient(bv.cwiseProduct(bv));
      n.parents[1]->accumulate(g);
    }
  });
}

Var sqrt(const Var& a) {
  Mat v = a->value.array().sqrt();
  return make(v, {a}, [v](Node& n) {
    n.parents[0]->accumulate((n.grad.array() * 0.5 / v.array()).matrix());
  });
}

Var mul_scalar_var(const Var& a, const Var& s) {
  if (s->value.size() != 1) throw std::logic_error("mul_scalar_var: s must be 1x1");
  return make(a->value * s->value(0, 0), {a, s}, [](Node& n) {
    const double sv = n.parents[1]->value(0, 0);
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad * sv);
    if (n.parents[1]->requires_grad) {
      Mat g(1, 1);
      g(0, 0) = n.grad.cwiseProduct(n.parents[0]->value).sum();
      n.parents[1]->accumulate(g);
    }
  });
}

}  // namespace flowtse::ag
