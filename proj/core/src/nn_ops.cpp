#include "flowtse/nn_ops.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "flowtse/dsp.hpp"

namespace flowtse::ag {

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

}  // namespace

Var layer_norm_rows(const Var& x, double eps) {
  const int rows = static_cast<int>(x->value.rows());
  const int cols = static_cast<int>(x->value.cols());
  Mat y(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    const double mu = x->value.row(r).mean();
    const double var = (x->value.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    y.row(r) = (x->value.row(r).array() - mu) * inv_std(r);
  }
  return make(y, {x}, [y, inv_std, cols](Node& n) {
    Mat dx(n.grad.rows(), n.grad.cols());
    for (int r = 0; r < n.grad.rows(); ++r) {
      const double gm = n.grad.row(r).mean();
      const double gym = n.grad.row(r).cwiseProduct(y.row(r)).mean();
      dx.row(r) =
          inv_std(r) * (n.grad.row(r).array() - gm - y.row(r).array() * gym);
    }
    (void)cols;
    n.parents[0]->accumulate(dx);
  });
}

Var masked_softmax_rows(const Var& x, const Eigen::MatrixXd& allowed) {
  if (x->value.rows() != allowed.rows() || x->value.cols() != allowed.cols())
    throw std::invalid_argument("masked_softmax_rows: mask shape mismatch");
  const int rows = static_cast<int>(x->value.rows());
  const int cols = static_cast<int>(x->value.cols());
  Mat p = Mat::Zero(rows, cols);
  for (int r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cols; ++c)
      if (allowed(r, c) != 0.0) mx = std::max(mx, x->value(r, c));
    if (!std::isfinite(mx))
      throw std::invalid_argument("masked_softmax_rows: fully masked row");
    double z = 0.0;
    for (int c = 0; c < cols; ++c)
      if (allowed(r, c) != 0.0) {
        p(r, c) = std::exp(x->value(r, c) - mx);
        z += p(r, c);
      }
    p.row(r) /= z;
  }
  return make(p, {x}, [p](Node& n) {
    Mat dx(n.grad.rows(), n.grad.cols());
    for (int r = 0; r < n.grad.rows(); ++r) {
      const double dot = n.grad.row(r).cwiseProduct(p.row(r)).sum();
      dx.row(r) = (p.row(r).array() * (n.grad.row(r).array() - dot)).matrix();
    }
    n.parents[0]->accumulate(dx);
  });
}

namespace {

// rotation angles for rope, cached per (rows, head_dim)
Mat rope_apply(const Mat& x, int n_heads, double base, bool inverse) {
  const int T = static_cast<int>(x.rows());
  const int E = static_cast<int>(x.cols());
  const int dh = E / n_heads;
  Mat out(T, E);
  for (int t = 0; t < T; ++t) {
    for (int h = 0; h < n_heads; ++h) {
      for (int i = 0; i < dh / 2; ++i) {
        const double theta =
            t * std::pow(base, -2.0 * i / static_cast<double>(dh)) * (inverse ? -1.0 : 1.0);
        const double c = std::cos(theta), s = std::sin(theta);
        const int c0 = h * dh + 2 * i;
        const double x0 = x(t, c0), x1 = x(t, c0 + 1);
        out(t, c0) = c * x0 - s * x1;
        out(t, c0 + 1) = s * x0 + c * x1;
      }
      if (dh % 2) out(t, h * dh + dh - 1) = x(t, h * dh + dh - 1);
    }
  }
  return out;
}

}  // namespace

Var rope(const Var& x, int n_heads, double base) {
  if (x->value.cols() % n_heads != 0)
    throw std::invalid_argument("rope: embed dim not divisible by n_heads");
  Mat v = rope_apply(x->value, n_heads, base, false);
  return make(v, {x}, [n_heads, base](Node& n) {
    // rotation is orthogonal: adjoint = inverse rotation
    n.parents[0]->accumulate(rope_apply(n.grad, n_heads, base, true));
  });
}

Var attention_scores(const Var& q, const Var& k, int n_heads) {
  const int E = static_cast<int>(q->value.cols());
  if (E % n_heads != 0 || k->value.cols() != E)
    throw std::invalid_argument("attention_scores: bad head geometry");
  const int dh = E / n_heads;
  const int Tq = static_cast<int>(q->value.rows());
  const int Tk = static_cast<int>(k->value.rows());
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat s(n_heads * Tq, Tk);
  for (int h = 0; h < n_heads; ++h)
    s.middleRows(h * Tq, Tq) =
        inv * q->value.middleCols(h * dh, dh) * k->value.middleCols(h * dh, dh).transpose();
  return make(s, {q, k}, [n_heads, dh, Tq, inv](Node& n) {
    const Mat& qv = n.parents[0]->value;
    const Mat& kv = n.parents[1]->value;
    Mat dq = Mat::Zero(qv.rows(), qv.cols());
    Mat dk = Mat::Zero(kv.rows(), kv.cols());
    for (int h = 0; h < n_heads; ++h) {
      const auto g = n.grad.middleRows(h * Tq, Tq);
      dq.middleCols(h * dh, dh) = inv * g * kv.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = inv * g.transpose() * qv.middleCols(h * dh, dh);
    }
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(dq);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(dk);
  });
}

Var attention_apply(const Var& probs, const Var& v, int n_heads) {
  const int E = static_cast<int>(v->value.cols());
  if (E % n_heads != 0 || probs->value.rows() % n_heads != 0)
    throw std::invalid_argument("attention_apply: bad head geometry");
  const int dh = E / n_heads;
  const int Tq = static_cast<int>(probs->value.rows()) / n_heads;
  Mat out(Tq, E);
  for (int h = 0; h < n_heads; ++h)
    out.middleCols(h * dh, dh) =
        probs->value.middleRows(h * Tq, Tq) * v->value.middleCols(h * dh, dh);
  return make(out, {probs, v}, [n_heads, dh, Tq](Node& n) {
    const Mat& pv = n.parents[0]->value;
    const Mat& vv = n.parents[1]->value;
    Mat dp = Mat::Zero(pv.rows(), pv.cols());
    Mat dv = Mat::Zero(vv.rows(), vv.cols());
    for (int h = 0; h < n_heads; ++h) {
      const auto g = n.grad.middleCols(h * dh, dh);
      dp.middleRows(h * Tq, Tq) = g * vv.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = pv.middleRows(h * Tq, Tq).transpose() * g;
    }
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(dp);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(dv);
  });
}

Var conv1d_depthwise(const Var& x, const Var& w, const Var& bias) {
  const int T = static_cast<int>(x->value.rows());
  const int C = static_cast<int>(x->value.cols());
  const int K = static_cast<int>(w->value.rows());
  if (w->value.cols() != C || bias->value.cols() != C)
    throw std::invalid_argument("conv1d_depthwise: channel mismatch");
  const int c0 = K / 2;
  Mat y(T, C);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < C; ++c) {
      double acc = bias->value(0, c);
      for (int k = 0; k < K; ++k) {
        const int s = t + k - c0;
        if (s >= 0 && s < T) acc += w->value(k, c) * x->value(s, c);
      }
      y(t, c) = acc;
    }
  return make(y, {x, w, bias}, [T, C, K, c0](Node& n) {
    const Mat& xv = n.parents[0]->value;
    const Mat& wv = n.parents[1]->value;
    Mat dx = Mat::Zero(T, C);
    Mat dw = Mat::Zero(K, C);
    Mat db = n.grad.colwise().sum();
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < C; ++c) {
        const double g = n.grad(t, c);
        for (int k = 0; k < K; ++k) {
          const int s = t + k - c0;
          if (s >= 0 && s < T) {
            dx(s, c) += wv(k, c) * g;
            dw(k, c) += xv(s, c) * g;
          }
        }
      }
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(dx);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(dw);
    if (n.parents[2]->requires_grad) n.parents[2]->accumulate(db);
  });
}

namespace {

struct IstftGeom {
  int n_fft, hop, out_len, n_frames, n_bins;
  long long pad, acc_len;
  std::vector<double> win, wsum;
};

IstftGeom istft_geometry(int n_fft, int hop, int out_len, int n_frames) {
  IstftGeom g;
  g.n_fft = n_fft;
  g.hop = hop;
  g.out_len = out_len;
  g.n_frames = n_frames;
  g.n_bins = n_fft / 2 + 1;
  g.pad = n_fft / 2;
  g.acc_len = static_cast<long long>(n_frames - 1) * hop + n_fft;
  g.win = hann_window_periodic(n_fft);
  g.wsum.assign(g.acc_len, 0.0);
  for (int t = 0; t < n_frames; ++t) {
    const long long base = static_cast<long long>(t) * hop;
    for (int k = 0; k < n_fft; ++k) g.wsum[base + k] += g.win[k] * g.win[k];
  }
  return g;
}

}  // namespace

Var istft_op(const Var& re, const Var& im, int n_fft, int hop, int out_len) {
  const int T = static_cast<int>(re->value.rows());
  const int F = static_cast<int>(re->value.cols());
  if (F != n_fft / 2 + 1 || im->value.rows() != T || im->value.cols() != F)
    throw std::invalid_argument("istft_op: spectrum shape inconsistent with n_fft");
  auto geom = std::make_shared<IstftGeom>(istft_geometry(n_fft, hop, out_len, T));

  std::vector<double> acc(geom->acc_len, 0.0);
  std::vector<std::complex<double>> spec(F);
  std::vector<double> frame(n_fft);
  for (int t = 0; t < T; ++t) {
    for (int f = 0; f < F; ++f) spec[f] = {re->value(t, f), im->value(t, f)};
    irfft(spec.data(), frame.data(), n_fft);
    const long long base = static_cast<long long>(t) * hop;
    for (int k = 0; k < n_fft; ++k) acc[base + k] += geom->win[k] * frame[k] / n_fft;
  }
  Mat out(1, out_len);
  for (int i = 0; i < out_len; ++i) {
    const long long j = i + geom->pad;
    out(0, i) = (j < geom->acc_len && geom->wsum[j] > 1e-12) ? acc[j] / geom->wsum[j] : 0.0;
  }

  return make(out, {re, im}, [geom, T, F](Node& n) {
    // adjoint of the linear synthesis chain
    std::vector<double> g2(geom->acc_len, 0.0);
    for (int i = 0; i < geom->out_len; ++i) {
      const long long j = i + geom->pad;
      if (j < geom->acc_len && geom->wsum[j] > 1e-12) g2[j] = n.grad(0, i) / geom->wsum[j];
    }
    Mat dre = Mat::Zero(T, F);
    Mat dim = Mat::Zero(T, F);
    std::vector<double> fg(geom->n_fft);
    std::vector<std::complex<double>> spec(F);
    for (int t = 0; t < T; ++t) {
      const long long base = static_cast<long long>(t) * geom->hop;
      for (int k = 0; k < geom->n_fft; ++k)
        fg[k] = geom->win[k] * g2[base + k] / geom->n_fft;
      rfft(fg.data(), spec.data(), geom->n_fft);
      for (int f = 0; f < F; ++f) {
        const double c = (f == 0 || f == geom->n_fft / 2) ? 1.0 : 2.0;
        dre(t, f) = c * spec[f].real();
        // imaginary parts of DC and Nyquist never reach the output
        dim(t, f) = (c == 1.0) ? 0.0 : c * spec[f].imag();
      }
    }
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(dre);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(dim);
  });
}

Var ParamStore::add(const std::string& name, Mat init) {
  if (params.count(name)) throw std::logic_error("ParamStore: duplicate param " + name);
  Var v = leaf(std::move(init));
  params[name] = v;
  return v;
}

Var ParamStore::get(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw std::logic_error("ParamStore: unknown param " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [_, p] : params) p->grad.resize(0, 0);
}

size_t ParamStore::count() const {
  size_t n = 0;
  for (const auto& [_, p] : params) n += p->value.size();
  return n;
}

Mat dense_init(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  const double s = 1.0 / std::sqrt(static_cast<double>(rows));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = s * rng.normal();
  return m;
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
                      bool zero_init) {
  Linear l;
  l.w = ps.add(name + ".w", zero_init ? Mat::Zero(in, out) : dense_init(in, out, rng));
  l.b = ps.add(name + ".b", Mat::Zero(1, out));
  return l;
}

void AdamW::step(double lr) {
  // global-norm clip
  double norm_sq = 0.0;
  for (auto& [_, p] : ps_.params)
    if (p->grad.size() != 0) norm_sq += p->grad.squaredNorm();
  const double norm = std::sqrt(norm_sq);
  const double clip_scale = (grad_clip_ > 0.0 && norm > grad_clip_) ? grad_clip_ / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : ps_.params) {
    Mat g = (p->grad.size() != 0) ? Mat(p->grad * clip_scale)
                                  : Mat(Mat::Zero(p->value.rows(), p->value.cols()));
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() == 0) {
      m = Mat::Zero(g.rows(), g.cols());
      v = Mat::Zero(g.rows(), g.cols());
    }
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    Mat m_hat = m / bc1;
    Mat v_hat = v / bc2;
    // decoupled weight decay
    p->value -= lr * weight_decay_ * p->value;
    p->value -= lr * (m_hat.array() / (v_hat.array().sqrt() + eps_)).matrix();
  }
}

}  // namespace flowtse::ag
