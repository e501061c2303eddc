#pragma once

#include <map>
#include <string>

#include "flowtse/autograd.hpp"
#include "flowtse/rng.hpp"

namespace flowtse::ag {

// Row-wise layer norm without learned affine (modulation supplies the
// affine part in adaLN blocks).
Var layer_norm_rows(const Var& x, double eps = 1e-6);

// Softmax per row over entries where allowed(r, c) != 0; denied entries
// get probability 0. Rows must have at least one allowed entry.
Var masked_softmax_rows(const Var& x, const Eigen::MatrixXd& allowed);

// Rotary position embedding applied head-wise to a T x E matrix. Pair
// (2i, 2i+1) inside each head rotates by pos * base^(-2i/head_dim).
Var rope(const Var& x, int n_heads, double base = 10000.0);

// Scores for all heads stacked vertically: rows [h*Tq, (h+1)*Tq) hold
// Q_h K_h^T / sqrt(head_dim).
Var attention_scores(const Var& q, const Var& k, int n_heads);

// probs: (H*Tq) x Tk stacked per head; v: Tk x E. Returns Tq x E.
Var attention_apply(const Var& probs, const Var& v, int n_heads);

// Depthwise 1-D convolution over time. x: T x C, w: K x C (zero padded,
// centered), bias: 1 x C.
Var conv1d_depthwise(const Var& x, const Var& w, const Var& bias);

// Inverse STFT as a differentiable linear op. re/im are T x F one-sided
// spectra (F = n_fft/2+1); returns the 1 x out_len waveform using the
// same centered-frame layout as dsp::istft.
Var istft_op(const Var& re, const Var& im, int n_fft, int hop, int out_len);

// ---- parameters ----

struct ParamStore {
  std::map<std::string, Var> params;  // ordered, canonical names

  Var add(const std::string& name, Mat init);
  Var get(const std::string& name) const;
  void zero_grads();
  size_t count() const;  // total scalar count
};

// Kaiming-ish dense init: N(0, 1/sqrt(fan_in))
Mat dense_init(int rows, int cols, Rng& rng);

struct Linear {
  Var w;  // in x out
  Var b;  // 1 x out

  static Linear create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
                       bool zero_init = false);
  Var operator()(const Var& x) const { return add_rowvec(matmul(x, w), b); }
};

// AdamW with decoupled weight decay and global-norm gradient clipping.
class AdamW {
 public:
  AdamW(ParamStore& ps, double weight_decay, double grad_clip)
      : ps_(ps), weight_decay_(weight_decay), grad_clip_(grad_clip) {}

  void step(double lr);
  int64_t t() const { return t_; }

 private:
  ParamStore& ps_;
  double weight_decay_;
  double grad_clip_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0;
  std::map<std::string, Mat> m_, v_;
};

}  // namespace flowtse::ag
