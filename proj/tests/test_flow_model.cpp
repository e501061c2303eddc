#include <cmath>

#include "doctest.h"
#include "flowtse/flow_model.hpp"
#include "flowtse/rng.hpp"

using namespace flowtse;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.embed_dim = 32;
  cfg.ff_dim = 64;
  cfg.mel_dim = 8;
  return cfg;
}

FeatureConfig tiny_features() {
  FeatureConfig f;
  f.n_mels = 8;
  return f;
}

MelSpectrogram random_mel(int t, int d, uint64_t seed) {
  Rng rng(seed);
  MelSpectrogram m;
  m.n_mels = d;
  m.frames.resize(t, d);
  for (int r = 0; r < t; ++r)
    for (int c = 0; c < d; ++c) m.frames(r, c) = -6.0 + 2.0 * rng.normal();
  return m;
}

Eigen::MatrixXd randn_mat(int r, int c, uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("attention mask: worked example and counts") {
  // t_e = 2, t_m = 3: enrollment queries see only enrollment keys
  Eigen::MatrixXd m = build_attention_mask(2, 3);
  REQUIRE(m.rows() == 5);
  REQUIRE(m.cols() == 5);
  Eigen::MatrixXd expect(5, 5);
  expect << 1, 1, 0, 0, 0,
            1, 1, 0, 0, 0,
            1, 1, 1, 1, 1,
            1, 1, 1, 1, 1,
            1, 1, 1, 1, 1;
  CHECK((m - expect).cwiseAbs().maxCoeff() == 0.0);
  // allowed count = t_e*t_e + t_m*(t_e+t_m)
  Eigen::MatrixXd big = build_attention_mask(7, 11);
  CHECK(big.sum() == doctest::Approx(7 * 7 + 11 * 18));
}

TEST_CASE("model config validation") {
  ModelConfig bad = tiny_config();
  bad.n_heads = 3;  // 32 % 3 != 0
  CHECK_THROWS(bad.validate());
  ModelConfig full = ModelConfig::full_scale();
  CHECK(full.n_layers == 22);
  CHECK(full.n_heads == 16);
  CHECK(full.embed_dim == 1024);
  CHECK(full.ff_dim == 2048);
  full.validate();
}

TEST_CASE("time embedding: range check, determinism, continuity") {
  FlowModel model(tiny_config(), tiny_features(), 7);
  CHECK_THROWS(model.time_embedding(-0.01));
  CHECK_THROWS(model.time_embedding(1.01));
  auto a = model.time_embedding(0.5);
  auto b = model.time_embedding(0.5);
  REQUIRE(a->value.rows() == 1);
  REQUIRE(a->value.cols() == 32);
  CHECK((a->value - b->value).cwiseAbs().maxCoeff() == 0.0);
  // distinct times give distinct embeddings; nearby times stay close
  auto c = model.time_embedding(0.6);
  auto d = model.time_embedding(0.5001);
  CHECK((a->value - c->value).cwiseAbs().maxCoeff() > 1e-4);
  CHECK((a->value - d->value).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("velocity output has the state's shape and is finite") {
  FlowModel model(tiny_config(), tiny_features(), 3);
  ConditioningInput cond{random_mel(4, 8, 1), random_mel(6, 8, 2), false};
  FlowState st{randn_mat(10, 8, 3), 0.3};
  Eigen::MatrixXd v = model.velocity(st, cond);
  CHECK(v.rows() == 10);
  CHECK(v.cols() == 8);
  CHECK(v.allFinite());
}

TEST_CASE("zero-initialized output path gives near-zero velocity at init") {
  // adaLN-zero: gates and out projection start at zero, so the untrained
  // field is exactly zero regardless of input
  FlowModel model(tiny_config(), tiny_features(), 11);
  ConditioningInput cond{random_mel(3, 8, 4), random_mel(5, 8, 5), false};
  FlowState st{randn_mat(8, 8, 6), 0.7};
  Eigen::MatrixXd v = model.velocity(st, cond);
  CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mask causality: mixed perturbations never reach enrollment outputs") {
  // randomize the parameters first so the velocity is nontrivial
  for (uint64_t draw = 0; draw < 20; ++draw) {
    FlowModel model(tiny_config(), tiny_features(), 100 + draw);
    Rng prng(500 + draw);
    for (auto& [name, p] : model.params().params)
      for (int i = 0; i < p->value.rows(); ++i)
        for (int j = 0; j < p->value.cols(); ++j) p->value(i, j) += 0.05 * prng.normal();

    const int t_e = 3, t_m = 4, d = 8;
    ConditioningInput cond{random_mel(t_e, d, draw), random_mel(t_m, d, draw + 50), false};
    FlowState st{randn_mat(t_e + t_m, d, draw + 90), 0.4};

    Eigen::MatrixXd base = model.velocity(st, cond);

    // perturb mixed-region state rows and mixed-region conditioning
    FlowState st2 = st;
    st2.values.bottomRows(t_m) += randn_mat(t_m, d, draw + 200);
    ConditioningInput cond2 = cond;
    cond2.mixed_mel.frames += randn_mat(t_m, d, draw + 300);
    Eigen::MatrixXd pert = model.velocity(st2, cond2);

    // enrollment rows bit-identical; mixed rows must change
    for (int r = 0; r < t_e; ++r)
      for (int c = 0; c < d; ++c) CHECK(pert(r, c) == base(r, c));
    CHECK((pert.bottomRows(t_m) - base.bottomRows(t_m)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("enrollment perturbations do reach mixed outputs") {
  FlowModel model(tiny_config(), tiny_features(), 42);
  Rng prng(43);
  for (auto& [name, p] : model.params().params)
    for (int i = 0; i < p->value.rows(); ++i)
      for (int j = 0; j < p->value.cols(); ++j) p->value(i, j) += 0.05 * prng.normal();
  const int t_e = 3, t_m = 4, d = 8;
  ConditioningInput cond{random_mel(t_e, d, 1), random_mel(t_m, d, 2), false};
  FlowState st{randn_mat(t_e + t_m, d, 3), 0.4};
  Eigen::MatrixXd base = model.velocity(st, cond);
  ConditioningInput cond2 = cond;
  cond2.enrollment_mel.frames += randn_mat(t_e, d, 4);
  Eigen::MatrixXd pert = model.velocity(st, cond2);
  CHECK((pert.bottomRows(t_m) - base.bottomRows(t_m)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("condition dropout switches to the learned null embedding") {
  FlowModel model(tiny_config(), tiny_features(), 9);
  Rng prng(10);
  for (auto& [name, p] : model.params().params)
    for (int i = 0; i < p->value.rows(); ++i)
      for (int j = 0; j < p->value.cols(); ++j) p->value(i, j) += 0.05 * prng.normal();
  const int t_e = 2, t_m = 3, d = 8;
  FlowState st{randn_mat(t_e + t_m, d, 5), 0.25};
  ConditioningInput ca{random_mel(t_e, d, 6), random_mel(t_m, d, 7), true};
  ConditioningInput cb{random_mel(t_e, d, 16), random_mel(t_m, d, 17), true};
  // dropped: the conditioning content must not matter
  Eigen::MatrixXd va = model.velocity(st, ca);
  Eigen::MatrixXd vb = model.velocity(st, cb);
  CHECK((va - vb).cwiseAbs().maxCoeff() == 0.0);
  // not dropped: it must matter
  ca.dropped = cb.dropped = false;
  Eigen::MatrixXd wa = model.velocity(st, ca);
  Eigen::MatrixXd wb = model.velocity(st, cb);
  CHECK((wa - wb).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("mel normalization round-trips") {
  FlowModel model(tiny_config(), tiny_features(), 1);
  Eigen::MatrixXd mel = randn_mat(5, 8, 2).array() * 3.0 - 6.0;
  Eigen::MatrixXd back = model.denormalize_mel(model.normalize_mel(mel));
  CHECK((back - mel).cwiseAbs().maxCoeff() < 1e-12);
  // defaults: z = (mel + 6) / 4
  Eigen::MatrixXd z = model.normalize_mel(mel);
  CHECK(z(0, 0) == doctest::Approx((mel(0, 0) + 6.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("forward is deterministic for fixed parameters") {
  FlowModel model(tiny_config(), tiny_features(), 77);
  ConditioningInput cond{random_mel(3, 8, 1), random_mel(4, 8, 2), false};
  FlowState st{randn_mat(7, 8, 3), 0.9};
  Eigen::MatrixXd a = model.velocity(st, cond);
  Eigen::MatrixXd b = model.velocity(st, cond);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("distinct init seeds give distinct parameters") {
  FlowModel a(tiny_config(), tiny_features(), 1);
  FlowModel b(tiny_config(), tiny_features(), 2);
  const auto& wa = a.params().get("block0.attn.wq.w")->value;
  const auto& wb = b.params().get("block0.attn.wq.w")->value;
  CHECK((wa - wb).cwiseAbs().maxCoeff() > 0.0);
}
