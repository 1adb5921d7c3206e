#include <cmath>

#include "doctest.h"
#include "hwvit/vit.hpp"
#include "support/gradcheck.hpp"

using namespace hwvit;

namespace {

const ModelMeta kMeta{};

SubnetConfig tiny_config() { return SubnetConfig{16, {{8, 2.0, 0.25}, {16, 1.0, 0.5}}}; }

ViTParams tiny_model(std::uint64_t seed = 3, double sls = 0.5) {
  return init_vit(tiny_config(), kMeta, 2, seed, sls);
}

}  // namespace

TEST_CASE("ratio tags put 8-bit rows first in every group") {
  const auto t = ratio_tags(4, 0.25, 3);
  REQUIRE(t.size() == 12);
  for (int g = 0; g < 3; ++g) {
    CHECK(t[std::size_t(4 * g)] == Precision::W8);
    CHECK(t[std::size_t(4 * g + 1)] == Precision::W4);
  }
  CHECK_THROWS_WITH(ratio_tags(6, 0.25), "infeasible ratio/dim pair");
}

TEST_CASE("init produces consistent shapes and tags") {
  const auto p = tiny_model();
  CHECK_NOTHROW(p.validate());
  CHECK(p.blocks[0].w_qkv.rows() == 24);
  CHECK(p.blocks[1].w_mlp1.rows() == 16);
  int w8 = 0;
  for (auto t : p.blocks[1].tags_proj) w8 += t == Precision::W8;
  CHECK(w8 == 8);
  auto broken = p;
  broken.blocks[0].tags_proj.pop_back();
  CHECK_THROWS(broken.validate());
}

TEST_CASE("zero layer scales make every block the identity, bitwise") {
  auto p = tiny_model();
  for (auto& b : p.blocks) {
    b.sls_msa.setZero();
    b.sls_mlp.setZero();
  }
  const auto batch = gradcheck::random_batch(kMeta, 2, 9);
  for (const auto& q : {QuantOptions{}, QuantOptions::off()}) {
    const auto w = prepare_weights(p, q);
    const Matrix x = batch.tokens[0] * p.w_embed.transpose();
    CHECK((encode_blocks(p, w, q, x).array() == x.array()).all());
    ForwardCache c;
    forward_sample(p, w, q, batch.tokens[1], &c);
    CHECK((c.x_out.array() == c.h0.array()).all());
  }
}

TEST_CASE("unit layer scales give a plain residual block") {
  auto p = tiny_model(4, 1.0);
  const auto q = QuantOptions::off();
  const auto w = prepare_weights(p, q);
  const auto batch = gradcheck::random_batch(kMeta, 1, 2);
  ForwardCache c;
  forward_sample(p, w, q, batch.tokens[0], &c);
  const auto& b = c.blocks[0];
  CHECK(((b.x_in + b.y_msa) - b.x1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax rows sum to one") {
  auto p = tiny_model();
  const auto q = QuantOptions{};
  const auto w = prepare_weights(p, q);
  const auto batch = gradcheck::random_batch(kMeta, 3, 5);
  for (const auto& x : batch.tokens) {
    ForwardCache c;
    const Matrix z = forward_sample(p, w, q, x, &c);
    CHECK(z.allFinite());
    for (const auto& blk : c.blocks)
      for (const auto& pm : blk.p)
        for (Eigen::Index r = 0; r < pm.rows(); ++r) CHECK(std::abs(pm.row(r).sum() - 1.0) <= 1e-12);
  }
  CHECK_THROWS(forward_sample(p, w, q, Matrix::Zero(8, 5)));
}

TEST_CASE("forward is deterministic") {
  auto p = tiny_model();
  const auto q = QuantOptions{};
  const auto batch = gradcheck::random_batch(kMeta, 1, 5);
  const Matrix a = forward_sample(p, prepare_weights(p, q), q, batch.tokens[0]);
  const Matrix b = forward_sample(p, prepare_weights(p, q), q, batch.tokens[0]);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("golden logits of a seeded tiny model") {
  const auto p = init_vit(tiny_config(), kMeta, 2, 1234, 0.1);
  const auto q = QuantOptions{};
  const auto batch = gradcheck::random_batch(kMeta, 1, 77);
  const Matrix z = forward_sample(p, prepare_weights(p, q), q, batch.tokens[0]);
  const double golden[] = {-0.071846395462399334, 0.029763701022277975, -0.25067137707233744,
                          -0.055108660334924238};
  for (int k = 0; k < 4; ++k) CHECK(z(0, k) == doctest::Approx(golden[k]).epsilon(1e-9));
}

TEST_CASE("KD loss degenerate cases and hand value") {
  Matrix zs(1, 3);
  zs << 0.3, -1.2, 2.0;
  Matrix zt(1, 3);
  zt << 1.0, 0.0, -0.5;
  const auto ce = kd_loss(zs, 2, KdConfig{0.0, 1.0});
  const Matrix ps = softmax_rows(zs);
  CHECK(ce.loss == doctest::Approx(-std::log(ps(0, 2))).epsilon(1e-15));
  CHECK(kd_loss(zs, 2, KdConfig{0.0, 3.0}, &zt).loss == ce.loss);

  const auto same = kd_loss(zs, 2, KdConfig{0.4, 2.0}, &zs);
  CHECK(std::abs(same.loss - 0.6 * ce.loss) <= 1e-12);

  Matrix s2(1, 2), t2(1, 2);
  s2 << 0.0, 0.0;
  t2 << std::log(3.0), 0.0;
  const double kl = 0.75 * std::log(0.75 / 0.5) + 0.25 * std::log(0.25 / 0.5);
  CHECK(kd_loss(s2, 0, KdConfig{1.0, 1.0}, &t2).loss == doctest::Approx(kl).epsilon(1e-12));

  CHECK_THROWS_AS(kd_loss(zs, 0, KdConfig{0.5, 1.0}), Error);
  CHECK_THROWS(kd_loss(zs, 0, KdConfig{1.5, 1.0}, &zt));
  CHECK_THROWS(kd_loss(zs, 0, KdConfig{0.5, 0.0}, &zt));
}

TEST_CASE("KD gradient matches finite differences") {
  Matrix zs(1, 4), zt(1, 4);
  zs << 0.3, -1.2, 2.0, 0.1;
  zt << 1.0, 0.0, -0.5, 0.7;
  const KdConfig kd{0.7, 2.5};
  const auto r = kd_loss(zs, 1, kd, &zt);
  for (int k = 0; k < 4; ++k) {
    Matrix a = zs, b = zs;
    a(0, k) += 1e-6;
    b(0, k) -= 1e-6;
    const double fd = (kd_loss(a, 1, kd, &zt).loss - kd_loss(b, 1, kd, &zt).loss) / 2e-6;
    CHECK(r.dlogits(0, k) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("zero upstream gives zero gradients") {
  const auto p = tiny_model();
  const auto q = QuantOptions{};
  const auto w = prepare_weights(p, q);
  const auto batch = gradcheck::random_batch(kMeta, 1, 1);
  ForwardCache c;
  forward_sample(p, w, q, batch.tokens[0], &c);
  auto g = p.zeros_like();
  backward_sample(p, w, c, Matrix::Zero(1, 4), g);
  for_each_param(g, [](const std::string&, Matrix& m) { CHECK(m.isZero()); });
}

TEST_CASE("analytic gradients match finite differences with quantization off") {
  const auto p = tiny_model(8, 0.5);
  const auto batch = gradcheck::random_batch(kMeta, 3, 21);
  const auto r = gradcheck::check(p, batch, KdConfig{0.3, 2.0}, false);
  CHECK(r.checked > 3000);
  for (const auto& [cls, err] : r.max_rel) {
    INFO(cls);
    CHECK(err <= 1e-4);
  }
  CHECK(r.max_rel.count("sls") == 1);
}

TEST_CASE("straight-through gradients on in-clamp weights") {
  const auto p = tiny_model(8, 0.5);
  const auto batch = gradcheck::random_batch(kMeta, 2, 22);
  const auto r = gradcheck::check(p, batch, KdConfig{0.0, 1.0}, true, 0.8);
  CHECK(r.skipped > 0);
  CHECK(r.masked_nonzero == 0);
  for (const auto& [cls, err] : r.max_rel) {
    INFO(cls);
    CHECK(err <= 1e-3);
  }
}
