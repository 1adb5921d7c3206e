#include "hwvit/vit.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "hwvit/random.hpp"

namespace hwvit {

namespace {

constexpr double kLnEps = 1e-5;

Matrix filled(Eigen::Index rows, Eigen::Index cols, double v) {
  return Matrix::Constant(rows, cols, v);
}

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng, stddev);
  return m;
}

// Per-row layer norm. Writes normalized rows and 1/std for the backward pass.
Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, Matrix& xhat, Matrix& inv_std) {
  const Eigen::Index n = x.cols();
  xhat.resize(x.rows(), n);
  inv_std.resize(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().sum() / static_cast<double>(n);
    inv_std(r, 0) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r, 0);
  }
  return (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Matrix& inv_std,
                           const Matrix& g, Matrix& dg, Matrix& db) {
  dg.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * g.row(0).array();
  const double n = static_cast<double>(xhat.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).sum() / n;
    const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
    dx.row(r) = inv_std(r, 0) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
  }
  return dx;
}

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2)); }

double gelu_grad(double z) {
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2)) + z * pdf;
}

Matrix act_quant(const Matrix& x, const QuantOptions& q) {
  if (!q.activations) return x;
  Matrix out = x;
  fake_quantize_activations_inplace(out, q.act_bits);
  return out;
}

// a * b^T, either in real arithmetic or as an integer code product. Writes
// the (dequantized) operands used.
Matrix matmul_abt(const Matrix& a, const Matrix& b, const QuantOptions& q, Matrix& a_used,
                  Matrix& b_used) {
  if (!q.activations) {
    a_used = a;
    b_used = b;
    return a * b.transpose();
  }
  const auto ca = quantize_activations(a, q.act_bits);
  const auto cb = quantize_activations(b, q.act_bits);
  a_used = ca.codes.cast<double>() * ca.scale;
  b_used = cb.codes.cast<double>() * cb.scale;
  const IntMatrix prod = ca.codes.cast<std::int64_t>() * cb.codes.cast<std::int64_t>().transpose();
  return prod.cast<double>() * (ca.scale * cb.scale);
}

void fake_weight(const Matrix& w, const std::vector<Precision>& tags, const QuantOptions& q,
                 Matrix& out, Matrix& mask) {
  if (!q.weights) {
    out = w;
    mask = Matrix::Ones(w.rows(), w.cols());
    return;
  }
  FakeQuantized fq;
  if (q.weight_clip == 1.0) {
    fq = fake_quantize(w, tags);
  } else {
    std::vector<double> scales(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const double m = w.row(i).cwiseAbs().maxCoeff();
      scales[std::size_t(i)] = m > 0 ? q.weight_clip * m / code_max(tags[std::size_t(i)]) : 1.0;
    }
    fq = fake_quantize(w, tags, scales);
  }
  out = std::move(fq.values);
  mask = std::move(fq.mask);
}

void check_tags(const Matrix& w, const std::vector<Precision>& tags, const char* what) {
  if (tags.size() != static_cast<std::size_t>(w.rows()))
    throw std::invalid_argument(std::string("tag count mismatch for ") + what);
}

void check_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw std::invalid_argument(std::string("shape mismatch for ") + what);
}

}  // namespace

std::vector<Precision> ratio_tags(int rows, double rho, int groups) {
  const int w8 = w8_row_count(rows, rho);
  std::vector<Precision> tags;
  tags.reserve(static_cast<std::size_t>(rows * groups));
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < rows; ++i) tags.push_back(i < w8 ? Precision::W8 : Precision::W4);
  return tags;
}

void for_each_param(ViTParams& p, const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("embed.w", p.w_embed);
  fn("embed.b", p.b_embed);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    fn(pre + "ln1.g", b.ln1_g);
    fn(pre + "ln1.b", b.ln1_b);
    fn(pre + "qkv", b.w_qkv);
    fn(pre + "proj", b.w_proj);
    fn(pre + "sls_msa", b.sls_msa);
    fn(pre + "ln2.g", b.ln2_g);
    fn(pre + "ln2.b", b.ln2_b);
    fn(pre + "mlp1", b.w_mlp1);
    fn(pre + "mlp2", b.w_mlp2);
    fn(pre + "sls_mlp", b.sls_mlp);
  }
  fn("norm.g", p.norm_g);
  fn("norm.b", p.norm_b);
  fn("head.w", p.w_head);
  fn("head.b", p.b_head);
}

void for_each_param(const ViTParams& p,
                    const std::function<void(const std::string&, const Matrix&)>& fn) {
  for_each_param(const_cast<ViTParams&>(p),
                 [&](const std::string& name, Matrix& m) { fn(name, m); });
}

ViTParams ViTParams::zeros_like() const {
  ViTParams z = *this;
  for_each_param(z, [](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

void ViTParams::validate() const {
  const Eigen::Index e = embed_dim();
  if (e < 1 || heads < 1) throw std::invalid_argument("empty model");
  check_shape(b_embed, 1, e, "embed.b");
  for (const auto& b : blocks) {
    const Eigen::Index h = b.w_qkv.rows() / 3;
    const Eigen::Index m = b.w_mlp1.rows();
    if (h < 1 || b.w_qkv.rows() % 3 != 0 || h % heads != 0)
      throw std::invalid_argument("hidden dim must be a positive multiple of the head count");
    check_shape(b.w_qkv, 3 * h, e, "qkv");
    check_shape(b.w_proj, e, h, "proj");
    check_shape(b.w_mlp1, m, e, "mlp1");
    check_shape(b.w_mlp2, e, m, "mlp2");
    for (const Matrix* v : {&b.ln1_g, &b.ln1_b, &b.ln2_g, &b.ln2_b, &b.sls_msa, &b.sls_mlp})
      check_shape(*v, 1, e, "block vector");
    check_tags(b.w_qkv, b.tags_qkv, "qkv");
    check_tags(b.w_proj, b.tags_proj, "proj");
    check_tags(b.w_mlp1, b.tags_mlp1, "mlp1");
    check_tags(b.w_mlp2, b.tags_mlp2, "mlp2");
  }
  check_shape(norm_g, 1, e, "norm.g");
  check_shape(norm_b, 1, e, "norm.b");
  check_shape(w_head, w_head.rows(), e, "head.w");
  check_shape(b_head, 1, w_head.rows(), "head.b");
}

ViTParams init_vit(const SubnetConfig& cfg, const ModelMeta& meta, int heads, std::uint64_t seed,
                   double sls_init) {
  Rng rng(seed);
  const int e = cfg.embed_dim;
  ViTParams p;
  p.heads = heads;
  p.w_embed = gaussian(rng, e, meta.token_dim, 1.0 / std::sqrt(meta.token_dim));
  p.b_embed = Matrix::Zero(1, e);
  for (const auto& l : cfg.layers) {
    const int h = l.hidden_dim;
    const int m = l.mlp_dim(e);
    BlockParams b;
    b.w_qkv = gaussian(rng, 3 * h, e, 1.0 / std::sqrt(e));
    b.w_proj = gaussian(rng, e, h, 1.0 / std::sqrt(h));
    b.w_mlp1 = gaussian(rng, m, e, 1.0 / std::sqrt(e));
    b.w_mlp2 = gaussian(rng, e, m, 1.0 / std::sqrt(m));
    b.ln1_g = filled(1, e, 1.0);
    b.ln1_b = Matrix::Zero(1, e);
    b.ln2_g = filled(1, e, 1.0);
    b.ln2_b = Matrix::Zero(1, e);
    b.sls_msa = filled(1, e, sls_init);
    b.sls_mlp = filled(1, e, sls_init);
    b.tags_qkv = ratio_tags(h, l.mixed_ratio, 3);
    b.tags_proj = ratio_tags(e, l.mixed_ratio);
    b.tags_mlp1 = ratio_tags(m, l.mixed_ratio);
    b.tags_mlp2 = ratio_tags(e, l.mixed_ratio);
    p.blocks.push_back(std::move(b));
  }
  p.norm_g = filled(1, e, 1.0);
  p.norm_b = Matrix::Zero(1, e);
  p.w_head = gaussian(rng, meta.num_classes, e, 1.0 / std::sqrt(e));
  p.b_head = Matrix::Zero(1, meta.num_classes);
  p.validate();
  return p;
}

PreparedWeights prepare_weights(const ViTParams& p, const QuantOptions& q) {
  if (q.weight_clip <= 0.0 || q.weight_clip > 1.0)
    throw std::invalid_argument("weight clip must lie in (0, 1]");
  PreparedWeights w;
  w.blocks.resize(p.blocks.size());
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& b = p.blocks[i];
    auto& o = w.blocks[i];
    fake_weight(b.w_qkv, b.tags_qkv, q, o.qkv, o.mask_qkv);
    fake_weight(b.w_proj, b.tags_proj, q, o.proj, o.mask_proj);
    fake_weight(b.w_mlp1, b.tags_mlp1, q, o.mlp1, o.mask_mlp1);
    fake_weight(b.w_mlp2, b.tags_mlp2, q, o.mlp2, o.mask_mlp2);
  }
  return w;
}

namespace {

Matrix block_forward(const BlockParams& b, const PreparedWeights::Block& w, int heads,
                     const QuantOptions& q, const Matrix& x, BlockCache& c) {
  const Eigen::Index h = b.hidden_dim();
  const Eigen::Index dh = h / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  c.x_in = x;
  c.u1 = act_quant(layer_norm(x, b.ln1_g, b.ln1_b, c.xhat1, c.inv_std1), q);
  c.qkv = c.u1 * w.qkv.transpose();
  c.q.resize(std::size_t(heads));
  c.k.resize(std::size_t(heads));
  c.v.resize(std::size_t(heads));
  c.p.resize(std::size_t(heads));
  c.pq.resize(std::size_t(heads));
  Matrix attn(x.rows(), h);
  for (int j = 0; j < heads; ++j) {
    const auto s = std::size_t(j);
    const Matrix qj = c.qkv.middleCols(j * dh, dh);
    const Matrix kj = c.qkv.middleCols(h + j * dh, dh);
    const Matrix vj = c.qkv.middleCols(2 * h + j * dh, dh);
    c.p[s] = softmax_rows(matmul_abt(qj, kj, q, c.q[s], c.k[s]) * inv_sqrt);
    const Matrix vt = vj.transpose();
    Matrix vt_used;
    attn.middleCols(j * dh, dh) = matmul_abt(c.p[s], vt, q, c.pq[s], vt_used);
    c.v[s] = vt_used.transpose();
  }
  c.attn = act_quant(attn, q);
  c.y_msa = c.attn * w.proj.transpose();
  c.x1 = x + (c.y_msa.array().rowwise() * b.sls_msa.row(0).array()).matrix();

  const Matrix ln2 = layer_norm(c.x1, b.ln2_g, b.ln2_b, c.xhat2, c.inv_std2);
  c.u2 = act_quant(ln2, q);
  c.z = c.u2 * w.mlp1.transpose();
  c.gq = act_quant(c.z.unaryExpr(&gelu), q);
  c.y_mlp = c.gq * w.mlp2.transpose();
  return c.x1 + (c.y_mlp.array().rowwise() * b.sls_mlp.row(0).array()).matrix();
}

// Returns dL/dx_in and accumulates parameter gradients (block linears with
// respect to the quantized weights; activation quantizers pass through).
Matrix block_backward(const BlockParams& b, const PreparedWeights::Block& w, int heads,
                      const BlockCache& c, const Matrix& dx2, BlockParams& g) {
  const Eigen::Index h = b.hidden_dim();
  const Eigen::Index dh = h / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // MLP branch.
  g.sls_mlp.row(0) += (dx2.array() * c.y_mlp.array()).colwise().sum().matrix();
  const Matrix dy_mlp = dx2.array().rowwise() * b.sls_mlp.row(0).array();
  g.w_mlp2 += dy_mlp.transpose() * c.gq;
  const Matrix dgq = dy_mlp * w.mlp2;
  const Matrix dz = dgq.array() * c.z.unaryExpr(&gelu_grad).array();
  g.w_mlp1 += dz.transpose() * c.u2;
  const Matrix du2 = dz * w.mlp1;
  Matrix dx1 = dx2 + layer_norm_backward(du2, c.xhat2, c.inv_std2, b.ln2_g, g.ln2_g, g.ln2_b);

  // Attention branch.
  g.sls_msa.row(0) += (dx1.array() * c.y_msa.array()).colwise().sum().matrix();
  const Matrix dy_msa = dx1.array().rowwise() * b.sls_msa.row(0).array();
  g.w_proj += dy_msa.transpose() * c.attn;
  const Matrix dattn = dy_msa * w.proj;
  Matrix dqkv = Matrix::Zero(c.qkv.rows(), c.qkv.cols());
  for (int j = 0; j < heads; ++j) {
    const auto s = std::size_t(j);
    const Matrix da = dattn.middleCols(j * dh, dh);
    const Matrix dp = da * c.v[s].transpose();
    dqkv.middleCols(2 * h + j * dh, dh) = c.pq[s].transpose() * da;
    const Matrix& p = c.p[s];
    const Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
    const Matrix ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * inv_sqrt;
    dqkv.middleCols(j * dh, dh) = ds * c.k[s];
    dqkv.middleCols(h + j * dh, dh) = ds.transpose() * c.q[s];
  }
  g.w_qkv += dqkv.transpose() * c.u1;
  const Matrix du1 = dqkv * w.qkv;
  return dx1 + layer_norm_backward(du1, c.xhat1, c.inv_std1, b.ln1_g, g.ln1_g, g.ln1_b);
}

Matrix log_softmax_row(const Matrix& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

}  // namespace

Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    out.row(r) = (z.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix encode_blocks(const ViTParams& p, const PreparedWeights& w, const QuantOptions& q,
                     const Matrix& x) {
  Matrix h = x;
  BlockCache scratch;
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    h = block_forward(p.blocks[i], w.blocks[i], p.heads, q, h, scratch);
  return h;
}

Matrix forward_sample(const ViTParams& p, const PreparedWeights& w, const QuantOptions& q,
                      const Matrix& tokens, ForwardCache* cache) {
  if (tokens.cols() != p.token_dim()) throw std::invalid_argument("token width mismatch");
  if (w.blocks.size() != p.blocks.size()) throw std::invalid_argument("prepared weights mismatch");
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.tokens = tokens;
  c.h0 = (tokens * p.w_embed.transpose()).rowwise() + p.b_embed.row(0);
  c.blocks.resize(p.blocks.size());
  Matrix h = c.h0;
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    h = block_forward(p.blocks[i], w.blocks[i], p.heads, q, h, c.blocks[i]);
  c.x_out = h;
  const Matrix normed = layer_norm(h, p.norm_g, p.norm_b, c.xhat_f, c.inv_std_f);
  c.pooled = normed.colwise().mean();
  c.logits = c.pooled * p.w_head.transpose() + p.b_head;
  return c.logits;
}

void backward_sample(const ViTParams& p, const PreparedWeights& w, const ForwardCache& c,
                     const Matrix& dlogits, ViTParams& g) {
  g.w_head += dlogits.transpose() * c.pooled;
  g.b_head += dlogits;
  const Matrix dpooled = dlogits * p.w_head;
  const double f = static_cast<double>(c.x_out.rows());
  const Matrix dnormed = Matrix::Ones(c.x_out.rows(), 1) * (dpooled / f);
  Matrix dh = layer_norm_backward(dnormed, c.xhat_f, c.inv_std_f, p.norm_g, g.norm_g, g.norm_b);
  for (std::size_t i = p.blocks.size(); i-- > 0;)
    dh = block_backward(p.blocks[i], w.blocks[i], p.heads, c.blocks[i], dh, g.blocks[i]);
  g.w_embed += dh.transpose() * c.tokens;
  g.b_embed.row(0) += dh.colwise().sum();
}

void apply_ste_masks(const PreparedWeights& w, ViTParams& g) {
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    auto& b = g.blocks[i];
    const auto& m = w.blocks[i];
    b.w_qkv.array() *= m.mask_qkv.array();
    b.w_proj.array() *= m.mask_proj.array();
    b.w_mlp1.array() *= m.mask_mlp1.array();
    b.w_mlp2.array() *= m.mask_mlp2.array();
  }
}

void KdConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
}

LossResult kd_loss(const Matrix& zs, int label, const KdConfig& kd, const Matrix* zt) {
  kd.validate();
  if (zs.rows() != 1 || label < 0 || label >= zs.cols())
    throw std::invalid_argument("logits/label mismatch");
  if (kd.alpha > 0.0 && zt == nullptr) throw Error("distillation requires teacher logits");
  const Matrix ps = softmax_rows(zs);
  LossResult r;
  r.loss = (1.0 - kd.alpha) * -log_softmax_row(zs)(0, label);
  r.dlogits = (1.0 - kd.alpha) * ps;
  r.dlogits(0, label) -= 1.0 - kd.alpha;
  if (kd.alpha > 0.0) {
    if (zt->rows() != 1 || zt->cols() != zs.cols()) throw std::invalid_argument("teacher logits mismatch");
    const Matrix pst = softmax_rows(zs / kd.tau);
    const Matrix ptt = softmax_rows(*zt / kd.tau);
    const Matrix log_s = log_softmax_row(zs / kd.tau);
    const Matrix log_t = log_softmax_row(*zt / kd.tau);
    double kl = 0.0;
    for (Eigen::Index k = 0; k < zs.cols(); ++k)
      if (ptt(0, k) > 0.0) kl += ptt(0, k) * (log_t(0, k) - log_s(0, k));
    r.loss += kd.alpha * kd.tau * kd.tau * kl;
    r.dlogits += kd.alpha * kd.tau * (pst - ptt);
  }
  return r;
}

}  // namespace hwvit
