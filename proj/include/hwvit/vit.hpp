#pragma once

// A small vision-transformer encoder with hand-written forward and backward
// passes, row-wise mixed-precision fake quantization and per-channel layer
// scaling on both residual branches.
//
// Every parameter is a `Matrix`; vectors are stored as 1 x n. A sample is an
// F x token_dim matrix of tokens.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hwvit/arch.hpp"
#include "hwvit/common.hpp"
#include "hwvit/quant.hpp"

namespace hwvit {

struct BlockParams {
  Matrix w_qkv;  // 3h x E, rows Q | K | V
  Matrix w_proj;  // E x h
  Matrix w_mlp1;  // mlp x E
  Matrix w_mlp2;  // E x mlp
  Matrix ln1_g, ln1_b, ln2_g, ln2_b;  // 1 x E
  Matrix sls_msa, sls_mlp;  // 1 x E

  std::vector<Precision> tags_qkv, tags_proj, tags_mlp1, tags_mlp2;

  int hidden_dim() const { return static_cast<int>(w_qkv.rows() / 3); }
  int mlp_dim() const { return static_cast<int>(w_mlp1.rows()); }
};

struct ViTParams {
  int heads = 1;
  Matrix w_embed;  // E x token_dim
  Matrix b_embed;  // 1 x E
  std::vector<BlockParams> blocks;
  Matrix norm_g, norm_b;  // 1 x E
  Matrix w_head;  // C x E
  Matrix b_head;  // 1 x C

  int embed_dim() const { return static_cast<int>(w_embed.rows()); }
  int token_dim() const { return static_cast<int>(w_embed.cols()); }
  int num_classes() const { return static_cast<int>(w_head.rows()); }

  /// Same shapes and tags, all values zero.
  ViTParams zeros_like() const;
  /// Throws std::invalid_argument on inconsistent shapes or tags.
  void validate() const;
};

/// Visits every parameter tensor with a stable dotted name, in a fixed order.
void for_each_param(ViTParams& p, const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_param(const ViTParams& p,
                    const std::function<void(const std::string&, const Matrix&)>& fn);

/// Row tags for a layer with `rows` output rows (repeated `groups` times):
/// the leading rho * rows rows of each group are 8-bit.
std::vector<Precision> ratio_tags(int rows, double rho, int groups = 1);

/// Random initialization; layer norms start at identity, layer scales at
/// `sls_init`.
ViTParams init_vit(const SubnetConfig& cfg, const ModelMeta& meta, int heads, std::uint64_t seed,
                   double sls_init = 0.1);

struct QuantOptions {
  bool weights = true;
  bool activations = true;
  int act_bits = 6;
  /// Row scale = clip * max|w| / qmax; below 1 some weights fall outside the
  /// clamp range and get a zero straight-through gradient.
  double weight_clip = 1.0;

  static QuantOptions off() { return {false, false, 6, 1.0}; }
};

/// Fake-quantized block weights and their straight-through masks, computed
/// once per batch.
struct PreparedWeights {
  struct Block {
    Matrix qkv, proj, mlp1, mlp2;
    Matrix mask_qkv, mask_proj, mask_mlp1, mask_mlp2;
  };
  std::vector<Block> blocks;
};

PreparedWeights prepare_weights(const ViTParams& p, const QuantOptions& q);

struct BlockCache {
  Matrix x_in, xhat1, inv_std1, u1, qkv;
  std::vector<Matrix> q, k, v, p, pq;  // per head, after activation quantization
  Matrix attn, y_msa, x1, xhat2, inv_std2, u2, z, gq, y_mlp;
};

struct ForwardCache {
  Matrix tokens, h0;
  std::vector<BlockCache> blocks;
  Matrix x_out, xhat_f, inv_std_f, pooled;
  Matrix logits;  // 1 x C
};

/// Encoder output (before the final norm) and logits for one sample.
Matrix forward_sample(const ViTParams& p, const PreparedWeights& w, const QuantOptions& q,
                      const Matrix& tokens, ForwardCache* cache = nullptr);

/// Accumulates parameter gradients for one sample given dL/dlogits. Block
/// linear gradients are taken with respect to the quantized weights; call
/// apply_ste_masks once per batch to map them onto the latent weights.
void backward_sample(const ViTParams& p, const PreparedWeights& w, const ForwardCache& cache,
                     const Matrix& dlogits, ViTParams& grads);

void apply_ste_masks(const PreparedWeights& w, ViTParams& grads);

/// Runs the block stack only (no embedding, no head); used by the identity
/// property of zero layer scales.
Matrix encode_blocks(const ViTParams& p, const PreparedWeights& w, const QuantOptions& q,
                     const Matrix& x);

struct KdConfig {
  double alpha = 0.0;
  double tau = 1.0;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  Matrix dlogits;  // 1 x C
};

/// (1 - alpha) * CE(softmax(z_s), y) + alpha * tau^2 * KL(softmax(z_t / tau) || softmax(z_s / tau)).
LossResult kd_loss(const Matrix& student_logits, int label, const KdConfig& kd,
                   const Matrix* teacher_logits = nullptr);

/// Row-wise numerically stable softmax.
Matrix softmax_rows(const Matrix& z);

}  // namespace hwvit
