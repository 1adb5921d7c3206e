#pragma once

// Search space and sampled architectures.

#include <cstdint>
#include <string>
#include <vector>

#include "hwvit/random.hpp"

namespace hwvit {

/// One search space (one supernet). Full-scale and toy-scale spaces share
/// this schema; only the lists differ.
struct SearchSpace {
  std::vector<int> embed_dims;
  std::vector<int> hidden_dims;
  std::vector<double> mixed_ratios{0.0, 0.25, 0.5};
  std::vector<double> expansion_ratios;
  std::vector<int> depths;
  int heads = 4;

  /// Rejects empty lists, ratios outside [0, 1], hidden dims not divisible by
  /// the head count, non-integral MLP widths and every (dim, ratio) pair whose
  /// 8-bit row count is not an integer.
  void validate() const;

  int max_embed() const;
  int max_hidden() const;
  int max_mlp() const;
  int max_depth() const;
  double max_ratio() const;
  std::size_t layer_choice_count() const;
};

/// Per-block genes.
struct LayerGenes {
  int hidden_dim = 0;
  double expansion_ratio = 0.0;
  double mixed_ratio = 0.0;

  int mlp_dim(int embed_dim) const;
  bool operator==(const LayerGenes&) const = default;
};

struct SubnetConfig {
  int embed_dim = 0;
  std::vector<LayerGenes> layers;

  int depth() const { return static_cast<int>(layers.size()); }
  bool operator==(const SubnetConfig&) const = default;
  /// Canonical text form; used for ordering, de-duplication and logs.
  std::string key() const;
};

bool in_space(const SubnetConfig& c, const SearchSpace& space);

/// Uniform independent choice of each per-layer gene.
LayerGenes sample_layer(const SearchSpace& space, Rng& rng);

/// Uniform independent choice per dimension and per layer.
SubnetConfig sample_subnet(const SearchSpace& space, Rng& rng);
SubnetConfig sample_subnet(const SearchSpace& space, std::uint64_t seed);

/// The largest architecture of a space (every list at its maximum).
SubnetConfig largest_subnet(const SearchSpace& space);

/// Input geometry shared by every architecture of a model family.
struct ModelMeta {
  int tokens = 8;
  int token_dim = 16;
  int num_classes = 4;
};

/// Weight-parameter and MAC accounting for one architecture. Block linears
/// use the block's mixed ratio; the token embedding and classifier are
/// counted as 8-bit, layer norms and layer scales likewise.
struct ModelStats {
  double params = 0;
  double macs = 0;
  double w8_params = 0;
  double w8_macs = 0;
  double mixed_ratio = 0;  // w8_params / params
  double size_bytes = 0;
  double bops = 0;
};

ModelStats model_stats(const SubnetConfig& c, const ModelMeta& meta, int act_bits);

/// Number of 8-bit rows for `dim` rows at ratio `rho`; throws
/// "infeasible ratio/dim pair" when rho * dim is not an integer.
int w8_row_count(int dim, double rho);

}  // namespace hwvit
