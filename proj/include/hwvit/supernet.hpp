#pragma once

// Weight-entangled supernet with fixed-precision row zones.
//
// Each entangled layer stores H + D_max latent rows, where H = rho_max * D_max.
// Rows [0, H) are permanently 8-bit and rows [H, H + D_max) permanently 4-bit.
// A subnet layer of width d and ratio rho uses the contiguous window starting
// at H - rho * d, so exactly rho * d of its rows fall in the 8-bit zone.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hwvit/arch.hpp"
#include "hwvit/train.hpp"
#include "hwvit/vit.hpp"

namespace hwvit {

struct WindowSelection {
  int offset = 0;
  int length = 0;
  int w8_rows = 0;
  double achieved_ratio = 0.0;
};

class EntangledLayer {
 public:
  EntangledLayer() = default;
  EntangledLayer(int d_max, double rho_max, int cols, bool with_sls);

  int d_max() const { return d_max_; }
  int zone_rows() const { return zone_rows_; }
  int super_rows() const { return zone_rows_ + d_max_; }
  int cols() const { return static_cast<int>(latent_.cols()); }

  Matrix& latent() { return latent_; }
  const Matrix& latent() const { return latent_; }
  const std::vector<Precision>& tags() const { return tags_; }
  bool has_sls() const { return sls_.has_value(); }
  Matrix& sls() { return sls_.value(); }
  const Matrix& sls() const { return sls_.value(); }

  /// Throws "infeasible ratio/dim pair" for non-integral rho * d and
  /// std::out_of_range for a window outside the latent rows.
  WindowSelection select(int d, double rho) const;

 private:
  int d_max_ = 0;
  int zone_rows_ = 0;
  Matrix latent_;
  std::vector<Precision> tags_;
  std::optional<Matrix> sls_;
};

/// A window into an entangled layer that aliases its storage.
struct WindowView {
  Eigen::Block<Matrix> weights;
  std::vector<Precision> tags;
  std::optional<Eigen::Block<Matrix>> sls;
  WindowSelection selection;
};

/// Rows of the (d, rho) window, columns [col_offset, col_offset + cols).
WindowView extract_window(EntangledLayer& layer, int d, double rho, int col_offset, int cols);

struct SupernetBlock {
  EntangledLayer q, k, v, proj, mlp1, mlp2;
  Matrix ln1_g, ln1_b, ln2_g, ln2_b;  // 1 x E_max, prefix-sliced
};

/// A rectangular region of one named supernet tensor.
struct Region {
  std::string tensor;
  int row0 = 0, rows = 0, col0 = 0, cols = 0;
};

class Supernet {
 public:
  Supernet() = default;
  Supernet(const SearchSpace& space, const ModelMeta& meta, std::uint64_t seed,
           double sls_init = 0.1);

  const SearchSpace& space() const { return space_; }
  const ModelMeta& meta() const { return meta_; }

  /// Dense copy of the subnet's weights with its precision tags.
  ViTParams extract(const SubnetConfig& cfg) const;
  /// Adds `delta` (shaped like extract(cfg)) into the subnet's windows.
  void scatter_add(const SubnetConfig& cfg, const ViTParams& delta);
  /// Every supernet region read by the subnet, in extraction order.
  std::vector<Region> regions(const SubnetConfig& cfg) const;

  /// Every stored tensor in a fixed order with a stable name; latent weights
  /// report their immutable row tags.
  void for_each_tensor(const std::function<void(const std::string&, Matrix&,
                                                const std::vector<Precision>*)>& fn);
  void for_each_tensor(const std::function<void(const std::string&, const Matrix&,
                                                const std::vector<Precision>*)>& fn) const;

  std::vector<SupernetBlock>& blocks() { return blocks_; }
  const std::vector<SupernetBlock>& blocks() const { return blocks_; }

  /// Checkpoint directory: one f32 QVT file per tensor plus manifest.json.
  void save(const std::filesystem::path& dir) const;
  static Supernet load(const std::filesystem::path& dir);

 private:
  struct Windows;
  Windows windows(const SubnetConfig& cfg) const;

  SearchSpace space_;
  ModelMeta meta_;
  Matrix w_embed_, b_embed_;
  std::vector<SupernetBlock> blocks_;
  Matrix norm_g_, norm_b_;
  Matrix w_head_, b_head_;
};

struct SupernetTrainConfig {
  TrainConfig train;
  /// Steps between progress callbacks; 0 reports once per epoch only.
  int report_every = 0;
};

struct SupernetStep {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  SubnetConfig subnet;
};

/// Subnet sampled for a given training step.
SubnetConfig step_subnet(const SearchSpace& space, std::uint64_t seed, std::int64_t step);

/// One sample-extract-backward-scatter iteration on one mini-batch.
SupernetStep supernet_train_step(Supernet& net, const Dataset& data,
                                 const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                                 std::int64_t step, double lr, const TeacherLogits* teacher);

void train_supernet(Supernet& net, const Dataset& data, const SupernetTrainConfig& cfg,
                    const TeacherLogits* teacher = nullptr,
                    const std::function<void(const SupernetStep&)>& on_epoch = {});

double subnet_accuracy(const Supernet& net, const SubnetConfig& cfg, const Dataset& data,
                       const std::vector<std::size_t>& split, const QuantOptions& q = {});

}  // namespace hwvit
