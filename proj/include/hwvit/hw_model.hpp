#pragma once

// Analytical FPGA model: how multipliers are built from DSP and LUT resources
// and how many cycles a tiled GEMM layer takes on the resulting engine.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hwvit/arch.hpp"

namespace hwvit::hw {

struct HardwareProfile {
  std::int64_t s_dsp = 0;
  std::int64_t s_lut = 0;
  double gamma_dsp = 1.0;
  double gamma_lut = 1.0;
  std::int64_t axi_in = 1;
  std::int64_t axi_wgt = 1;
  std::int64_t axi_out = 1;
  std::int64_t d_act = 1;
  std::int64_t d_wgt = 1;
  double freq_hz = 150e6;

  void validate() const;
  double dsp_budget() const { return static_cast<double>(s_dsp) * gamma_dsp; }
  double lut_budget() const { return static_cast<double>(s_lut) * gamma_lut; }
};

enum class QuantMode : std::uint8_t { W4A6, W8A6, W8A6Direct };
enum class Impl : std::uint8_t { Lut, Pack3, Pack4 };

std::string_view to_string(QuantMode m);
QuantMode quant_mode_from_string(std::string_view s);
std::string_view to_string(Impl i);

/// Resources for one multiplier of the given mode and implementation.
struct UnitCost {
  double c_lut = 0.0;
  double c_dsp = 0.0;
};

class CostTable {
 public:
  /// Published per-unit costs.
  static CostTable defaults();

  UnitCost& at(QuantMode m, Impl i) { return table_[idx(m)][idx(i)]; }
  const UnitCost& at(QuantMode m, Impl i) const { return table_[idx(m)][idx(i)]; }

  /// Positivity, zero DSP cost for pure LUT units, and the strict ordering
  /// pack3 < pack4 < pure-LUT of the LUT cost for W4A6 and W8A6.
  void validate() const;

 private:
  template <typename E>
  static std::size_t idx(E e) {
    return static_cast<std::size_t>(e);
  }
  std::array<std::array<UnitCost, 3>, 3> table_{};
};

/// Multipliers of `mode` delivered by one DSP slice under packing `impl`.
double multipliers_per_dsp(QuantMode mode, Impl impl);

enum class Strategy : std::uint8_t { Pack3Only, Pack3PlusLut, Pack4Only, Pack4PlusLut };
std::string_view to_string(Strategy s);

/// How the pack-4 vs pack-3 choice is made when LUTs are plentiful: the
/// inequality as published, or the one re-derived from maximizing the total
/// multiplier count.
enum class StrategyRule : std::uint8_t { Verbatim, Derived };
StrategyRule strategy_rule_from_string(std::string_view s);

struct ComputePlan {
  Strategy strategy = Strategy::Pack3Only;
  int situation = 1;
  QuantMode mode = QuantMode::W4A6;
  std::int64_t n_dsp = 0;  // multipliers mapped onto DSP slices
  std::int64_t n_lut = 0;  // pure-LUT multipliers
  std::int64_t n_tot = 0;

  Impl dsp_impl() const;
};

/// Throws Error("infeasible profile") when not even one multiplier fits.
ComputePlan select_compute_strategy(const HardwareProfile& profile, const CostTable& costs,
                                    QuantMode mode, StrategyRule rule = StrategyRule::Verbatim);

struct ResourceUsage {
  double dsp_used = 0.0;
  double lut_used = 0.0;
  double dsp_fraction = 0.0;
  double lut_fraction = 0.0;
};

ResourceUsage resource_report(const ComputePlan& plan, const HardwareProfile& profile,
                              const CostTable& costs);

/// DSP and LUT budget constraints of the plan, each within `tol` resources.
bool plan_within_budget(const ComputePlan& plan, const HardwareProfile& profile,
                        const CostTable& costs, double tol = 1e-9);

/// A GEMM of `m` output channels over `n` input channels and `f` tokens.
/// With n_h > 1 the layer is n_h independent per-head GEMMs, each over
/// n / n_h input channels and all m outputs.
struct LayerShape {
  std::int64_t m = 1;
  std::int64_t n = 1;
  std::int64_t f = 1;
  std::int64_t n_h = 1;

  void validate() const;
  std::int64_t head_inputs() const { return n / n_h; }
  bool operator==(const LayerShape&) const = default;
};

struct TileConfig {
  std::int64_t t_n = 1;
  std::int64_t t_m = 1;
  std::int64_t p_f = 1;

  void validate(const LayerShape& shape) const;
  bool operator==(const TileConfig&) const = default;
  auto operator<=>(const TileConfig&) const = default;
};

struct TileCycles {
  std::int64_t l_in = 0;
  std::int64_t l_wgt = 0;
  std::int64_t l_out = 0;
  std::int64_t l_cmpt = 0;
};

TileCycles tile_cycles(const LayerShape& shape, const TileConfig& tile,
                       const HardwareProfile& profile, const ComputePlan& plan);

struct LayerCycles {
  TileCycles tile;
  std::int64_t l1 = 0;
  std::int64_t l2 = 0;
  std::int64_t per_head = 0;
  std::int64_t total = 0;  // per_head * n_h
};

LayerCycles layer_cycles_detail(const LayerShape& shape, const TileConfig& tile,
                                const HardwareProfile& profile, const ComputePlan& plan);
std::int64_t layer_cycles(const LayerShape& shape, const TileConfig& tile,
                          const HardwareProfile& profile, const ComputePlan& plan);

/// Candidate values for one tile dimension: powers of two below `dim`, and
/// `dim` itself.
std::vector<std::int64_t> tile_grid(std::int64_t dim);

/// Grid search minimizing layer cycles; ties go to the smallest
/// (t_n, t_m, p_f).
TileConfig auto_tile(const LayerShape& shape, const HardwareProfile& profile,
                     const ComputePlan& plan);

struct HwLayer {
  std::string name;
  LayerShape shape;
};

/// Lowers an architecture to the GEMM layers the accelerator runs. 8-bit rows
/// execute as two 4-bit rows, so a block linear with ratio rho has
/// m * (1 + rho) effective output channels; the embedding and classifier run
/// fully in 8 bits and attention matmuls take two 4-bit passes per 6-bit
/// operand.
std::vector<HwLayer> expand_layers(const SubnetConfig& config, const ModelMeta& meta, int heads);

/// Tile selection per layer: an explicit tile by layer name wins, then the
/// default tile (clamped to the layer), otherwise the auto-tuner.
struct TilePlan {
  std::optional<TileConfig> default_tile;
  std::map<std::string, TileConfig> per_layer;
  bool auto_tune = false;

  TileConfig resolve(const HwLayer& layer, const HardwareProfile& profile,
                     const ComputePlan& plan) const;
};

struct LayerEstimate {
  std::string name;
  LayerShape shape;
  TileConfig tile;
  LayerCycles cycles;
};

struct FpsEstimate {
  double fps = 0.0;
  std::int64_t total_cycles = 0;
  ComputePlan plan;
  ResourceUsage resources;
  std::vector<LayerEstimate> layers;
};

/// Layers run under the W4A6 plan of the profile.
FpsEstimate estimate_fps(const std::vector<HwLayer>& layers, const HardwareProfile& profile,
                         const CostTable& costs, const TilePlan& tiles,
                         StrategyRule rule = StrategyRule::Verbatim);

}  // namespace hwvit::hw
