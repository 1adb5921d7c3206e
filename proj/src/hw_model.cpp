#include "hwvit/hw_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hwvit/common.hpp"

namespace hwvit::hw {

namespace {

constexpr double kFloorEps = 1e-9;

std::int64_t floor_count(double x) {
  return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(x + kFloorEps)));
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

void HardwareProfile::validate() const {
  if (s_dsp < 1 || s_lut < 1) throw std::invalid_argument("profile resource counts must be positive");
  if (axi_in < 1 || axi_wgt < 1 || axi_out < 1 || d_act < 1 || d_wgt < 1)
    throw std::invalid_argument("profile port counts must be positive");
  if (!(gamma_dsp > 0.0 && gamma_dsp <= 1.0) || !(gamma_lut > 0.0 && gamma_lut <= 1.0))
    throw std::invalid_argument("utilization thresholds must lie in (0, 1]");
  if (!(freq_hz > 0.0)) throw std::invalid_argument("frequency must be positive");
}

std::string_view to_string(QuantMode m) {
  switch (m) {
    case QuantMode::W4A6: return "W4A6";
    case QuantMode::W8A6: return "W8A6";
    case QuantMode::W8A6Direct: return "W8A6-direct";
  }
  return "?";
}

QuantMode quant_mode_from_string(std::string_view s) {
  if (s == "W4A6") return QuantMode::W4A6;
  if (s == "W8A6") return QuantMode::W8A6;
  if (s == "W8A6-direct") return QuantMode::W8A6Direct;
  throw std::invalid_argument("unknown quant mode: " + std::string(s));
}

std::string_view to_string(Impl i) {
  switch (i) {
    case Impl::Lut: return "lut";
    case Impl::Pack3: return "pack3";
    case Impl::Pack4: return "pack4";
  }
  return "?";
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Pack3Only: return "pack3-only";
    case Strategy::Pack3PlusLut: return "pack3+lut";
    case Strategy::Pack4Only: return "pack4-only";
    case Strategy::Pack4PlusLut: return "pack4+lut";
  }
  return "?";
}

StrategyRule strategy_rule_from_string(std::string_view s) {
  if (s == "verbatim") return StrategyRule::Verbatim;
  if (s == "derived") return StrategyRule::Derived;
  throw std::invalid_argument("unknown strategy rule: " + std::string(s));
}

CostTable CostTable::defaults() {
  CostTable t;
  t.at(QuantMode::W4A6, Impl::Lut) = {33.3, 0.0};
  t.at(QuantMode::W4A6, Impl::Pack3) = {10.9, 0.33};
  t.at(QuantMode::W4A6, Impl::Pack4) = {12.9, 0.25};
  t.at(QuantMode::W8A6, Impl::Lut) = {66.7, 0.0};
  t.at(QuantMode::W8A6, Impl::Pack3) = {21.9, 0.67};
  t.at(QuantMode::W8A6, Impl::Pack4) = {25.8, 0.5};
  // The direct 8-bit unit has a single DSP implementation.
  t.at(QuantMode::W8A6Direct, Impl::Lut) = {62.2, 0.0};
  t.at(QuantMode::W8A6Direct, Impl::Pack3) = {21.5, 0.5};
  t.at(QuantMode::W8A6Direct, Impl::Pack4) = {21.5, 0.5};
  return t;
}

void CostTable::validate() const {
  for (auto mode : {QuantMode::W4A6, QuantMode::W8A6, QuantMode::W8A6Direct}) {
    const auto& lut = at(mode, Impl::Lut);
    if (!(lut.c_lut > 0.0) || lut.c_dsp != 0.0)
      throw std::invalid_argument("pure-LUT cost must be positive LUTs and zero DSPs");
    for (auto impl : {Impl::Pack3, Impl::Pack4}) {
      const auto& c = at(mode, impl);
      if (!(c.c_lut > 0.0) || !(c.c_dsp > 0.0))
        throw std::invalid_argument("DSP unit costs must be positive");
    }
  }
  for (auto mode : {QuantMode::W4A6, QuantMode::W8A6}) {
    const double c3 = at(mode, Impl::Pack3).c_lut;
    const double c4 = at(mode, Impl::Pack4).c_lut;
    const double cl = at(mode, Impl::Lut).c_lut;
    if (!(c3 < c4 && c4 < cl))
      throw std::invalid_argument("cost table violates LUT ordering pack3 < pack4 < pure-LUT for " +
                                  std::string(to_string(mode)));
  }
}

double multipliers_per_dsp(QuantMode mode, Impl impl) {
  if (impl == Impl::Lut) return 0.0;
  const bool four = impl == Impl::Pack4;
  switch (mode) {
    case QuantMode::W4A6: return four ? 4.0 : 3.0;
    case QuantMode::W8A6: return four ? 2.0 : 1.5;  // two 4-bit halves per weight
    case QuantMode::W8A6Direct: return 2.0;
  }
  return 0.0;
}

Impl ComputePlan::dsp_impl() const {
  return strategy == Strategy::Pack4Only || strategy == Strategy::Pack4PlusLut ? Impl::Pack4
                                                                                 : Impl::Pack3;
}

ComputePlan select_compute_strategy(const HardwareProfile& profile, const CostTable& costs,
                                    QuantMode mode, StrategyRule rule) {
  profile.validate();
  const double dsp = profile.dsp_budget();
  const double lut = profile.lut_budget();
  const double k3 = multipliers_per_dsp(mode, Impl::Pack3);
  const double k4 = multipliers_per_dsp(mode, Impl::Pack4);
  const UnitCost p3 = costs.at(mode, Impl::Pack3);
  const UnitCost p4 = costs.at(mode, Impl::Pack4);
  const double cl = costs.at(mode, Impl::Lut).c_lut;

  // Full DSP deployment, limited by both the packing factor and the DSP cost.
  auto dsp_cap = [&](double k, const UnitCost& c) {
    return std::min(floor_count(k * dsp), floor_count(dsp / c.c_dsp));
  };
  auto lut_capped = [&](double k, const UnitCost& c) {
    return std::min(dsp_cap(k, c), floor_count(lut / c.c_lut));
  };
  auto remaining_lut = [&](std::int64_t n_dsp, const UnitCost& c) {
    return floor_count((lut - static_cast<double>(n_dsp) * c.c_lut) / cl);
  };

  ComputePlan plan;
  plan.mode = mode;
  if (lut <= k3 * dsp * p3.c_lut) {
    plan.situation = 1;
    plan.strategy = Strategy::Pack3Only;
    plan.n_dsp = lut_capped(k3, p3);
  } else if (k4 * dsp * p4.c_lut <= lut) {
    plan.situation = 2;
    const double lhs = k4 * p4.c_lut - k3 * p3.c_lut;
    const bool pack4 = rule == StrategyRule::Verbatim ? lhs * dsp <= lut * cl : lhs <= (k4 - k3) * cl;
    plan.strategy = pack4 ? Strategy::Pack4PlusLut : Strategy::Pack3PlusLut;
    const UnitCost& c = pack4 ? p4 : p3;
    plan.n_dsp = dsp_cap(pack4 ? k4 : k3, c);
    plan.n_lut = remaining_lut(plan.n_dsp, c);
  } else {
    plan.situation = 3;
    const bool pack4 = (lut + k3 * dsp * (cl - p3.c_lut)) / cl <= lut / p4.c_lut;
    if (pack4) {
      plan.strategy = Strategy::Pack4Only;
      plan.n_dsp = lut_capped(k4, p4);
    } else {
      plan.strategy = Strategy::Pack3PlusLut;
      plan.n_dsp = dsp_cap(k3, p3);
      plan.n_lut = remaining_lut(plan.n_dsp, p3);
    }
  }
  plan.n_tot = plan.n_dsp + plan.n_lut;
  if (plan.n_tot <= 0) throw Error("infeasible profile");
  return plan;
}

ResourceUsage resource_report(const ComputePlan& plan, const HardwareProfile& profile,
                              const CostTable& costs) {
  const UnitCost c = costs.at(plan.mode, plan.dsp_impl());
  const double cl = costs.at(plan.mode, Impl::Lut).c_lut;
  ResourceUsage r;
  r.dsp_used = static_cast<double>(plan.n_dsp) * c.c_dsp;
  r.lut_used = static_cast<double>(plan.n_dsp) * c.c_lut + static_cast<double>(plan.n_lut) * cl;
  r.dsp_fraction = profile.s_dsp > 0 ? r.dsp_used / static_cast<double>(profile.s_dsp) : 0.0;
  r.lut_fraction = r.lut_used / static_cast<double>(profile.s_lut);
  return r;
}

bool plan_within_budget(const ComputePlan& plan, const HardwareProfile& profile,
                        const CostTable& costs, double tol) {
  const auto r = resource_report(plan, profile, costs);
  return plan.n_dsp >= 0 && plan.n_lut >= 0 && plan.n_tot == plan.n_dsp + plan.n_lut &&
         r.dsp_used <= profile.dsp_budget() + tol && r.lut_used <= profile.lut_budget() + tol;
}

void LayerShape::validate() const {
  if (m < 1 || n < 1 || f < 1 || n_h < 1) throw std::invalid_argument("layer dims must be positive");
  if (n % n_h != 0) throw std::invalid_argument("input channels not divisible by head count");
}

void TileConfig::validate(const LayerShape& shape) const {
  if (t_n < 1 || t_n > shape.head_inputs() || t_m < 1 || t_m > shape.m || p_f < 1 || p_f > shape.f)
    throw std::invalid_argument("tile outside layer bounds");
}

TileCycles tile_cycles(const LayerShape& shape, const TileConfig& tile,
                       const HardwareProfile& profile, const ComputePlan& plan) {
  TileCycles c;
  c.l_in = ceil_div(tile.t_n, profile.d_act) * ceil_div(shape.f, profile.axi_in);
  c.l_wgt = ceil_div(tile.t_n, profile.d_wgt) * ceil_div(tile.t_m, profile.axi_wgt);
  c.l_out = ceil_div(tile.t_m, profile.d_act) * ceil_div(shape.f, profile.axi_out);
  c.l_cmpt = std::max(ceil_div(shape.f, tile.p_f), ceil_div(tile.t_n * tile.t_m * shape.f, plan.n_tot));
  return c;
}

LayerCycles layer_cycles_detail(const LayerShape& shape, const TileConfig& tile,
                                const HardwareProfile& profile, const ComputePlan& plan) {
  shape.validate();
  tile.validate(shape);
  LayerCycles r;
  r.tile = tile_cycles(shape, tile, profile, plan);
  r.l1 = std::max({r.tile.l_in, r.tile.l_wgt, r.tile.l_cmpt});
  r.l2 = std::max(r.l1 * ceil_div(shape.head_inputs(), tile.t_n) + r.tile.l_cmpt, r.tile.l_out);
  r.per_head = ceil_div(shape.m, tile.t_m) * r.l2 + r.tile.l_out;
  r.total = r.per_head * shape.n_h;
  return r;
}

std::int64_t layer_cycles(const LayerShape& shape, const TileConfig& tile,
                          const HardwareProfile& profile, const ComputePlan& plan) {
  return layer_cycles_detail(shape, tile, profile, plan).total;
}

std::vector<std::int64_t> tile_grid(std::int64_t dim) {
  std::vector<std::int64_t> g;
  for (std::int64_t v = 1; v < dim; v *= 2) g.push_back(v);
  g.push_back(dim);
  return g;
}

TileConfig auto_tile(const LayerShape& shape, const HardwareProfile& profile,
                     const ComputePlan& plan) {
  shape.validate();
  TileConfig best;
  std::int64_t best_cycles = -1;
  for (auto t_n : tile_grid(shape.head_inputs()))
    for (auto t_m : tile_grid(shape.m))
      for (auto p_f : tile_grid(shape.f)) {
        const TileConfig t{t_n, t_m, p_f};
        const auto c = layer_cycles(shape, t, profile, plan);
        if (best_cycles < 0 || c < best_cycles || (c == best_cycles && t < best)) {
          best = t;
          best_cycles = c;
        }
      }
  return best;
}

std::vector<HwLayer> expand_layers(const SubnetConfig& config, const ModelMeta& meta, int heads) {
  if (config.layers.empty()) throw Error("empty model");
  if (heads < 1) throw std::invalid_argument("heads must be positive");
  const std::int64_t e = config.embed_dim;
  const std::int64_t f = meta.tokens;
  auto effective = [](std::int64_t m, double rho) {
    return m + w8_row_count(static_cast<int>(m), rho);
  };

  std::vector<HwLayer> out;
  out.push_back({"embed", {2 * e, meta.token_dim, f, 1}});
  for (std::size_t b = 0; b < config.layers.size(); ++b) {
    const auto& l = config.layers[b];
    const std::int64_t h = l.hidden_dim;
    const std::int64_t mlp = l.mlp_dim(config.embed_dim);
    if (h % heads != 0) throw std::invalid_argument("hidden dim not divisible by head count");
    const std::string p = "block" + std::to_string(b) + ".";
    out.push_back({p + "qkv", {effective(3 * h, l.mixed_ratio), e, f, 1}});
    out.push_back({p + "attn_score", {2 * f, h, f, heads}});
    out.push_back({p + "attn_value", {2 * (h / heads), f * heads, f, heads}});
    out.push_back({p + "proj", {effective(e, l.mixed_ratio), h, f, 1}});
    out.push_back({p + "mlp1", {effective(mlp, l.mixed_ratio), e, f, 1}});
    out.push_back({p + "mlp2", {effective(e, l.mixed_ratio), mlp, f, 1}});
  }
  out.push_back({"head", {2 * static_cast<std::int64_t>(meta.num_classes), e, 1, 1}});
  return out;
}

TileConfig TilePlan::resolve(const HwLayer& layer, const HardwareProfile& profile,
                             const ComputePlan& plan) const {
  if (auto it = per_layer.find(layer.name); it != per_layer.end()) return it->second;
  if (default_tile && !auto_tune) {
    return {std::min(default_tile->t_n, layer.shape.head_inputs()),
            std::min(default_tile->t_m, layer.shape.m), std::min(default_tile->p_f, layer.shape.f)};
  }
  return auto_tile(layer.shape, profile, plan);
}

FpsEstimate estimate_fps(const std::vector<HwLayer>& layers, const HardwareProfile& profile,
                         const CostTable& costs, const TilePlan& tiles, StrategyRule rule) {
  if (layers.empty()) throw Error("empty model");
  FpsEstimate est;
  est.plan = select_compute_strategy(profile, costs, QuantMode::W4A6, rule);
  est.resources = resource_report(est.plan, profile, costs);
  for (const auto& layer : layers) {
    LayerEstimate le{layer.name, layer.shape, tiles.resolve(layer, profile, est.plan), {}};
    le.cycles = layer_cycles_detail(layer.shape, le.tile, profile, est.plan);
    est.total_cycles += le.cycles.total;
    est.layers.push_back(std::move(le));
  }
  est.fps = profile.freq_hz / static_cast<double>(est.total_cycles);
  return est;
}

}  // namespace hwvit::hw
