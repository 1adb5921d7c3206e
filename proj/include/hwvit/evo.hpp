#pragma once

// Hardware-constrained evolutionary search over subnet configurations.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hwvit/arch.hpp"
#include "hwvit/hw_model.hpp"
#include "hwvit/random.hpp"

namespace hwvit::evo {

struct EvoParams {
  int population_size = 50;
  int generations = 20;
  int top_k = 10;
  double p_d = 0.2;
  double p_m = 0.4;
  double target_fps = 0.0;
  std::uint64_t seed = 0;
  int max_init_attempts = 100000;
  /// Child proposals per generation, as a multiple of the population size.
  int child_attempt_factor = 100;
  int jobs = 1;

  void validate() const;
};

struct Candidate {
  SubnetConfig config;
  double fitness = 0.0;
  double fps = 0.0;
  bool feasible = false;
};

/// Hardware verdict for one configuration, independent of the FPS target.
struct HwCheck {
  double fps = 0.0;
  bool resources_ok = false;
};

using FitnessFn = std::function<double(const SubnetConfig&)>;
using HwFn = std::function<HwCheck(const SubnetConfig&)>;

struct HwContext {
  hw::HardwareProfile profile;
  hw::CostTable costs = hw::CostTable::defaults();
  hw::TilePlan tiles;
  hw::StrategyRule rule = hw::StrategyRule::Verbatim;
  ModelMeta meta;
  int heads = 4;
};

HwCheck check_hardware(const SubnetConfig& c, const HwContext& ctx);
HwFn hardware_fn(HwContext ctx);

/// Fitness descending, then FPS descending, then config key.
bool ranks_before(const Candidate& a, const Candidate& b);

SubnetConfig crossover(const SubnetConfig& p1, const SubnetConfig& p2, Rng& rng);
SubnetConfig mutate(const SubnetConfig& c, const SearchSpace& space, const EvoParams& params, Rng& rng);

/// Distinct feasible samples, unevaluated. Throws Error("constraint too tight")
/// when the attempt budget runs out.
std::vector<Candidate> init_population(const SearchSpace& space, const EvoParams& params,
                                       const HwFn& hw, Rng& rng);

struct GenerationStats {
  int generation = 0;
  double best_fitness = 0.0;
  double best_fps = 0.0;
  double mean_fitness = 0.0;
  std::string best_key;
  int evaluated = 0;   // new fitness evaluations this generation
  int rejected = 0;    // children discarded as infeasible
};

struct SearchResult {
  std::vector<Candidate> population;  // ranked
  std::vector<GenerationStats> history;
  int evaluations = 0;
};

/// Generation 0 is the initial population; each later generation keeps the
/// top_k candidates and refills the rest with feasible, unseen children.
SearchResult evolve(const SearchSpace& space, const EvoParams& params, const FitnessFn& fitness,
                    const HwFn& hw);

}  // namespace hwvit::evo
