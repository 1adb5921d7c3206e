#include "hwvit/evo.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "hwvit/common.hpp"

namespace hwvit::evo {

void EvoParams::validate() const {
  if (population_size < 1 || generations < 0) throw std::invalid_argument("invalid population or generations");
  if (top_k < 1 || top_k > population_size) throw std::invalid_argument("top_k must lie in [1, population_size]");
  if (!(p_d >= 0.0 && p_d <= 1.0) || !(p_m >= 0.0 && p_m <= 1.0))
    throw std::invalid_argument("mutation probabilities must lie in [0, 1]");
  if (!(target_fps >= 0.0)) throw std::invalid_argument("target fps must be non-negative");
  if (max_init_attempts < 1 || child_attempt_factor < 1 || jobs < 1)
    throw std::invalid_argument("attempt budgets and jobs must be positive");
}

HwCheck check_hardware(const SubnetConfig& c, const HwContext& ctx) {
  const auto est = hw::estimate_fps(hw::expand_layers(c, ctx.meta, ctx.heads), ctx.profile, ctx.costs,
                                    ctx.tiles, ctx.rule);
  return HwCheck{est.fps, hw::plan_within_budget(est.plan, ctx.profile, ctx.costs)};
}

HwFn hardware_fn(HwContext ctx) {
  return [ctx = std::move(ctx)](const SubnetConfig& c) { return check_hardware(c, ctx); };
}

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.fitness != b.fitness) return a.fitness > b.fitness;
  if (a.fps != b.fps) return a.fps > b.fps;
  return a.config.key() < b.config.key();
}

SubnetConfig crossover(const SubnetConfig& p1, const SubnetConfig& p2, Rng& rng) {
  SubnetConfig child;
  child.embed_dim = uniform_index(rng, 2) == 0 ? p1.embed_dim : p2.embed_dim;
  const int depth = uniform_index(rng, 2) == 0 ? p1.depth() : p2.depth();
  for (int i = 0; i < depth; ++i) {
    const auto k = std::size_t(i);
    const bool in1 = i < p1.depth();
    const bool in2 = i < p2.depth();
    if (in1 && in2)
      child.layers.push_back(uniform_index(rng, 2) == 0 ? p1.layers[k] : p2.layers[k]);
    else
      child.layers.push_back(in1 ? p1.layers[k] : p2.layers[k]);
  }
  return child;
}

SubnetConfig mutate(const SubnetConfig& c, const SearchSpace& space, const EvoParams& params, Rng& rng) {
  SubnetConfig out = c;
  if (uniform01(rng) < params.p_d) {
    const int depth = space.depths[uniform_index(rng, space.depths.size())];
    while (out.depth() < depth) out.layers.push_back(sample_layer(space, rng));
    out.layers.resize(std::size_t(depth));
  }
  if (uniform01(rng) < params.p_m) out.embed_dim = space.embed_dims[uniform_index(rng, space.embed_dims.size())];
  for (auto& l : out.layers)
    if (uniform01(rng) < params.p_m) l = sample_layer(space, rng);
  return out;
}

namespace {

Candidate make_candidate(const SubnetConfig& c, const HwCheck& h, double target_fps) {
  return Candidate{c, 0.0, h.fps, h.resources_ok && h.fps >= target_fps};
}

std::vector<double> evaluate_all(const std::vector<SubnetConfig>& configs, const FitnessFn& fitness, int jobs) {
  std::vector<double> out(configs.size());
  const auto workers = std::min<std::size_t>(std::size_t(jobs), configs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) out[i] = fitness(configs[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < configs.size();) {
        try {
          out[i] = fitness(configs[i]);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

GenerationStats summarize(int generation, const std::vector<Candidate>& ranked, int evaluated, int rejected) {
  GenerationStats s;
  s.generation = generation;
  s.evaluated = evaluated;
  s.rejected = rejected;
  if (ranked.empty()) return s;
  s.best_fitness = ranked.front().fitness;
  s.best_fps = ranked.front().fps;
  s.best_key = ranked.front().config.key();
  for (const auto& c : ranked) s.mean_fitness += c.fitness / double(ranked.size());
  return s;
}

}  // namespace

std::vector<Candidate> init_population(const SearchSpace& space, const EvoParams& params,
                                       const HwFn& hw, Rng& rng) {
  std::vector<Candidate> pop;
  std::set<std::string> keys;
  for (int attempt = 0; int(pop.size()) < params.population_size; ++attempt) {
    if (attempt >= params.max_init_attempts) throw Error("constraint too tight");
    auto c = sample_subnet(space, rng);
    if (keys.contains(c.key())) continue;
    auto cand = make_candidate(c, hw(c), params.target_fps);
    if (!cand.feasible) continue;
    keys.insert(c.key());
    pop.push_back(std::move(cand));
  }
  return pop;
}

SearchResult evolve(const SearchSpace& space, const EvoParams& params, const FitnessFn& fitness,
                    const HwFn& hw) {
  space.validate();
  params.validate();
  Rng rng(params.seed);
  SearchResult result;
  std::map<std::string, double> cache;

  // Evaluates unseen configs in parallel, then fills every candidate's fitness.
  auto score = [&](std::vector<Candidate>& cands) {
    std::vector<SubnetConfig> todo;
    std::set<std::string> queued;
    for (const auto& c : cands) {
      const auto key = c.config.key();
      if (!cache.contains(key) && queued.insert(key).second) todo.push_back(c.config);
    }
    const auto values = evaluate_all(todo, fitness, params.jobs);
    for (std::size_t i = 0; i < todo.size(); ++i) cache[todo[i].key()] = values[i];
    for (auto& c : cands) c.fitness = cache.at(c.config.key());
    result.evaluations += int(todo.size());
    return int(todo.size());
  };

  auto pop = init_population(space, params, hw, rng);
  int evaluated = score(pop);
  std::sort(pop.begin(), pop.end(), ranks_before);
  result.history.push_back(summarize(0, pop, evaluated, 0));

  for (int gen = 1; gen <= params.generations; ++gen) {
    const auto n_elite = std::min<std::size_t>(std::size_t(params.top_k), pop.size());
    std::vector<Candidate> next(pop.begin(), pop.begin() + std::ptrdiff_t(n_elite));
    std::set<std::string> keys;
    for (const auto& c : next) keys.insert(c.config.key());

    std::vector<Candidate> children;
    const auto needed = std::size_t(params.population_size) - n_elite;
    const long max_attempts = long(params.child_attempt_factor) * params.population_size;
    int rejected = 0;
    for (long attempt = 0; children.size() < needed && attempt < max_attempts; ++attempt) {
      SubnetConfig child;
      if (attempt % 2 == 0) {
        const auto i = uniform_index(rng, n_elite);
        auto j = uniform_index(rng, n_elite);
        if (n_elite > 1)
          while (j == i) j = uniform_index(rng, n_elite);
        child = crossover(next[i].config, next[j].config, rng);
      } else {
        child = mutate(next[uniform_index(rng, n_elite)].config, space, params, rng);
      }
      const auto key = child.key();
      if (keys.contains(key)) continue;
      auto cand = make_candidate(child, hw(child), params.target_fps);
      if (!cand.feasible) {
        ++rejected;
        continue;
      }
      keys.insert(key);
      children.push_back(std::move(cand));
    }
    evaluated = score(children);
    next.insert(next.end(), children.begin(), children.end());
    std::sort(next.begin(), next.end(), ranks_before);
    pop = std::move(next);
    result.history.push_back(summarize(gen, pop, evaluated, rejected));
  }
  result.population = std::move(pop);
  return result;
}

}  // namespace hwvit::evo
