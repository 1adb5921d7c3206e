#pragma once

#include "hwvit/arch.hpp"

namespace toy {

inline hwvit::SearchSpace space() {
  hwvit::SearchSpace s;
  s.embed_dims = {16, 24, 32};
  s.hidden_dims = {16, 32};
  s.mixed_ratios = {0.0, 0.25, 0.5};
  s.expansion_ratios = {2.0, 4.0};
  s.depths = {1, 2, 3};
  s.heads = 2;
  return s;
}

}  // namespace toy
