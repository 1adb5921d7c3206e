#pragma once

// Lock-step event simulation of the tiled GEMM engine, written without the
// closed-form cycle formulas. Every transfer and compute phase is counted
// beat by beat; stages advance when all engines busy in that stage finish.
// Partial edge tiles occupy full-size buffers.

#include <algorithm>
#include <cstdint>

namespace oracle {

struct SimProfile {
  std::int64_t axi_in, axi_wgt, axi_out, d_act, d_wgt, n_tot;
};

struct SimShape {
  std::int64_t m, n, f, n_h;
};

struct SimTile {
  std::int64_t t_n, t_m, p_f;
};

// Beats to move a rows x cols block where each beat carries `per_word`
// values along rows on each of `ports` parallel ports along cols.
inline std::int64_t transfer_beats(std::int64_t rows, std::int64_t per_word, std::int64_t cols,
                                   std::int64_t ports) {
  std::int64_t beats = 0;
  for (std::int64_t c = 0; c < cols; c += ports)
    for (std::int64_t r = 0; r < rows; r += per_word) ++beats;
  return beats;
}

// Token groups of p_f issue one per cycle, but never more than n_tot
// multiplications complete per cycle.
inline std::int64_t compute_beats(const SimTile& t, std::int64_t f, std::int64_t n_tot) {
  std::int64_t token_cycles = 0;
  for (std::int64_t tok = 0; tok < f; tok += t.p_f) ++token_cycles;
  std::int64_t mult_cycles = 0;
  for (std::int64_t left = t.t_n * t.t_m * f; left > 0; left -= n_tot) ++mult_cycles;
  return std::max(token_cycles, mult_cycles);
}

inline std::int64_t simulate_layer(const SimShape& s, const SimTile& t, const SimProfile& p) {
  const std::int64_t in_beats = transfer_beats(t.t_n, p.d_act, s.f, p.axi_in);
  const std::int64_t wgt_beats = transfer_beats(t.t_n, p.d_wgt, t.t_m, p.axi_wgt);
  const std::int64_t out_beats = transfer_beats(t.t_m, p.d_act, s.f, p.axi_out);
  const std::int64_t cmpt_beats = compute_beats(t, s.f, p.n_tot);
  const std::int64_t inputs = s.n / s.n_h;

  std::int64_t clock = 0;
  for (std::int64_t head = 0; head < s.n_h; ++head) {
    for (std::int64_t m0 = 0; m0 < s.m; m0 += t.t_m) {
      // Inner pipeline for one output tile, overlapped with the store slot of
      // the previous output tile (the first slot is idle but still timed, as
      // stages are lock-step).
      const std::int64_t tile_start = clock;
      std::int64_t t_inner = tile_start;
      for (std::int64_t n0 = 0; n0 < inputs; n0 += t.t_n) {
        // Stage: load tile n0 while computing the previously loaded tile
        // (the first stage times an idle compute slot as well).
        const std::int64_t in_end = t_inner + in_beats;
        const std::int64_t wgt_end = t_inner + wgt_beats;
        const std::int64_t cmpt_end = t_inner + cmpt_beats;
        t_inner = std::max({in_end, wgt_end, cmpt_end});
      }
      t_inner += cmpt_beats;  // drain the last loaded tile
      clock = std::max(t_inner, tile_start + out_beats);
    }
    clock += out_beats;  // final store
  }
  return clock;
}

}  // namespace oracle
