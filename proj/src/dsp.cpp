#include "hwvit/dsp.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace hwvit::dsp {

std::int64_t wrap_signed(std::int64_t v, int bits) {
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  const std::uint64_t u = static_cast<std::uint64_t>(v) & mask;
  const std::uint64_t sign = std::uint64_t{1} << (bits - 1);
  return static_cast<std::int64_t>(u ^ sign) - static_cast<std::int64_t>(sign);
}

namespace {

bool fits_signed(std::int64_t v, int bits) {
  const std::int64_t lo = -(std::int64_t{1} << (bits - 1));
  const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1;
  return v >= lo && v <= hi;
}

void check_weight(int w, LaneSign sign) {
  const bool ok = sign == LaneSign::Signed ? (w >= -8 && w <= 7) : (w >= 0 && w <= 15);
  if (!ok) throw std::out_of_range("4-bit weight lane value out of range");
}

void check_activation(std::int64_t a) {
  if (a < kActMin || a > kActMax) throw std::out_of_range("6-bit activation out of range");
}

}  // namespace

DspOperands::DspOperands(std::int64_t a, std::int64_t d, std::int64_t b) : a_(a), d_(d), b_(b) {
  if (!fits_signed(a, kPortADBits)) throw std::out_of_range("DSP port A exceeds 27 bits");
  if (!fits_signed(d, kPortADBits)) throw std::out_of_range("DSP port D exceeds 27 bits");
  if (!fits_signed(b, kPortBBits)) throw std::out_of_range("DSP port B exceeds 18 bits");
}

DspProduct dsp48_mac(const DspOperands& ops) {
  const std::int64_t pre = wrap_signed(ops.a() + ops.d(), kPortADBits);
  return {wrap_signed(pre * ops.b(), kProductBits)};
}

void LaneLayout::validate(int port_bits) const {
  if (lane_width < 2) throw std::invalid_argument("lane width too small");
  if (offsets.size() != signedness.size() && !signedness.empty())
    throw std::invalid_argument("one signedness entry per lane required");
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    if (offsets[k] < 0 || offsets[k] + lane_width > port_bits)
      throw std::invalid_argument("lane exceeds port width");
    if (k > 0 && offsets[k] < offsets[k - 1] + lane_width)
      throw std::invalid_argument("lanes overlap");
  }
}

LaneLayout LaneLayout::pack3(std::array<LaneSign, 3> sign, int lane_width) {
  LaneLayout l{lane_width, {0, lane_width, 2 * lane_width}, {sign.begin(), sign.end()}};
  l.validate();
  return l;
}

LaneLayout LaneLayout::pack4(std::array<LaneSign, 2> weight_sign, int lane_width) {
  // Lanes 0..3 hold a0*w0, a0*w1, a1*w0, a1*w1.
  LaneLayout l{lane_width,
               {0, lane_width, 2 * lane_width, 3 * lane_width},
               {weight_sign[0], weight_sign[1], weight_sign[0], weight_sign[1]}};
  l.validate();
  return l;
}

template <std::size_t N>
Unpacked<N> unpack_lanes(std::int64_t packed, const LaneLayout& layout) {
  if (layout.offsets.size() != N) throw std::invalid_argument("layout lane count mismatch");
  const int w = layout.lane_width;
  const std::int64_t mask = (std::int64_t{1} << w) - 1;
  Unpacked<N> out;
  // `rest` is the packed value with all lanes below the current one removed,
  // including their borrows.
  std::int64_t rest = packed >> layout.offsets[0];
  for (std::size_t k = 0; k < N; ++k) {
    const std::int64_t v = wrap_signed(rest & mask, w);
    out.values[k] = v;
    out.borrowed[k] = v < 0;
    if (k + 1 < N) {
      const int step = layout.offsets[k + 1] - layout.offsets[k];
      rest = (rest >> step) + (v < 0 ? 1 : 0);
    }
  }
  return out;
}

template Unpacked<3> unpack_lanes<3>(std::int64_t, const LaneLayout&);
template Unpacked<4> unpack_lanes<4>(std::int64_t, const LaneLayout&);
template Unpacked<2> unpack_lanes<2>(std::int64_t, const LaneLayout&);

DspOperands pack3(std::array<int, 3> weights, int activation, const LaneLayout& layout) {
  if (layout.offsets.size() != 3 || layout.signedness.size() != 3)
    throw std::invalid_argument("pack3 needs a three-lane layout");
  check_activation(activation);
  std::int64_t d = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    check_weight(weights[k], layout.signedness[k]);
    // Signed lanes are sign-extended into the lanes above; unsigned lanes
    // contribute only their four bits.
    const std::int64_t lane = layout.signedness[k] == LaneSign::Signed
                                  ? std::int64_t{weights[k]}
                                  : std::int64_t{weights[k] & 0xF};
    d += lane * (std::int64_t{1} << layout.offsets[k]);
  }
  return DspOperands(0, d, activation);
}

Unpacked<3> unpack3(DspProduct p, const LaneLayout& layout) { return unpack_lanes<3>(p.p, layout); }

DspOperands pack4(std::array<int, 2> activations, std::array<int, 2> weights,
                  const LaneLayout& layout) {
  if (layout.offsets.size() != 4 || layout.signedness.size() != 4)
    throw std::invalid_argument("pack4 needs a four-lane layout");
  const int w = layout.lane_width;
  for (int a : activations) check_activation(a);
  check_weight(weights[0], layout.signedness[0]);
  check_weight(weights[1], layout.signedness[1]);
  const std::int64_t d = activations[0] + activations[1] * (std::int64_t{1} << (2 * w));
  const std::int64_t b = weights[0] + weights[1] * (std::int64_t{1} << w);
  return DspOperands(0, d, b);
}

std::array<std::array<std::int64_t, 2>, 2> unpack4(DspProduct p, const LaneLayout& layout) {
  const auto u = unpack_lanes<4>(p.p, layout);
  return {{{u.values[0], u.values[1]}, {u.values[2], u.values[3]}}};
}

namespace {

void check_dot_inputs(std::span<const std::int32_t> act, std::span<const std::int32_t> wgt) {
  if (act.size() != wgt.size()) throw std::invalid_argument("activation/weight length mismatch");
}

}  // namespace

std::int64_t packed_dot_w8(std::span<const std::int32_t> act, std::span<const std::int32_t> wgt,
                           PackingFactor factor) {
  check_dot_inputs(act, wgt);
  std::int64_t acc = 0;
  if (factor == PackingFactor::Three) {
    // One DSP per element: lanes {high (signed), low (unsigned), empty}.
    static const LaneLayout hybrid =
        LaneLayout::pack3({LaneSign::Signed, LaneSign::Unsigned, LaneSign::Unsigned});
    for (std::size_t j = 0; j < act.size(); ++j) {
      const NibblePair n = decompose_w8(wgt[j]);
      const auto lanes = unpack3(dsp48_mac(pack3({n.high, n.low, 0}, act[j], hybrid)), hybrid);
      acc += lanes.values[0] * 16 + lanes.values[1];
    }
    return acc;
  }
  // Two DSPs per element pair: high nibbles through signed weight lanes, low
  // nibbles through unsigned ones. Only the diagonal products are used.
  static const LaneLayout high_layout = LaneLayout::pack4({LaneSign::Signed, LaneSign::Signed});
  static const LaneLayout low_layout = LaneLayout::pack4({LaneSign::Unsigned, LaneSign::Unsigned});
  for (std::size_t j = 0; j < act.size(); j += 2) {
    const bool pair = j + 1 < act.size();
    const std::array<int, 2> a{act[j], pair ? act[j + 1] : 0};
    const NibblePair n0 = decompose_w8(wgt[j]);
    const NibblePair n1 = pair ? decompose_w8(wgt[j + 1]) : NibblePair{0, 0};
    const auto hi = unpack4(dsp48_mac(pack4(a, {n0.high, n1.high}, high_layout)), high_layout);
    const auto lo = unpack4(dsp48_mac(pack4(a, {n0.low, n1.low}, low_layout)), low_layout);
    acc += (hi[0][0] + hi[1][1]) * 16 + lo[0][0] + lo[1][1];
  }
  return acc;
}

IntMatrix packed_gemm(const QuantizedMatrix& q, const Eigen::Ref<const CodeMatrix>& act,
                      PackingFactor factor) {
  if (static_cast<Eigen::Index>(q.cols()) != act.rows())
    throw std::invalid_argument("packed_gemm: weight columns must match activation rows");
  for (Eigen::Index i = 0; i < act.size(); ++i) {
    const std::int32_t v = act.data()[i];
    if (v < kActMin || v > kActMax)
      throw std::out_of_range("packed_gemm: activation code outside the 6-bit range");
  }
  const auto rows = static_cast<Eigen::Index>(q.rows());
  const Eigen::Index n = act.rows();
  const Eigen::Index f_count = act.cols();
  IntMatrix out = IntMatrix::Zero(rows, f_count);

  std::vector<Eigen::Index> w4_rows;
  std::vector<Eigen::Index> w8_rows;
  for (Eigen::Index i = 0; i < rows; ++i)
    (q.tags()[std::size_t(i)] == Precision::W4 ? w4_rows : w8_rows).push_back(i);

  auto weight = [&](Eigen::Index row, Eigen::Index j) {
    return row < 0 ? 0 : int{q.code(std::size_t(row), std::size_t(j))};
  };

  if (factor == PackingFactor::Three) {
    const LaneLayout layout = LaneLayout::pack3();
    for (std::size_t g = 0; g < w4_rows.size(); g += 3) {
      const std::array<Eigen::Index, 3> r{w4_rows[g], g + 1 < w4_rows.size() ? w4_rows[g + 1] : -1,
                                          g + 2 < w4_rows.size() ? w4_rows[g + 2] : -1};
      for (Eigen::Index j = 0; j < n; ++j) {
        const std::array<int, 3> w{weight(r[0], j), weight(r[1], j), weight(r[2], j)};
        for (Eigen::Index f = 0; f < f_count; ++f) {
          const auto lanes = unpack3(dsp48_mac(pack3(w, act(j, f), layout)), layout);
          for (std::size_t k = 0; k < 3; ++k)
            if (r[k] >= 0) out(r[k], f) += lanes.values[k];
        }
      }
    }
  } else {
    const LaneLayout layout = LaneLayout::pack4();
    for (std::size_t g = 0; g < w4_rows.size(); g += 2) {
      const std::array<Eigen::Index, 2> r{w4_rows[g], g + 1 < w4_rows.size() ? w4_rows[g + 1] : -1};
      for (Eigen::Index j = 0; j < n; ++j) {
        const std::array<int, 2> w{weight(r[0], j), weight(r[1], j)};
        for (Eigen::Index f = 0; f < f_count; f += 2) {
          const bool pair = f + 1 < f_count;
          const std::array<int, 2> a{act(j, f), pair ? act(j, f + 1) : 0};
          const auto prod = unpack4(dsp48_mac(pack4(a, w, layout)), layout);
          for (std::size_t wi = 0; wi < 2; ++wi) {
            if (r[wi] < 0) continue;
            out(r[wi], f) += prod[0][wi];
            if (pair) out(r[wi], f + 1) += prod[1][wi];
          }
        }
      }
    }
  }

  if (!w8_rows.empty()) {
    std::vector<std::int32_t> column(static_cast<std::size_t>(n));
    std::vector<std::int32_t> row_codes(static_cast<std::size_t>(n));
    for (Eigen::Index f = 0; f < f_count; ++f) {
      for (Eigen::Index j = 0; j < n; ++j) column[std::size_t(j)] = act(j, f);
      for (Eigen::Index i : w8_rows) {
        const auto codes = q.row_codes(std::size_t(i));
        std::copy(codes.begin(), codes.end(), row_codes.begin());
        out(i, f) = packed_dot_w8(column, row_codes, factor);
      }
    }
  }
  return out;
}

namespace {

// Runs `body(outer, report)` for outer in [0, outer_count), partitioned over
// `jobs` threads; reports are merged in outer-index order so the first failure
// is deterministic.
SweepReport run_sweep(std::string name, int outer_count, int jobs,
                      const std::function<void(int, SweepReport&)>& body) {
  jobs = std::clamp(jobs, 1, outer_count);
  std::vector<SweepReport> parts(static_cast<std::size_t>(outer_count));
  auto worker = [&](int first) {
    for (int o = first; o < outer_count; o += jobs) body(o, parts[std::size_t(o)]);
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker, t);
  }
  SweepReport total;
  total.name = std::move(name);
  for (auto& p : parts) {
    total.cases += p.cases;
    total.failures += p.failures;
    if (!total.first_failure && p.first_failure) total.first_failure = p.first_failure;
  }
  return total;
}

void record_failure(SweepReport& r, const std::string& what) {
  ++r.failures;
  if (!r.first_failure) r.first_failure = what;
}

}  // namespace

SweepReport sweep_pack3(int lane_width, int jobs) {
  const LaneLayout layout = LaneLayout::pack3({LaneSign::Signed, LaneSign::Signed, LaneSign::Signed},
                                              lane_width);
  return run_sweep("pack3", 16, jobs, [&](int o, SweepReport& r) {
    const int w0 = o - 8;
    for (int w1 = -8; w1 <= 7; ++w1)
      for (int w2 = -8; w2 <= 7; ++w2)
        for (int a = kActMin; a <= kActMax; ++a) {
          ++r.cases;
          bool ok = false;
          try {
            const auto u = unpack3(dsp48_mac(pack3({w0, w1, w2}, a, layout)), layout);
            ok = u.values[0] == w0 * a && u.values[1] == w1 * a && u.values[2] == w2 * a;
          } catch (const std::exception&) {
            ok = false;
          }
          if (!ok) {
            std::ostringstream os;
            os << "w=[" << w0 << "," << w1 << "," << w2 << "] a=" << a;
            record_failure(r, os.str());
          }
        }
  });
}

SweepReport sweep_pack4(int lane_width, int jobs) {
  const LaneLayout layout = LaneLayout::pack4({LaneSign::Signed, LaneSign::Signed}, lane_width);
  return run_sweep("pack4", 16, jobs, [&](int o, SweepReport& r) {
    const int w0 = o - 8;
    for (int w1 = -8; w1 <= 7; ++w1)
      for (int a0 = kActMin; a0 <= kActMax; ++a0)
        for (int a1 = kActMin; a1 <= kActMax; ++a1) {
          ++r.cases;
          bool ok = false;
          try {
            const auto p = unpack4(dsp48_mac(pack4({a0, a1}, {w0, w1}, layout)), layout);
            ok = p[0][0] == a0 * w0 && p[0][1] == a0 * w1 && p[1][0] == a1 * w0 &&
                 p[1][1] == a1 * w1;
          } catch (const std::exception&) {
            ok = false;
          }
          if (!ok) {
            std::ostringstream os;
            os << "a=[" << a0 << "," << a1 << "] w=[" << w0 << "," << w1 << "]";
            record_failure(r, os.str());
          }
        }
  });
}

SweepReport sweep_w8(int lane_width, int jobs) {
  const LaneLayout layout =
      LaneLayout::pack3({LaneSign::Signed, LaneSign::Unsigned, LaneSign::Unsigned}, lane_width);
  return run_sweep("w8", 256, jobs, [&](int o, SweepReport& r) {
    const int w = o - 128;
    const NibblePair n = decompose_w8(w);
    for (int a = kActMin; a <= kActMax; ++a) {
      ++r.cases;
      bool ok = false;
      try {
        const auto u = unpack3(dsp48_mac(pack3({n.high, n.low, 0}, a, layout)), layout);
        ok = n.recombine() == w && u.values[0] * 16 + u.values[1] == std::int64_t{a} * w;
      } catch (const std::exception&) {
        ok = false;
      }
      if (!ok) {
        std::ostringstream os;
        os << "w8=" << w << " a=" << a;
        record_failure(r, os.str());
      }
    }
  });
}

}  // namespace hwvit::dsp
