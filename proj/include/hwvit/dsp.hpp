#pragma once

// Bit-exact emulation of a DSP48E2 multiplier, P = (A + D) * B, with 27-bit
// A/D ports, an 18-bit B port and a 45-bit product, plus the two low-bit
// packing schemes built on it:
//
//   pack3: three 4-bit weights in D share one 6-bit activation in B.
//   pack4: two 6-bit activations in D and two 4-bit weights in B yield four
//          cross products.
//
// Products land in fixed-width lanes of P. A negative lane borrows one from
// the lane above it; unpacking walks the lanes from the bottom and adds the
// borrow back before interpreting the next lane.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hwvit/common.hpp"
#include "hwvit/quant.hpp"

namespace hwvit::dsp {

inline constexpr int kPortADBits = 27;
inline constexpr int kPortBBits = 18;
inline constexpr int kProductBits = 45;

/// Wraps `v` to a `bits`-wide two's-complement value.
std::int64_t wrap_signed(std::int64_t v, int bits);

class DspOperands {
 public:
  /// Throws std::out_of_range when a port value does not fit its width.
  DspOperands(std::int64_t a, std::int64_t d, std::int64_t b);

  std::int64_t a() const { return a_; }
  std::int64_t d() const { return d_; }
  std::int64_t b() const { return b_; }

 private:
  std::int64_t a_;
  std::int64_t d_;
  std::int64_t b_;
};

struct DspProduct {
  std::int64_t p = 0;
};

DspProduct dsp48_mac(const DspOperands& ops);

enum class LaneSign : std::uint8_t { Signed, Unsigned };

/// Lane geometry of one packed port or product. Lanes are `lane_width` bits
/// wide; the signedness describes the weight operand held in the lane.
struct LaneLayout {
  int lane_width = 11;
  std::vector<int> offsets;
  std::vector<LaneSign> signedness;

  void validate(int port_bits = kProductBits) const;

  static LaneLayout pack3(std::array<LaneSign, 3> sign = {LaneSign::Signed, LaneSign::Signed,
                                                          LaneSign::Signed},
                          int lane_width = 11);
  /// Product lanes of the 2x2 scheme: offsets {0, w, 2w, 3w}.
  static LaneLayout pack4(std::array<LaneSign, 2> weight_sign = {LaneSign::Signed,
                                                                 LaneSign::Signed},
                          int lane_width = 10);
};

inline constexpr int kActMin = -32;
inline constexpr int kActMax = 31;

template <std::size_t N>
struct Unpacked {
  std::array<std::int64_t, N> values{};
  // Lane k was negative and borrowed one from lane k + 1.
  std::array<bool, N> borrowed{};
};

/// Splits a packed value into lanes with the borrow correction applied.
template <std::size_t N>
Unpacked<N> unpack_lanes(std::int64_t packed, const LaneLayout& layout);

DspOperands pack3(std::array<int, 3> weights, int activation,
                  const LaneLayout& layout = LaneLayout::pack3());
Unpacked<3> unpack3(DspProduct p, const LaneLayout& layout = LaneLayout::pack3());

/// D holds the activations at offsets {0, 2w}; B holds the weights at {0, w}.
DspOperands pack4(std::array<int, 2> activations, std::array<int, 2> weights,
                  const LaneLayout& layout = LaneLayout::pack4());
/// Result indexed [activation][weight].
std::array<std::array<std::int64_t, 2>, 2> unpack4(DspProduct p,
                                                   const LaneLayout& layout = LaneLayout::pack4());

enum class PackingFactor : std::uint8_t { Three = 3, Four = 4 };

/// Exact dot product of 6-bit activations with 8-bit weights using only 4-bit
/// weight lanes: signed high nibbles, unsigned low nibbles.
std::int64_t packed_dot_w8(std::span<const std::int32_t> act, std::span<const std::int32_t> wgt,
                           PackingFactor factor);

/// O = W * X for a row-wise mixed-precision W (M x N) and activation codes X
/// (N x F), computed lane by lane through the DSP emulation.
IntMatrix packed_gemm(const QuantizedMatrix& q, const Eigen::Ref<const CodeMatrix>& act,
                      PackingFactor factor);

struct SweepReport {
  std::string name;
  std::uint64_t cases = 0;
  std::uint64_t failures = 0;
  std::optional<std::string> first_failure;
};

// Exhaustive equivalence sweeps against direct multiplication. `lane_width`
// exists so that a deliberately broken layout can be exercised.
SweepReport sweep_pack3(int lane_width = 11, int jobs = 1);
SweepReport sweep_pack4(int lane_width = 10, int jobs = 1);
/// Every (w8, a6) pair through decompose_w8 and one hybrid pack3 DSP.
SweepReport sweep_w8(int lane_width = 11, int jobs = 1);

}  // namespace hwvit::dsp
