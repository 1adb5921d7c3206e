#pragma once

// Reference integer GEMM: plain triple loop over int64, no packing.

#include "hwvit/quant.hpp"

namespace oracle {

inline hwvit::IntMatrix naive_gemm(const hwvit::QuantizedMatrix& q, const hwvit::CodeMatrix& x) {
  hwvit::IntMatrix out = hwvit::IntMatrix::Zero(static_cast<Eigen::Index>(q.rows()), x.cols());
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      std::int64_t acc = 0;
      for (std::size_t j = 0; j < q.cols(); ++j)
        acc += std::int64_t{q.code(i, j)} * x(static_cast<Eigen::Index>(j), f);
      out(static_cast<Eigen::Index>(i), f) = acc;
    }
  return out;
}

}  // namespace oracle
