#pragma once

#include "depthforge/rng.hpp"
#include "depthforge/tensor.hpp"

#include <initializer_list>

namespace dft {

using depthforge::GridXd;
using depthforge::Index;
using depthforge::Mask;
using depthforge::Rng;
using depthforge::Tensor;

inline GridXd row(std::initializer_list<double> v) {
  GridXd g(1, static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) g(0, k++) = x;
  return g;
}

inline Mask mask_row(std::initializer_list<bool> v) {
  Mask m(1, static_cast<Index>(v.size()));
  Index k = 0;
  for (bool x : v) m(0, k++) = x;
  return m;
}

inline Mask all_true(Index r, Index c) { return Mask::Constant(r, c, true); }

inline GridXd random_grid(Index r, Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  GridXd g(r, c);
  for (Index k = 0; k < g.size(); ++k) g.data()[k] = rng.uniform(lo, hi);
  return g;
}

inline Tensor random_image(Index h, Index w, Rng& rng) {
  Tensor t({3, h, w});
  for (Index k = 0; k < t.size(); ++k) t.data()[k] = rng.uniform();
  return t;
}

inline double max_abs_diff(const GridXd& a, const GridXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace dft
