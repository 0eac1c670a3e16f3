#ifndef PARTATLAS_OVERLAP_H_
#define PARTATLAS_OVERLAP_H_

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "partatlas/region.h"

namespace partatlas {

enum class OverlapMode { kHard, kSoft };

// Controls the region inner product behind rho().
//
// In soft mode each box indicator is replaced by a product of logistic steps
// H_a(z) = 1 / (1 + exp(-a z)) and the inner product is integrated
// numerically. `alpha` is the step steepness in 1/pixel; when unset a
// scale-covariant value is derived from the regions themselves (see
// default_alpha).
struct OverlapConfig {
  OverlapMode mode = OverlapMode::kSoft;
  std::optional<double> alpha;
  // Gauss-Legendre nodes per panel.
  int quadrature_nodes = 8;
  // Integration support beyond the outermost edges, in units of 1/alpha.
  double support_pad = 8.0;

  static OverlapConfig hard() { return {OverlapMode::kHard, {}, 8, 8.0}; }
  static OverlapConfig soft(std::optional<double> alpha = {}) {
    return {OverlapMode::kSoft, alpha, 8, 8.0};
  }

  void validate() const;
};

// 50 / sqrt(max_side(r) * max_side(q)), clamped to [0.01, 10].
double default_alpha(const Region& r, const Region& q);

// Same rule using the geometric mean of max sides over a set.
double default_alpha(std::span<const Region> regions);

// Integral of S_r * S_q over the plane, where S is the smoothed indicator.
// Requires cfg.mode == kSoft.
double smooth_inner(const Region& r, const Region& q, const OverlapConfig& cfg);

// <r,q> / (<r,r> + <q,q> - <r,q>). Hard mode uses indicator functions and
// reproduces iou() exactly; soft mode yields the smoothed overlap, which
// stays positive for disjoint boxes.
double rho(const Region& r, const Region& q, const OverlapConfig& cfg);

// Kernel matrix G(i,j) = rho(regions[i], regions[j]). Each unordered pair is
// evaluated once, so G is exactly symmetric. In soft mode every pair shares
// one quadrature grid, which makes the underlying inner product a single
// positive-weighted sum and keeps the matrix positive semidefinite.
Eigen::MatrixXd gram_matrix(std::span<const Region> regions,
                            const OverlapConfig& cfg);

namespace detail {

// Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const QuadratureRule& gauss_legendre(int n);

// Panel breakpoints covering [lo, hi]. Every edge gets a window of
// +-support_pad/alpha split into panels no wider than 4/alpha; the smooth
// stretches between windows form single panels.
std::vector<double> panel_breaks(std::span<const double> edges, double alpha,
                                 double support_pad, double lo, double hi);

// 1-D integral of s_a(x) * s_b(x), where s_[lo,hi](x) = H(x-lo) H(hi-x).
double axis_inner(double a1, double a2, double b1, double b2, double alpha,
                  const OverlapConfig& cfg);

}  // namespace detail

}  // namespace partatlas

#endif  // PARTATLAS_OVERLAP_H_
