// Slow, independent reference implementations used only by the tests.

#ifndef PARTATLAS_TESTS_ORACLES_H_
#define PARTATLAS_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "partatlas/dataset.h"
#include "partatlas/metrics.h"
#include "partatlas/nms.h"
#include "partatlas/region.h"

namespace oracle {

using partatlas::Detection;
using partatlas::GroundTruth;
using partatlas::GtObject;
using partatlas::Region;

// Overlap area from the box corners, written out without region.cc.
inline double box_iou(const Region& a, const Region& b) {
  const double w = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double h = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double inter = w * h;
  return inter / (a.width() * a.height() + b.width() * b.height() - inter);
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Midpoint rule for the integral of the product of two smoothed 1-D box
// indicators, on a uniform grid of n points over [lo, hi].
inline double midpoint_axis(double a1, double a2, double b1, double b2,
                            double alpha, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (i + 0.5) * h;
    sum += logistic(alpha * (x - a1)) * logistic(alpha * (a2 - x)) *
           logistic(alpha * (x - b1)) * logistic(alpha * (b2 - x));
  }
  return sum * h;
}

inline double midpoint_inner(const Region& r, const Region& q, double alpha,
                             int n = 4096, double pad = 12.0) {
  const double xlo = std::min(r.x1(), q.x1()) - pad / alpha;
  const double xhi = std::max(r.x2(), q.x2()) + pad / alpha;
  const double ylo = std::min(r.y1(), q.y1()) - pad / alpha;
  const double yhi = std::max(r.y2(), q.y2()) + pad / alpha;
  return midpoint_axis(r.x1(), r.x2(), q.x1(), q.x2(), alpha, xlo, xhi, n) *
         midpoint_axis(r.y1(), r.y2(), q.y1(), q.y2(), alpha, ylo, yhi, n);
}

inline double midpoint_rho(const Region& r, const Region& q, double alpha,
                           int n = 4096) {
  const double rq = midpoint_inner(r, q, alpha, n);
  return rq / (midpoint_inner(r, r, alpha, n) + midpoint_inner(q, q, alpha, n) - rq);
}

// Greedy NMS written as "keep i unless an earlier-ranked kept box overlaps".
inline std::vector<int> nms(const std::vector<Region>& boxes,
                            const std::vector<double>& scores, double thr,
                            int max_keep) {
  std::vector<int> order(boxes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::make_tuple(-scores[a], a) < std::make_tuple(-scores[b], b);
  });
  std::vector<int> kept;
  for (int i : order) {
    if (static_cast<int>(kept.size()) >= max_keep) break;
    bool ok = true;
    for (int k : kept) ok = ok && box_iou(boxes[i], boxes[k]) <= thr;
    if (ok) kept.push_back(i);
  }
  return kept;
}

inline bool counts(const GtObject& o) { return !o.difficult && !o.truncated; }

// All-point AP: each true positive adds 1/num_gt times the best precision
// reached at any rank at or after it.
inline double average_precision(const std::vector<std::vector<Detection>>& dets,
                                 const GroundTruth& gt, const std::string& c,
                                 double thr) {
  int num_gt = 0;
  for (const auto& row : gt)
    for (const auto& o : row) num_gt += (o.concept_name == c && counts(o));
  std::vector<std::tuple<double, int, int>> ranked;
  for (size_t i = 0; i < dets.size(); ++i)
    for (size_t j = 0; j < dets[i].size(); ++j)
      ranked.emplace_back(-dets[i][j].score, static_cast<int>(i), static_cast<int>(j));
  std::sort(ranked.begin(), ranked.end());

  std::vector<std::vector<int>> taken(gt.size());
  std::vector<int> is_tp;  // per counted detection
  for (const auto& [neg, i, j] : ranked) {
    const Region& box = dets[i][j].box;
    std::vector<std::pair<double, int>> free_hits;
    bool ignored = false, repeat = false;
    for (size_t g = 0; g < gt[i].size(); ++g) {
      const GtObject& o = gt[i][g];
      if (o.concept_name != c || box_iou(box, o.box) < thr) continue;
      const bool used = std::find(taken[i].begin(), taken[i].end(), static_cast<int>(g)) !=
                        taken[i].end();
      if (!counts(o)) ignored = true;
      else if (used) repeat = true;
      else free_hits.emplace_back(box_iou(box, o.box), -static_cast<int>(g));
    }
    if (!free_hits.empty()) {
      const auto best = *std::max_element(free_hits.begin(), free_hits.end());
      taken[i].push_back(-best.second);
      is_tp.push_back(1);
    } else if (ignored && !repeat) {
      continue;
    } else {
      is_tp.push_back(0);
    }
  }
  const int n = static_cast<int>(is_tp.size());
  std::vector<double> precision(n);
  int tp = 0;
  for (int k = 0; k < n; ++k) {
    tp += is_tp[k];
    precision[k] = static_cast<double>(tp) / (k + 1);
  }
  double ap = 0;
  for (int k = 0; k < n; ++k) {
    if (!is_tp[k]) continue;
    double best = 0;
    for (int m = k; m < n; ++m) best = std::max(best, precision[m]);
    ap += best / num_gt;
  }
  return ap;
}

inline double corloc(const std::vector<partatlas::TopDetection>& top,
                     const GroundTruth& gt, const std::string& c, double thr) {
  double hits = 0;
  for (const auto& t : top) {
    if (!t.box) continue;
    for (const auto& o : gt[t.image]) {
      if (o.concept_name == c && counts(o) && box_iou(*t.box, o.box) >= thr) {
        hits += 1;
        break;
      }
    }
  }
  return hits / static_cast<double>(top.size());
}

// Central differences of f at x, one coordinate at a time.
inline Eigen::MatrixXd finite_difference(
    const std::function<double(const Eigen::MatrixXd&)>& f,
    const Eigen::MatrixXd& x, double h = 1e-6) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd xp = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double v = x(i, j);
      xp(i, j) = v + h;
      const double fp = f(xp);
      xp(i, j) = v - h;
      const double fm = f(xp);
      xp(i, j) = v;
      g(i, j) = (fp - fm) / (2 * h);
    }
  }
  return g;
}

// Row of `target` with the largest inner product with `source`, scanning
// every row; the first maximum wins.
inline int argmax_row(const Eigen::VectorXd& source, const Eigen::MatrixXd& target) {
  int best = 0;
  double best_v = -INFINITY;
  for (Eigen::Index r = 0; r < target.rows(); ++r) {
    double v = 0;
    for (Eigen::Index c = 0; c < target.cols(); ++c) v += source[c] * target(r, c);
    if (v > best_v) {
      best_v = v;
      best = static_cast<int>(r);
    }
  }
  return best;
}

// Random box inside [0, extent]^2 with sides at least min_side.
inline Region random_box(std::mt19937_64& rng, double extent = 1.0,
                         double min_side = 0.05) {
  std::uniform_real_distribution<double> u(0, 1);
  const double w = min_side + u(rng) * (extent - min_side);
  const double h = min_side + u(rng) * (extent - min_side);
  const double x = u(rng) * (extent - w);
  const double y = u(rng) * (extent - h);
  return Region(x, y, x + w, y + h);
}

}  // namespace oracle

#endif  // PARTATLAS_TESTS_ORACLES_H_
