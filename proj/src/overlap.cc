#include "partatlas/overlap.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "partatlas/error.h"

namespace partatlas {
namespace {

constexpr double kAlphaScale = 50.0;
constexpr double kAlphaMin = 0.01;
constexpr double kAlphaMax = 10.0;

inline double step(double alpha, double z) {
  return 1.0 / (1.0 + std::exp(-alpha * z));
}

inline double window(double alpha, double lo, double hi, double x) {
  return step(alpha, x - lo) * step(alpha, hi - x);
}

double clamp_alpha(double a) { return std::clamp(a, kAlphaMin, kAlphaMax); }

double resolve_alpha(const Region& r, const Region& q,
                     const OverlapConfig& cfg) {
  return cfg.alpha ? *cfg.alpha : default_alpha(r, q);
}

// Applies `fn(x, w)` for every quadrature node of the panels in `breaks`.
template <typename Fn>
void for_each_node(const std::vector<double>& breaks,
                   const detail::QuadratureRule& rule, Fn&& fn) {
  for (size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double half = 0.5 * (breaks[p + 1] - breaks[p]);
    const double mid = 0.5 * (breaks[p + 1] + breaks[p]);
    for (size_t n = 0; n < rule.nodes.size(); ++n) {
      fn(mid + half * rule.nodes[n], half * rule.weights[n]);
    }
  }
}

double soft_inner_with_alpha(const Region& r, const Region& q, double alpha,
                             const OverlapConfig& cfg) {
  return detail::axis_inner(r.x1(), r.x2(), q.x1(), q.x2(), alpha, cfg) *
         detail::axis_inner(r.y1(), r.y2(), q.y1(), q.y2(), alpha, cfg);
}

double kernel_ratio(double rq, double rr, double qq) {
  const double denom = rr + qq - rq;
  if (!(denom > 0)) {
    throw InvalidInput("overlap kernel precondition <r,r>+<q,q>-<r,q> > 0 "
                       "violated");
  }
  return rq / denom;
}

// Per-axis Gram block of smoothed 1-D indicators on a shared grid.
Eigen::MatrixXd shared_axis_gram(const std::vector<double>& lo_edges,
                                 const std::vector<double>& hi_edges,
                                 double alpha, const OverlapConfig& cfg) {
  std::vector<double> edges(lo_edges);
  edges.insert(edges.end(), hi_edges.begin(), hi_edges.end());
  const double pad = cfg.support_pad / alpha;
  const double lo = *std::min_element(lo_edges.begin(), lo_edges.end()) - pad;
  const double hi = *std::max_element(hi_edges.begin(), hi_edges.end()) + pad;
  const auto breaks =
      detail::panel_breaks(edges, alpha, cfg.support_pad, lo, hi);
  const auto& rule = detail::gauss_legendre(cfg.quadrature_nodes);

  std::vector<double> xs, ws;
  for_each_node(breaks, rule, [&](double x, double w) {
    xs.push_back(x);
    ws.push_back(w);
  });
  const Eigen::Index n = static_cast<Eigen::Index>(lo_edges.size());
  const Eigen::Index m = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd values(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < m; ++k) {
      values(i, k) = window(alpha, lo_edges[i], hi_edges[i], xs[k]);
    }
  }
  const Eigen::Map<const Eigen::VectorXd> weights(ws.data(), m);
  return values * weights.asDiagonal() * values.transpose();
}

}  // namespace

void OverlapConfig::validate() const {
  if (alpha && !(*alpha > 0)) throw ConfigError("overlap alpha must be > 0");
  if (quadrature_nodes < 8) {
    throw ConfigError("overlap quadrature_nodes must be >= 8");
  }
  if (!(support_pad > 0)) throw ConfigError("overlap support_pad must be > 0");
}

double default_alpha(const Region& r, const Region& q) {
  return clamp_alpha(kAlphaScale / std::sqrt(r.max_side() * q.max_side()));
}

double default_alpha(std::span<const Region> regions) {
  if (regions.empty()) throw InvalidInput("default_alpha of an empty set");
  double log_sum = 0;
  for (const auto& r : regions) log_sum += std::log(r.max_side());
  return clamp_alpha(kAlphaScale /
                     std::exp(log_sum / static_cast<double>(regions.size())));
}

namespace detail {

const QuadratureRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

std::vector<double> panel_breaks(std::span<const double> edges, double alpha,
                                 double support_pad, double lo, double hi) {
  const int per_side = static_cast<int>(std::ceil(support_pad / 4.0));
  const double spacing = support_pad / (alpha * per_side);
  std::vector<double> pts;
  pts.reserve(edges.size() * (2 * per_side + 1) + 2);
  pts.push_back(lo);
  pts.push_back(hi);
  for (double e : edges) {
    for (int k = -per_side; k <= per_side; ++k) {
      const double p = e + k * spacing;
      if (p > lo && p < hi) pts.push_back(p);
    }
  }
  std::sort(pts.begin(), pts.end());
  const double tol = 1e-12 * (hi - lo);
  std::vector<double> out;
  out.reserve(pts.size());
  for (double p : pts) {
    if (out.empty() || p - out.back() > tol) out.push_back(p);
  }
  out.back() = hi;
  return out;
}

double axis_inner(double a1, double a2, double b1, double b2, double alpha,
                  const OverlapConfig& cfg) {
  const double pad = cfg.support_pad / alpha;
  const double lo = std::min(a1, b1) - pad;
  const double hi = std::max(a2, b2) + pad;
  const double edges[] = {a1, a2, b1, b2};
  const auto breaks = panel_breaks(edges, alpha, cfg.support_pad, lo, hi);
  const auto& rule = gauss_legendre(cfg.quadrature_nodes);
  double sum = 0;
  for_each_node(breaks, rule, [&](double x, double w) {
    sum += w * window(alpha, a1, a2, x) * window(alpha, b1, b2, x);
  });
  return sum;
}

}  // namespace detail

double smooth_inner(const Region& r, const Region& q,
                    const OverlapConfig& cfg) {
  if (cfg.mode != OverlapMode::kSoft) {
    throw InvalidInput("smooth_inner requires soft overlap mode");
  }
  cfg.validate();
  return soft_inner_with_alpha(r, q, resolve_alpha(r, q, cfg), cfg);
}

double rho(const Region& r, const Region& q, const OverlapConfig& cfg) {
  if (cfg.mode == OverlapMode::kHard) {
    const double inter = intersection_area(r, q);
    return kernel_ratio(inter, r.area(), q.area());
  }
  cfg.validate();
  const double alpha = resolve_alpha(r, q, cfg);
  const double rq = soft_inner_with_alpha(r, q, alpha, cfg);
  if (r == q) return kernel_ratio(rq, rq, rq);
  return kernel_ratio(rq, soft_inner_with_alpha(r, r, alpha, cfg),
                      soft_inner_with_alpha(q, q, alpha, cfg));
}

Eigen::MatrixXd gram_matrix(std::span<const Region> regions,
                            const OverlapConfig& cfg) {
  const Eigen::Index n = static_cast<Eigen::Index>(regions.size());
  Eigen::MatrixXd gram(n, n);
  if (n == 0) return gram;

  Eigen::MatrixXd inner(n, n);
  if (cfg.mode == OverlapMode::kHard) {
    for (Eigen::Index i = 0; i < n; ++i) {
      inner(i, i) = regions[i].area();
      for (Eigen::Index j = i + 1; j < n; ++j) {
        inner(i, j) = inner(j, i) = intersection_area(regions[i], regions[j]);
      }
    }
  } else {
    cfg.validate();
    const double alpha = cfg.alpha ? *cfg.alpha : default_alpha(regions);
    std::vector<double> x1, x2, y1, y2;
    for (const auto& r : regions) {
      x1.push_back(r.x1());
      x2.push_back(r.x2());
      y1.push_back(r.y1());
      y2.push_back(r.y2());
    }
    inner = shared_axis_gram(x1, x2, alpha, cfg)
                .cwiseProduct(shared_axis_gram(y1, y2, alpha, cfg));
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    gram(i, i) = kernel_ratio(inner(i, i), inner(i, i), inner(i, i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      gram(i, j) = gram(j, i) =
          kernel_ratio(inner(i, j), inner(i, i), inner(j, j));
    }
  }
  return gram;
}

}  // namespace partatlas
