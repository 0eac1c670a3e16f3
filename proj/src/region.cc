#include "partatlas/region.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "partatlas/error.h"

namespace partatlas {

Region::Region(double x1, double y1, double x2, double y2)
    : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) ||
      !std::isfinite(y2) || !(x2 > x1) || !(y2 > y1)) {
    std::ostringstream os;
    os << "degenerate region [" << x1 << ", " << y1 << ", " << x2 << ", "
       << y2 << "]";
    throw InvalidInput(os.str());
  }
}

double Region::max_side() const { return std::max(width(), height()); }

Region Region::transformed(double scale, double tx, double ty) const {
  if (!(scale > 0)) throw InvalidInput("similarity scale must be positive");
  return Region(scale * x1_ + tx, scale * y1_ + ty, scale * x2_ + tx,
                scale * y2_ + ty);
}

std::ostream& operator<<(std::ostream& os, const Region& r) {
  return os << "[" << r.x1() << ", " << r.y1() << ", " << r.x2() << ", "
            << r.y2() << "]";
}

double intersection_area(const Region& r, const Region& q) {
  const double w = std::min(r.x2(), q.x2()) - std::max(r.x1(), q.x1());
  const double h = std::min(r.y2(), q.y2()) - std::max(r.y1(), q.y1());
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou(const Region& r, const Region& q) {
  const double inter = intersection_area(r, q);
  return inter / (r.area() + q.area() - inter);
}

Region context_region(const Region& r, double scale, double image_w,
                      double image_h) {
  if (!(scale > 1)) throw InvalidInput("context scale must exceed 1");
  if (r.x1() < 0 || r.y1() < 0 || r.x2() > image_w || r.y2() > image_h) {
    std::ostringstream os;
    os << "region " << r << " lies outside the " << image_w << "x" << image_h
       << " image";
    throw InvalidInput(os.str());
  }
  const double hw = 0.5 * scale * r.width();
  const double hh = 0.5 * scale * r.height();
  const double cx = r.center_x();
  const double cy = r.center_y();
  return Region(std::max(0.0, cx - hw), std::max(0.0, cy - hh),
                std::min(image_w, cx + hw), std::min(image_h, cy + hh));
}

}  // namespace partatlas
