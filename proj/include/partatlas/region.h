#ifndef PARTATLAS_REGION_H_
#define PARTATLAS_REGION_H_

#include <array>
#include <iosfwd>

namespace partatlas {

// Axis-aligned box [x1,x2] x [y1,y2] in continuous image coordinates
// (origin top-left). Construction rejects zero or negative area, so every
// Region in the program has strictly positive area.
class Region {
 public:
  Region(double x1, double y1, double x2, double y2);

  static Region from_array(const std::array<double, 4>& c) {
    return Region(c[0], c[1], c[2], c[3]);
  }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }

  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1_ + x2_); }
  double center_y() const { return 0.5 * (y1_ + y2_); }
  double max_side() const;

  std::array<double, 4> coords() const { return {x1_, y1_, x2_, y2_}; }

  // s * r + t, applied to both corners (s > 0).
  Region transformed(double scale, double tx, double ty) const;

  friend bool operator==(const Region&, const Region&) = default;

 private:
  double x1_, y1_, x2_, y2_;
};

std::ostream& operator<<(std::ostream& os, const Region& r);

double intersection_area(const Region& r, const Region& q);

// |r ∩ q| / |r ∪ q|.
double iou(const Region& r, const Region& q);

// Center-preserving dilation of every side by `scale`, clipped to the image
// [0,image_w] x [0,image_h]. `r` must lie inside the image.
Region context_region(const Region& r, double scale, double image_w,
                      double image_h);

}  // namespace partatlas

#endif  // PARTATLAS_REGION_H_
