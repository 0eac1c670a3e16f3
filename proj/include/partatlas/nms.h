#ifndef PARTATLAS_NMS_H_
#define PARTATLAS_NMS_H_

#include <span>
#include <vector>

#include "partatlas/region.h"

namespace partatlas {

struct Detection {
  Region box;
  double score = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

// Greedy non-maximum suppression. Candidates are visited by descending
// score (equal scores: lower index first); a candidate is dropped when its
// hard IoU with an already kept box exceeds `iou_threshold`. Stops after
// `max_keep` boxes. Returns kept indices in visiting order.
std::vector<int> greedy_nms(std::span<const Region> boxes,
                            std::span<const double> scores,
                            double iou_threshold, int max_keep);

// Indices sorted by descending score, ties by ascending index.
std::vector<int> rank_by_score(std::span<const double> scores);

}  // namespace partatlas

#endif  // PARTATLAS_NMS_H_
