#include "partatlas/nms.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "partatlas/error.h"

namespace partatlas {

std::vector<int> rank_by_score(std::span<const double> scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("non-finite detection score");
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<int> greedy_nms(std::span<const Region> boxes,
                            std::span<const double> scores,
                            double iou_threshold, int max_keep) {
  if (boxes.size() != scores.size()) {
    throw InvalidInput("nms: boxes and scores differ in length");
  }
  std::vector<int> kept;
  if (max_keep <= 0) return kept;
  for (int idx : rank_by_score(scores)) {
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](int k) {
          return iou(boxes[idx], boxes[k]) > iou_threshold;
        });
    if (suppressed) continue;
    kept.push_back(idx);
    if (static_cast<int>(kept.size()) == max_keep) break;
  }
  return kept;
}

}  // namespace partatlas
