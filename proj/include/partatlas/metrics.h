#ifndef PARTATLAS_METRICS_H_
#define PARTATLAS_METRICS_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "partatlas/dataset.h"
#include "partatlas/nms.h"

namespace partatlas {

inline constexpr double kDefaultHitIou = 0.4;

// GT objects marked difficult or truncated are left out of evaluation:
// they are neither required nor penalized.
inline bool evaluated(const GtObject& o) { return !o.difficult && !o.truncated; }

struct PrecisionRecall {
  double ap = 0;
  std::vector<double> precision;  // after each ranked detection
  std::vector<double> recall;
  int num_gt = 0;
};

// All-point interpolated average precision for one concept. `dets[i]` holds
// the detections of store image i; all images are ranked jointly by score
// (ties: lower image index, then earlier list position). A detection is a
// true positive when its best-overlapping still-unmatched GT box of the
// concept reaches `iou_thresh`; hits on already matched boxes count as false
// positives, and detections whose only hit is an ignored box are dropped.
// Throws DataError when the concept has no evaluated GT box.
PrecisionRecall precision_recall(
    const std::vector<std::vector<Detection>>& dets, const GroundTruth& gt,
    std::string_view concept_name, double iou_thresh = kDefaultHitIou);

double average_precision(const std::vector<std::vector<Detection>>& dets,
                         const GroundTruth& gt, std::string_view concept_name,
                         double iou_thresh = kDefaultHitIou);

struct TopDetection {
  int image = 0;
  std::optional<Region> box;  // empty when the image produced nothing
};

// Fraction of the listed positive images whose top box hits an evaluated GT
// box of the concept. Throws InvalidInput when `top` is empty.
double corloc(const std::vector<TopDetection>& top, const GroundTruth& gt,
              std::string_view concept_name, double iou_thresh = kDefaultHitIou);

struct ConceptScore {
  std::optional<double> ap;      // unset without evaluated GT
  std::optional<double> corloc;  // unset without labeled positives
  int positives = 0;
};

// AP over every image and CorLoc over the images labeled +1, using each
// image's first listed detection as its top box. `dets[c]` is indexed like
// the store; concepts without detections are skipped.
std::map<std::string, ConceptScore> evaluate_detections(
    const Dataset& ds,
    const std::map<std::string, std::vector<std::vector<Detection>>>& dets,
    double iou_thresh = kDefaultHitIou);

}  // namespace partatlas

#endif  // PARTATLAS_METRICS_H_
