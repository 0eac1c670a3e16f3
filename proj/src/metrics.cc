#include "partatlas/metrics.h"

#include <algorithm>
#include <numeric>

#include "partatlas/error.h"

namespace partatlas {

PrecisionRecall precision_recall(
    const std::vector<std::vector<Detection>>& dets, const GroundTruth& gt,
    std::string_view concept_name, double iou_thresh) {
  if (dets.size() > gt.size()) {
    throw InvalidInput("detections cover more images than the ground truth");
  }
  PrecisionRecall pr;
  for (const auto& objects : gt) {
    for (const auto& o : objects) {
      if (o.concept_name == concept_name && evaluated(o)) ++pr.num_gt;
    }
  }
  if (pr.num_gt == 0) {
    throw DataError("no ground truth for concept '" + std::string(concept_name) +
                    "'");
  }

  struct Ranked {
    double score;
    int image;
    int pos;
  };
  std::vector<Ranked> ranked;
  for (size_t i = 0; i < dets.size(); ++i) {
    for (size_t j = 0; j < dets[i].size(); ++j) {
      ranked.push_back({dets[i][j].score, static_cast<int>(i),
                        static_cast<int>(j)});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> matched(gt.size());
  for (size_t i = 0; i < gt.size(); ++i) matched[i].assign(gt[i].size(), false);
  int tp = 0;
  int fp = 0;
  for (const Ranked& r : ranked) {
    const Region& box = dets[r.image][r.pos].box;
    const auto& objects = gt[r.image];
    int best = -1;
    double best_iou = -1;
    bool hits_ignored = false;
    bool hits_matched = false;
    for (size_t g = 0; g < objects.size(); ++g) {
      if (objects[g].concept_name != concept_name) continue;
      const double o = iou(box, objects[g].box);
      if (o < iou_thresh) continue;
      if (!evaluated(objects[g])) {
        hits_ignored = true;
      } else if (matched[r.image][g]) {
        hits_matched = true;
      } else if (o > best_iou) {
        best_iou = o;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      matched[r.image][best] = true;
      ++tp;
    } else if (hits_ignored && !hits_matched) {
      continue;
    } else {
      ++fp;
    }
    pr.precision.push_back(static_cast<double>(tp) / (tp + fp));
    pr.recall.push_back(static_cast<double>(tp) / pr.num_gt);
  }

  // Area under the precision envelope, summed where recall steps up.
  std::vector<double> env(pr.precision);
  for (int i = static_cast<int>(env.size()) - 2; i >= 0; --i) {
    env[i] = std::max(env[i], env[i + 1]);
  }
  double prev_recall = 0;
  for (size_t i = 0; i < env.size(); ++i) {
    if (pr.recall[i] > prev_recall) {
      pr.ap += (pr.recall[i] - prev_recall) * env[i];
      prev_recall = pr.recall[i];
    }
  }
  return pr;
}

double average_precision(const std::vector<std::vector<Detection>>& dets,
                         const GroundTruth& gt, std::string_view concept_name,
                         double iou_thresh) {
  return precision_recall(dets, gt, concept_name, iou_thresh).ap;
}

double corloc(const std::vector<TopDetection>& top, const GroundTruth& gt,
              std::string_view concept_name, double iou_thresh) {
  if (top.empty()) throw InvalidInput("CorLoc is undefined without positives");
  int hits = 0;
  for (const auto& t : top) {
    if (t.image < 0 || t.image >= static_cast<int>(gt.size())) {
      throw InvalidInput("CorLoc image outside the ground truth");
    }
    if (!t.box) continue;
    const bool hit = std::any_of(
        gt[t.image].begin(), gt[t.image].end(), [&](const GtObject& o) {
          return o.concept_name == concept_name && evaluated(o) &&
                 iou(*t.box, o.box) >= iou_thresh;
        });
    hits += hit;
  }
  return static_cast<double>(hits) / static_cast<double>(top.size());
}

std::map<std::string, ConceptScore> evaluate_detections(
    const Dataset& ds,
    const std::map<std::string, std::vector<std::vector<Detection>>>& dets,
    double iou_thresh) {
  std::map<std::string, ConceptScore> out;
  const int n = ds.store.size();
  for (const auto& [concept_name, per_image] : dets) {
    if (static_cast<int>(per_image.size()) != n) {
      throw DataError("detections for '" + concept_name +
                      "' do not cover every image");
    }
    ConceptScore& score = out[concept_name];
    if (!ds.ground_truth) continue;
    const GroundTruth& gt = *ds.ground_truth;
    const bool any_gt = std::any_of(gt.begin(), gt.end(), [&](const auto& row) {
      return std::any_of(row.begin(), row.end(), [&](const GtObject& o) {
        return o.concept_name == concept_name && evaluated(o);
      });
    });
    if (any_gt) score.ap = average_precision(per_image, gt, concept_name, iou_thresh);
    std::vector<TopDetection> top;
    for (int i = 0; i < n; ++i) {
      if (i >= static_cast<int>(ds.labels.size())) break;
      auto it = ds.labels[i].find(concept_name);
      if (it == ds.labels[i].end() || it->second != 1) continue;
      TopDetection t{i, std::nullopt};
      const auto& d = per_image[i];
      auto best = std::max_element(d.begin(), d.end(), [](const auto& a, const auto& b) {
        return a.score < b.score;
      });
      if (best != d.end()) t.box = best->box;
      top.push_back(t);
    }
    score.positives = static_cast<int>(top.size());
    if (!top.empty()) score.corloc = corloc(top, gt, concept_name, iou_thresh);
  }
  return out;
}

}  // namespace partatlas
