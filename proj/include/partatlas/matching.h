#ifndef PARTATLAS_MATCHING_H_
#define PARTATLAS_MATCHING_H_

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "partatlas/anchors.h"
#include "partatlas/dataset.h"
#include "partatlas/embedding.h"
#include "partatlas/overlap.h"

namespace partatlas {

// Descriptor used to compare regions across images: the joint
// appearance-geometry embedding, geometry alone, or appearance alone.
enum class MatchVariant { kAnchorAG, kAnchorG, kA };

std::string_view to_string(MatchVariant v);
MatchVariant parse_match_variant(std::string_view name);

// Embedding of an arbitrary region. Its appearance is the descriptor of the
// equal proposal, or of the best-overlapping one. Zero vectors stay zero
// under normalization.
Eigen::VectorXd match_embedding(const ImageRecord& image,
                                const ImageDetections& dets, const Region& r,
                                MatchVariant v, bool normalize,
                                const OverlapConfig& overlap);

// One row per proposal.
Eigen::MatrixXd match_embeddings(const ImageRecord& image,
                                 const ImageDetections& dets, MatchVariant v,
                                 bool normalize, const OverlapConfig& overlap);

// Row of `target` with the largest inner product; ties go to the lowest
// index.
int best_match(const Eigen::VectorXd& source, const Eigen::MatrixXd& target);

Region match_regions(const ImageRecord& source, const ImageDetections& source_dets,
                     const Region& r, const ImageRecord& target,
                     const ImageDetections& target_dets, MatchVariant v,
                     bool normalize, const OverlapConfig& overlap);

struct ConceptMatch {
  double mean_iou = 0;
  int matched = 0;  // source part occurrences scored
  int skipped = 0;  // occurrences whose concept is absent in the target
};

struct MatchReport {
  std::map<std::string, ConceptMatch> per_concept;

  // Unweighted mean over concepts with at least one scored occurrence.
  double mean_iou() const;
  int skipped() const;
};

// For every evaluated GT part of each source image, predicts its location in
// the target image and scores the IoU with the best-overlapping target GT box
// of the same concept. `concepts` restricts the parts considered (all when
// empty).
MatchReport match_benchmark(const DescriptorStore& store, const GroundTruth& gt,
                            const std::vector<ImageDetections>& dets,
                            const std::vector<std::pair<int, int>>& pairs,
                            MatchVariant v, bool normalize,
                            const OverlapConfig& overlap,
                            const std::vector<std::string>& concepts = {},
                            int threads = 1);

// Scene descriptor: per cell of the 1x1 grid and of the 2x2 grid (top-left,
// top-right, bottom-left, bottom-right) and per anchor, the max anchor score
// over proposals centered in the cell (0 for empty cells). Blocks of K are
// concatenated in that cell order and the whole vector is L2-normalized.
Eigen::VectorXd grid_encode(const ImageRecord& image, const AnchorBank& bank);

}  // namespace partatlas

#endif  // PARTATLAS_MATCHING_H_
