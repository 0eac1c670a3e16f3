#ifndef PARTATLAS_EMBEDDING_H_
#define PARTATLAS_EMBEDDING_H_

#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "partatlas/dataset.h"
#include "partatlas/nms.h"
#include "partatlas/overlap.h"
#include "partatlas/region.h"

namespace partatlas {

// Region descriptor families: baseline appearance (B), appearance stacked
// with the dilated-context appearance (B+C), and their Kronecker products
// with the anchor geometry (B+G, B+C+G).
enum class Variant { kB, kBC, kBG, kBCG };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
bool has_context(Variant v);
bool has_geometry(Variant v);
// The variant with the geometry factor removed (B+C+G -> B+C).
Variant appearance_variant(Variant v);

// Detections of every anchor in one image: entry k holds up to L
// detections of anchor k, sorted by descending score.
using ImageDetections = std::vector<std::vector<Detection>>;

struct EmbeddingConfig {
  Variant variant = Variant::kBCG;
  OverlapConfig overlap;
  double context_scale = 2.0;

  void validate() const;
};

int embedding_dim(Variant v, int appearance_dim, int num_anchors);

// Component k is max_l overlap(r, R_l) * max(0, s_k(R_l)) over anchor k's
// detections; zero when the anchor has no positively scored detection.
Eigen::VectorXd geometric_embed(const Region& r, const ImageDetections& dets,
                                const OverlapConfig& overlap);

// Kronecker product with appearance-major layout: out[i*K + k] = a[i]*g[k].
Eigen::VectorXd joint_embed(const Eigen::VectorXd& appearance,
                            const Eigen::VectorXd& geometry);

struct ContextMatch {
  int proposal = 0;
  double iou = 0;  // hard IoU between the dilated box and that proposal
};

// The stored proposal standing in for the dilated region mu(r).
ContextMatch context_proposal(const ImageRecord& image, const Region& r,
                              double scale);

// Per-image building blocks shared by every variant.
struct ImageFeatures {
  Eigen::MatrixXd appearance;         // proposals x d_a
  std::vector<ContextMatch> context;  // per proposal
  Eigen::MatrixXd geometry;           // proposals x K; 0 columns without anchors

  int proposal_count() const { return static_cast<int>(appearance.rows()); }
  int num_anchors() const { return static_cast<int>(geometry.cols()); }
  bool has_geometry() const { return geometry.cols() > 0; }

  Eigen::VectorXd embed(int proposal, Variant v) const;
  // One row per proposal.
  Eigen::MatrixXd embed_all(Variant v) const;
};

// `dets` may be null, in which case only B and B+C can be assembled.
ImageFeatures compute_features(const ImageRecord& image,
                               const ImageDetections* dets,
                               const EmbeddingConfig& cfg);

std::vector<ImageFeatures> compute_features(
    const DescriptorStore& store, const std::vector<ImageDetections>* dets,
    const EmbeddingConfig& cfg, int threads = 1);

// Embedding of proposal `r` of `image` under cfg.variant. Throws DataError
// when `r` is not one of the image's proposals.
Eigen::VectorXd embed(const ImageRecord& image, const Region& r,
                      const ImageDetections* dets, const EmbeddingConfig& cfg);

}  // namespace partatlas

#endif  // PARTATLAS_EMBEDDING_H_
