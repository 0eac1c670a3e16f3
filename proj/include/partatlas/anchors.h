#ifndef PARTATLAS_ANCHORS_H_
#define PARTATLAS_ANCHORS_H_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "partatlas/dataset.h"
#include "partatlas/embedding.h"

namespace partatlas {

struct AnchorHyperparams {
  int num_anchors = 150;
  double lambda = 1e-4;  // L2 weight
  double gamma = 1.0;    // orthogonality weight
  double learning_rate = 0.01;
  double momentum = 0.9;
  int iterations = 40000;
  int log_interval = 1000;  // 0 disables periodic objective logging
  uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const AnchorHyperparams&,
                         const AnchorHyperparams&) = default;
};

// K linear mid-level detectors over appearance descriptors; anchor k scores
// a proposal by <phi_a, weights.row(k)>.
struct AnchorBank {
  Eigen::MatrixXd weights;  // K x d_a
  AnchorHyperparams hyper;

  int size() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }

  // proposals x K matrix of raw anchor scores.
  Eigen::MatrixXd scores(const ImageRecord& image) const;

  friend bool operator==(const AnchorBank& a, const AnchorBank& b) {
    return a.hyper == b.hyper && a.weights.rows() == b.weights.rows() &&
           a.weights.cols() == b.weights.cols() && a.weights == b.weights;
  }
};

struct AnchorObjective {
  double regularizer = 0;    // sum_k lambda/2 |w_k|^2
  double data = 0;           // -sum_k 1/n sum_i y_i [max_R <phi, w_k>]_+
  double orthogonality = 0;  // gamma sum_{k != q} <w_k/|w_k|, w_q/|w_q|>^2
  int skipped_images = 0;    // images without proposals

  double total() const { return regularizer + data + orthogonality; }
};

AnchorObjective anchor_objective_terms(const AnchorBank& bank,
                                       const DescriptorStore& store,
                                       const WeakImageSet& data);

double anchor_objective(const AnchorBank& bank, const DescriptorStore& store,
                        const WeakImageSet& data);

// Gradient of anchor_objective with respect to bank.weights (a subgradient
// at hinge kinks, where [z]_+ contributes 0 at z = 0).
Eigen::MatrixXd anchor_objective_gradient(const AnchorBank& bank,
                                          const DescriptorStore& store,
                                          const WeakImageSet& data);

// sum_{k != q} <u_k, u_q>^2 with u = w / |w|, and its gradient with respect
// to the unnormalized rows. Rows of zero norm contribute nothing.
double orthogonality_penalty(const Eigen::MatrixXd& weights);
Eigen::MatrixXd orthogonality_gradient(const Eigen::MatrixXd& weights);

struct ObjectiveSample {
  int iteration = 0;
  double objective = 0;
};

// Each anchor starts at the descriptor of a distinct randomly drawn proposal
// of a positive image.
AnchorBank initialize_anchors(const DescriptorStore& store,
                              const WeakImageSet& data,
                              const AnchorHyperparams& hyper);

// SGD with momentum, strictly alternating positive and negative images
// (each class visited without replacement per epoch). Deterministic given
// hyper.seed.
AnchorBank train_anchors(const DescriptorStore& store, const WeakImageSet& data,
                         const AnchorHyperparams& hyper,
                         std::vector<ObjectiveSample>* log = nullptr);

// Per anchor: greedy NMS over all proposals by raw score, at most
// `max_detections` kept. Scores are stored unclamped.
ImageDetections detect_anchors(const AnchorBank& bank,
                               const ImageRecord& image, int max_detections,
                               double nms_iou);

std::vector<ImageDetections> detect_anchors(const AnchorBank& bank,
                                            const DescriptorStore& store,
                                            int max_detections, double nms_iou,
                                            int threads = 1);

}  // namespace partatlas

#endif  // PARTATLAS_ANCHORS_H_
