#ifndef PARTATLAS_MIL_H_
#define PARTATLAS_MIL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "partatlas/dataset.h"
#include "partatlas/embedding.h"
#include "partatlas/nms.h"

namespace partatlas {

struct MilSchedule {
  int appearance_rounds = 5;  // B or B+C embedding
  int joint_rounds = 5;       // the variant's full embedding

  int total() const { return appearance_rounds + joint_rounds; }
  friend bool operator==(const MilSchedule&, const MilSchedule&) = default;
};

// Inner w-step: averaged stochastic subgradient over the fixed selections.
struct MilSolver {
  int epochs = 20;
  double learning_rate = 0.1;  // step at epoch e is learning_rate / sqrt(e)
  uint64_t seed = 0;
  friend bool operator==(const MilSolver&, const MilSolver&) = default;
};

struct MilConfig {
  Variant variant = Variant::kBCG;
  double lambda = 1e-3;
  MilSchedule schedule;
  MilSolver solver;
  int threads = 1;

  void validate() const;
};

struct PartModel {
  std::string concept_name;
  Variant variant = Variant::kBCG;
  Eigen::VectorXd w;
  int appearance_dim = 0;
  int num_anchors = 0;  // 0 for variants without geometry
  double lambda = 1e-3;
  MilSchedule schedule;
  MilSolver solver;

  int dim() const { return static_cast<int>(w.size()); }

  friend bool operator==(const PartModel& a, const PartModel& b) {
    return a.concept_name == b.concept_name && a.variant == b.variant &&
           a.w.size() == b.w.size() && a.w == b.w &&
           a.appearance_dim == b.appearance_dim &&
           a.num_anchors == b.num_anchors && a.lambda == b.lambda &&
           a.schedule == b.schedule && a.solver == b.solver;
  }
};

// A single strongly annotated box. `image` indexes the DescriptorStore.
struct ExemplarSpec {
  int image = 0;
  Region box{0, 0, 1, 1};
  double beta = 1.0;
};

// Embedded proposals of each store image under one variant (rows are
// proposals). Images outside the requested set are left empty.
using BagEmbeddings = std::vector<Eigen::MatrixXd>;

BagEmbeddings embed_bags(const std::vector<ImageFeatures>& features,
                         Variant variant, const WeakImageSet& data,
                         int threads = 1);

// Selected proposal per item of a WeakImageSet; entries of negatives are
// ignored.
using Selections = std::vector<int>;

// (lambda/2)|w|^2 + 1/n sum_i max(0, 1 - y_i s_i). For positives s_i is the
// score of the selected proposal when `selections` is given and the max
// score otherwise; negatives always use the max.
double mil_objective(const Eigen::VectorXd& w, double lambda,
                     const BagEmbeddings& bags, const WeakImageSet& data,
                     const Selections* selections = nullptr);

// Per-image multiplicative relocalization factor
// (1/C) exp(beta <phi_a(R), phi_a(R_a)>).
class ExemplarFactor {
 public:
  ExemplarFactor(const std::vector<ImageFeatures>& features,
                 const ExemplarSpec& spec, const DescriptorStore& store);

  double beta() const { return beta_; }
  // exp(beta <phi_a(image, proposal), phi_a(exemplar)>).
  double affinity(const ImageFeatures& image, int proposal) const;
  // Average affinity over the positives' current selections.
  double normalizer(const std::vector<ImageFeatures>& features,
                    const WeakImageSet& data,
                    const Selections& selections) const;

 private:
  Eigen::VectorXd reference_;
  double beta_ = 0;
};

// Proposal maximizing <phi, w> (times the exemplar factor with normalizer C
// when given); ties go to the lowest index.
int relocalize(const Eigen::VectorXd& w, const Eigen::MatrixXd& bag,
               const ImageFeatures* features = nullptr,
               const ExemplarFactor* exemplar = nullptr, double c = 1.0);

struct RoundLog {
  int round = 0;
  Variant phase = Variant::kB;
  double objective = 0;  // after the w-step and relocalization
  int changed = 0;       // positives whose selection moved

  friend bool operator==(const RoundLog&, const RoundLog&) = default;
};

struct MilResult {
  PartModel model;
  Selections selections;
  std::vector<RoundLog> log;
};

// Round-0 selection: a proposal covering the whole image, else the largest.
int initial_selection(const ImageRecord& image);

// Alternating MIL training. `features` is indexed like `store` and must
// carry geometry when the variant needs it.
MilResult train_part(const DescriptorStore& store,
                     const std::vector<ImageFeatures>& features,
                     const WeakImageSet& data, const MilConfig& cfg,
                     const std::optional<ExemplarSpec>& exemplar = std::nullopt,
                     std::string concept_name = "");

// The w-step on fixed selections, starting from w0. Returns the best of w0,
// the last iterate and the averaged iterate under the objective.
Eigen::VectorXd solve_w(const Eigen::VectorXd& w0, double lambda,
                        const BagEmbeddings& bags, const WeakImageSet& data,
                        const Selections& selections, const MilSolver& solver,
                        uint64_t stream);

Eigen::VectorXd score_proposals(const PartModel& model,
                                const ImageFeatures& features);

// Scores every proposal, greedy NMS at nms_iou, keeps top_n.
std::vector<Detection> detect_part(const PartModel& model,
                                   const ImageRecord& image,
                                   const ImageFeatures& features, int top_n,
                                   double nms_iou);

}  // namespace partatlas

#endif  // PARTATLAS_MIL_H_
