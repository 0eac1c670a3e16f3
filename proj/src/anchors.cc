#include "partatlas/anchors.h"

#include <cmath>
#include <random>
#include <sstream>

#include "partatlas/error.h"
#include "partatlas/nms.h"
#include "partatlas/parallel.h"

namespace partatlas {
namespace {

void check_dims(const AnchorBank& bank, const DescriptorStore& store) {
  if (bank.size() == 0) throw ConfigError("anchor bank is empty");
  if (store.dim() != 0 && bank.dim() != store.dim()) {
    std::ostringstream os;
    os << "anchor dimension " << bank.dim() << " does not match descriptor "
       << "dimension " << store.dim();
    throw ConfigError(os.str());
  }
}

// Per anchor, the best proposal of one image and its score.
struct AnchorMax {
  Eigen::VectorXi argmax;
  Eigen::VectorXd value;
};

AnchorMax anchor_max(const Eigen::MatrixXd& weights, const ImageRecord& image) {
  const Eigen::MatrixXd s = image.descriptors.cast<double>() * weights.transpose();
  AnchorMax m;
  m.argmax.resize(s.cols());
  m.value.resize(s.cols());
  for (Eigen::Index k = 0; k < s.cols(); ++k) {
    Eigen::Index best = 0;
    for (Eigen::Index p = 1; p < s.rows(); ++p) {
      if (s(p, k) > s(best, k)) best = p;
    }
    m.argmax[k] = static_cast<int>(best);
    m.value[k] = s(best, k);
  }
  return m;
}

// d/dW of -y sum_k [max_R <phi, w_k>]_+ for one image.
void add_data_gradient(const Eigen::MatrixXd& weights, const ImageRecord& image,
                       double y, double scale, Eigen::MatrixXd& grad) {
  const AnchorMax m = anchor_max(weights, image);
  for (Eigen::Index k = 0; k < weights.rows(); ++k) {
    if (m.value[k] > 0) {
      grad.row(k) -= scale * y *
                     image.descriptors.row(m.argmax[k]).cast<double>();
    }
  }
}

class EpochSampler {
 public:
  explicit EpochSampler(std::vector<int> pool) : pool_(std::move(pool)) {}

  int next(std::mt19937_64& rng) {
    if (pos_ == pool_.size()) {
      for (size_t i = pool_.size(); i > 1; --i) {
        std::swap(pool_[i - 1], pool_[rng() % i]);
      }
      pos_ = 0;
    }
    return pool_[pos_++];
  }

 private:
  std::vector<int> pool_;
  size_t pos_ = 0;
};

std::vector<int> images_with_label(const DescriptorStore& store,
                                   const WeakImageSet& data, int label) {
  std::vector<int> out;
  for (const auto& li : data.items) {
    if (li.label == label && store[li.image].proposal_count() > 0) {
      out.push_back(li.image);
    }
  }
  return out;
}

}  // namespace

void AnchorHyperparams::validate() const {
  if (num_anchors < 1) throw ConfigError("num_anchors must be >= 1");
  if (gamma > 0 && num_anchors < 2) {
    throw ConfigError("orthogonality (gamma > 0) needs at least two anchors");
  }
  if (lambda < 0 || gamma < 0) {
    throw ConfigError("anchor lambda and gamma must be non-negative");
  }
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (!(momentum >= 0 && momentum < 1)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (log_interval < 0) throw ConfigError("log_interval must be >= 0");
}

Eigen::MatrixXd AnchorBank::scores(const ImageRecord& image) const {
  return image.descriptors.cast<double>() * weights.transpose();
}

double orthogonality_penalty(const Eigen::MatrixXd& weights) {
  const Eigen::Index k = weights.rows();
  Eigen::MatrixXd u = weights;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double n = weights.row(i).norm();
    u.row(i) = n > 0 ? Eigen::RowVectorXd(weights.row(i) / n)
                     : Eigen::RowVectorXd::Zero(weights.cols());
  }
  const Eigen::MatrixXd c = u * u.transpose();
  double sum = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i != j) sum += c(i, j) * c(i, j);
    }
  }
  return sum;
}

Eigen::MatrixXd orthogonality_gradient(const Eigen::MatrixXd& weights) {
  const Eigen::Index k = weights.rows();
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(k, weights.cols());
  Eigen::VectorXd norms(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    norms[i] = weights.row(i).norm();
    if (norms[i] > 0) u.row(i) = weights.row(i) / norms[i];
  }
  Eigen::MatrixXd c = u * u.transpose();
  c.diagonal().setZero();
  // Ordered pairs count each unordered pair twice: d/du_k = 4 sum_q c_kq u_q.
  const Eigen::MatrixXd du = 4.0 * c * u;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(k, weights.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    if (norms[i] <= 0) continue;
    const double radial = du.row(i).dot(u.row(i));
    grad.row(i) = (du.row(i) - radial * u.row(i)) / norms[i];
  }
  return grad;
}

AnchorObjective anchor_objective_terms(const AnchorBank& bank,
                                       const DescriptorStore& store,
                                       const WeakImageSet& data) {
  check_dims(bank, store);
  AnchorObjective obj;
  obj.regularizer = 0.5 * bank.hyper.lambda * bank.weights.squaredNorm();
  int n = 0;
  Eigen::VectorXd hinge_sum = Eigen::VectorXd::Zero(bank.size());
  for (const auto& li : data.items) {
    const auto& image = store[li.image];
    if (image.proposal_count() == 0) {
      ++obj.skipped_images;
      continue;
    }
    ++n;
    const AnchorMax m = anchor_max(bank.weights, image);
    hinge_sum += li.label * m.value.cwiseMax(0.0);
  }
  if (n > 0) obj.data = -hinge_sum.sum() / n;
  if (bank.hyper.gamma > 0) {
    obj.orthogonality = bank.hyper.gamma * orthogonality_penalty(bank.weights);
  }
  return obj;
}

double anchor_objective(const AnchorBank& bank, const DescriptorStore& store,
                        const WeakImageSet& data) {
  return anchor_objective_terms(bank, store, data).total();
}

Eigen::MatrixXd anchor_objective_gradient(const AnchorBank& bank,
                                          const DescriptorStore& store,
                                          const WeakImageSet& data) {
  check_dims(bank, store);
  Eigen::MatrixXd grad = bank.hyper.lambda * bank.weights;
  int n = 0;
  for (const auto& li : data.items) {
    if (store[li.image].proposal_count() > 0) ++n;
  }
  for (const auto& li : data.items) {
    const auto& image = store[li.image];
    if (image.proposal_count() == 0) continue;
    add_data_gradient(bank.weights, image, li.label, 1.0 / n, grad);
  }
  if (bank.hyper.gamma > 0) {
    grad += bank.hyper.gamma * orthogonality_gradient(bank.weights);
  }
  return grad;
}

AnchorBank initialize_anchors(const DescriptorStore& store,
                              const WeakImageSet& data,
                              const AnchorHyperparams& hyper) {
  hyper.validate();
  std::vector<std::pair<int, int>> candidates;
  for (int img : images_with_label(store, data, +1)) {
    for (int p = 0; p < store[img].proposal_count(); ++p) {
      candidates.emplace_back(img, p);
    }
  }
  if (static_cast<int>(candidates.size()) < hyper.num_anchors) {
    std::ostringstream os;
    os << "only " << candidates.size() << " positive proposals for "
       << hyper.num_anchors << " anchors";
    throw ConfigError(os.str());
  }
  std::mt19937_64 rng(hyper.seed);
  AnchorBank bank;
  bank.hyper = hyper;
  bank.weights.resize(hyper.num_anchors, store.dim());
  for (int k = 0; k < hyper.num_anchors; ++k) {
    const size_t pick = k + rng() % (candidates.size() - k);
    std::swap(candidates[k], candidates[pick]);
    const auto [img, p] = candidates[k];
    bank.weights.row(k) = store[img].descriptors.row(p).cast<double>();
  }
  return bank;
}

AnchorBank train_anchors(const DescriptorStore& store, const WeakImageSet& data,
                         const AnchorHyperparams& hyper,
                         std::vector<ObjectiveSample>* log) {
  data.validate();
  AnchorBank bank = initialize_anchors(store, data, hyper);
  auto positives = images_with_label(store, data, +1);
  auto negatives = images_with_label(store, data, -1);
  if (positives.empty() || negatives.empty()) {
    throw ConfigError("anchor training needs non-empty positive and negative "
                      "images");
  }
  // Separate stream from initialization, derived from the same seed.
  std::mt19937_64 rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
  EpochSampler pos_sampler(std::move(positives));
  EpochSampler neg_sampler(std::move(negatives));

  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(bank.size(), bank.dim());
  auto record = [&](int it) {
    if (log) log->push_back({it, anchor_objective(bank, store, data)});
  };
  if (hyper.log_interval > 0) record(0);

  for (int it = 0; it < hyper.iterations; ++it) {
    const bool positive_turn = (it % 2) == 0;
    const int img = positive_turn ? pos_sampler.next(rng) : neg_sampler.next(rng);
    Eigen::MatrixXd grad = hyper.lambda * bank.weights;
    add_data_gradient(bank.weights, store[img], positive_turn ? 1.0 : -1.0,
                      1.0, grad);
    if (hyper.gamma > 0) grad += hyper.gamma * orthogonality_gradient(bank.weights);
    velocity = hyper.momentum * velocity - hyper.learning_rate * grad;
    bank.weights += velocity;
    if (!bank.weights.allFinite()) {
      std::ostringstream os;
      os << "anchor weights diverged at iteration " << it;
      throw NumericError(os.str());
    }
    if (hyper.log_interval > 0 && (it + 1) % hyper.log_interval == 0) {
      record(it + 1);
    }
  }
  for (int k = 0; k < bank.size(); ++k) {
    if (bank.weights.row(k).norm() < 1e-6) {
      std::ostringstream os;
      os << "anchor " << k << " collapsed to zero norm";
      throw NumericError(os.str());
    }
  }
  return bank;
}

ImageDetections detect_anchors(const AnchorBank& bank,
                               const ImageRecord& image, int max_detections,
                               double nms_iou) {
  if (max_detections < 1) throw InvalidInput("max_detections must be >= 1");
  if (!(nms_iou >= 0 && nms_iou < 1)) {
    throw InvalidInput("nms_iou must lie in [0, 1)");
  }
  ImageDetections out(bank.size());
  if (image.proposal_count() == 0) return out;
  const Eigen::MatrixXd s = bank.scores(image);
  std::vector<double> col(s.rows());
  for (int k = 0; k < bank.size(); ++k) {
    for (Eigen::Index p = 0; p < s.rows(); ++p) col[p] = s(p, k);
    for (int idx : greedy_nms(image.proposals, col, nms_iou, max_detections)) {
      out[k].push_back({image.proposals[idx], col[idx]});
    }
  }
  return out;
}

std::vector<ImageDetections> detect_anchors(const AnchorBank& bank,
                                            const DescriptorStore& store,
                                            int max_detections, double nms_iou,
                                            int threads) {
  check_dims(bank, store);
  std::vector<ImageDetections> out(store.size());
  parallel_for(store.size(), threads, [&](int i) {
    out[i] = detect_anchors(bank, store[i], max_detections, nms_iou);
  });
  return out;
}

}  // namespace partatlas
