#include "partatlas/embedding.h"

#include <algorithm>
#include <sstream>

#include "partatlas/error.h"
#include "partatlas/parallel.h"

namespace partatlas {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kB:
      return "B";
    case Variant::kBC:
      return "B+C";
    case Variant::kBG:
      return "B+G";
    case Variant::kBCG:
      return "B+C+G";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kB, Variant::kBC, Variant::kBG, Variant::kBCG}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown embedding variant '" + std::string(name) + "'");
}

bool has_context(Variant v) { return v == Variant::kBC || v == Variant::kBCG; }

bool has_geometry(Variant v) { return v == Variant::kBG || v == Variant::kBCG; }

Variant appearance_variant(Variant v) {
  return has_context(v) ? Variant::kBC : Variant::kB;
}

void EmbeddingConfig::validate() const {
  overlap.validate();
  if (!(context_scale > 1)) throw ConfigError("context_scale must exceed 1");
}

int embedding_dim(Variant v, int appearance_dim, int num_anchors) {
  const int base = has_context(v) ? 2 * appearance_dim : appearance_dim;
  return has_geometry(v) ? base * num_anchors : base;
}

Eigen::VectorXd geometric_embed(const Region& r, const ImageDetections& dets,
                                const OverlapConfig& overlap) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dets.size()));
  for (size_t k = 0; k < dets.size(); ++k) {
    double best = 0;
    for (const auto& d : dets[k]) {
      if (d.score <= 0) continue;
      best = std::max(best, rho(r, d.box, overlap) * d.score);
    }
    g[static_cast<Eigen::Index>(k)] = best;
  }
  return g;
}

Eigen::VectorXd joint_embed(const Eigen::VectorXd& appearance,
                            const Eigen::VectorXd& geometry) {
  if (appearance.size() == 0 || geometry.size() == 0) {
    throw InvalidInput("joint_embed of an empty vector");
  }
  const Eigen::Index k = geometry.size();
  Eigen::VectorXd out(appearance.size() * k);
  for (Eigen::Index i = 0; i < appearance.size(); ++i) {
    out.segment(i * k, k) = appearance[i] * geometry;
  }
  return out;
}

ContextMatch context_proposal(const ImageRecord& image, const Region& r,
                              double scale) {
  const Region mu = context_region(r, scale, image.width, image.height);
  ContextMatch m;
  m.proposal = image.nearest_proposal(mu, &m.iou);
  return m;
}

Eigen::VectorXd ImageFeatures::embed(int proposal, Variant v) const {
  Eigen::VectorXd a;
  if (has_context(v)) {
    const Eigen::Index d = appearance.cols();
    a.resize(2 * d);
    a.head(d) = appearance.row(proposal).transpose();
    a.tail(d) = appearance.row(context.at(proposal).proposal).transpose();
  } else {
    a = appearance.row(proposal).transpose();
  }
  if (!partatlas::has_geometry(v)) return a;
  if (!has_geometry()) {
    throw ConfigError(std::string("variant ") + std::string(to_string(v)) +
                      " needs anchor detections");
  }
  return joint_embed(a, geometry.row(proposal).transpose());
}

Eigen::MatrixXd ImageFeatures::embed_all(Variant v) const {
  const int dim = embedding_dim(v, static_cast<int>(appearance.cols()),
                                num_anchors());
  Eigen::MatrixXd out(proposal_count(), dim);
  for (int p = 0; p < proposal_count(); ++p) out.row(p) = embed(p, v).transpose();
  return out;
}

ImageFeatures compute_features(const ImageRecord& image,
                               const ImageDetections* dets,
                               const EmbeddingConfig& cfg) {
  ImageFeatures f;
  f.appearance = image.descriptors.cast<double>();
  f.context.reserve(image.proposals.size());
  for (const auto& r : image.proposals) {
    f.context.push_back(context_proposal(image, r, cfg.context_scale));
  }
  if (dets) {
    f.geometry.resize(image.proposal_count(),
                      static_cast<Eigen::Index>(dets->size()));
    for (int p = 0; p < image.proposal_count(); ++p) {
      f.geometry.row(p) =
          geometric_embed(image.proposals[p], *dets, cfg.overlap).transpose();
    }
  }
  return f;
}

std::vector<ImageFeatures> compute_features(
    const DescriptorStore& store, const std::vector<ImageDetections>* dets,
    const EmbeddingConfig& cfg, int threads) {
  cfg.validate();
  if (dets && static_cast<int>(dets->size()) != store.size()) {
    throw InvalidInput("anchor detections do not cover every image");
  }
  std::vector<ImageFeatures> out(store.size());
  parallel_for(store.size(), threads, [&](int i) {
    out[i] = compute_features(store[i], dets ? &(*dets)[i] : nullptr, cfg);
  });
  return out;
}

Eigen::VectorXd embed(const ImageRecord& image, const Region& r,
                      const ImageDetections* dets,
                      const EmbeddingConfig& cfg) {
  cfg.validate();
  const auto idx = image.find_proposal(r);
  if (!idx) {
    std::ostringstream os;
    os << "region " << r << " is not a proposal of image '" << image.id << "'";
    throw DataError(os.str());
  }
  ImageFeatures f;
  f.appearance = image.descriptors.cast<double>();
  f.context.assign(image.proposals.size(), ContextMatch{});
  f.context[*idx] = context_proposal(image, r, cfg.context_scale);
  if (dets) {
    f.geometry = Eigen::MatrixXd::Zero(image.proposal_count(),
                                       static_cast<Eigen::Index>(dets->size()));
    f.geometry.row(*idx) = geometric_embed(r, *dets, cfg.overlap).transpose();
  }
  return f.embed(*idx, cfg.variant);
}

}  // namespace partatlas
