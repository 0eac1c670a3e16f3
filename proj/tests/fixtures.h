// Small random datasets shared by the unit tests.

#ifndef PARTATLAS_TESTS_FIXTURES_H_
#define PARTATLAS_TESTS_FIXTURES_H_

#include <random>
#include <string>

#include "oracles.h"
#include "partatlas/dataset.h"

namespace fixture {

using namespace partatlas;

inline DescriptorMatrix random_descriptors(std::mt19937_64& rng, int rows, int dim) {
  std::normal_distribution<float> n(0, 1);
  DescriptorMatrix m(rows, dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) m(r, c) = n(rng);
    m.row(r) /= m.row(r).norm();
  }
  return m;
}

// Proposal 0 covers the whole image; the rest are random.
inline ImageRecord random_image(std::mt19937_64& rng, const std::string& id,
                                int proposals, int dim, double size = 100) {
  ImageRecord rec;
  rec.id = id;
  rec.width = size;
  rec.height = size;
  rec.proposals.push_back(Region(0, 0, size, size));
  for (int p = 1; p < proposals; ++p) {
    rec.proposals.push_back(oracle::random_box(rng, size, 0.05 * size));
  }
  rec.descriptors = random_descriptors(rng, proposals, dim);
  return rec;
}

// n images, alternating positive/negative labels for concept "part".
inline Dataset random_dataset(uint64_t seed, int n, int proposals, int dim) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.vocabulary = {"part"};
  ds.store = DescriptorStore(dim);
  for (int i = 0; i < n; ++i) {
    ds.store.add(random_image(rng, "im" + std::to_string(i), proposals, dim));
    ds.labels.push_back({{"part", i % 2 == 0 ? 1 : -1}});
  }
  return ds;
}

}  // namespace fixture

#endif  // PARTATLAS_TESTS_FIXTURES_H_
