#ifndef PARTATLAS_IO_H_
#define PARTATLAS_IO_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "partatlas/anchors.h"
#include "partatlas/dataset.h"
#include "partatlas/embedding.h"
#include "partatlas/mil.h"
#include "partatlas/nms.h"

namespace partatlas {

using Json = nlohmann::json;

inline constexpr uint32_t kFormatVersion = 1;
inline constexpr char kDescriptorMagic[4] = {'A', 'M', 'I', 'L'};

// Descriptor files: "AMIL", u32 version, u32 rows, u32 cols, then rows*cols
// little-endian float32 values, row-major.
void write_descriptors(const std::filesystem::path& path,
                       const DescriptorMatrix& m);
DescriptorMatrix read_descriptors(const std::filesystem::path& path);

std::vector<Region> read_proposals(const std::filesystem::path& path);
void write_proposals(const std::filesystem::path& path,
                     const std::vector<Region>& boxes);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

// Wraps a payload with its format tag and version.
Json versioned(std::string_view format);
// Throws DataError unless j declares `format` at a supported version.
void check_format(const Json& j, std::string_view format,
                  std::string_view source = "");

Json region_to_json(const Region& r);
Region region_from_json(const Json& j);

struct LoadReport {
  int renormalized_rows = 0;
};

// Reads a manifest and every proposal/descriptor file it references
// (paths relative to the manifest's directory).
Dataset load_dataset(const std::filesystem::path& manifest,
                     LoadReport* report = nullptr, int threads = 1);

// Writes manifest.json plus proposals/<id>.json and descriptors/<id>.amil
// under `dir`. `run` is stored verbatim when not null.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                  const Json* run = nullptr);

Json to_json(const AnchorHyperparams& h);
AnchorHyperparams anchor_hyper_from_json(const Json& j);
Json to_json(const AnchorBank& bank);
AnchorBank anchor_bank_from_json(const Json& j);

Json to_json(const PartModel& model);
PartModel part_model_from_json(const Json& j);

Json to_json(const std::vector<RoundLog>& log);

Json detections_to_json(const std::vector<Detection>& dets);
std::vector<Detection> detections_from_json(const Json& j);

// Per-image anchor detections keyed by image id.
Json anchor_detections_to_json(const DescriptorStore& store,
                               const std::vector<ImageDetections>& dets);
// Reorders to match `store`; every image must be present.
std::vector<ImageDetections> anchor_detections_from_json(
    const Json& j, const DescriptorStore& store);

// concept -> detections per store image.
using PartDetections = std::map<std::string, std::vector<std::vector<Detection>>>;

Json part_detections_to_json(const DescriptorStore& store,
                             const PartDetections& dets);
PartDetections part_detections_from_json(const Json& j,
                                         const DescriptorStore& store);

// Image pairs by id, resolved to store indices on load.
Json pairs_to_json(const DescriptorStore& store,
                   const std::vector<std::pair<int, int>>& pairs);
std::vector<std::pair<int, int>> pairs_from_json(const Json& j,
                                                 const DescriptorStore& store);

}  // namespace partatlas

#endif  // PARTATLAS_IO_H_
