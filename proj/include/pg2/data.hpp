#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pg2/keypoints.hpp"
#include "pg2/pose_codec.hpp"

namespace pg2 {

// ---------------------------------------------------------------------------
// Keypoint annotation file
//
// Comma-separated, one record per line:
//   image_id,x0,y0,x1,y1,...,x17,y17
// Joint order follows `Joint`; (-1,-1) marks an invisible joint. Blank lines
// and lines starting with '#' are ignored, as is a leading "image_id" header.
// ---------------------------------------------------------------------------

struct AnnotationRecord {
  std::string image_id;
  KeypointSet keypoints;
};

/// Throws DataError naming `source` and the record on malformed input.
AnnotationRecord parse_annotation_line(const std::string& line, const std::string& source);
std::map<std::string, KeypointSet> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationRecord>& records);
std::string format_annotation_line(const AnnotationRecord& record);

// ---------------------------------------------------------------------------
// Dataset index file
//
// Comma-separated with header "identity,image_path,annotation_id"; image paths
// are relative to the index file's directory. Annotation ids refer to records
// of the annotation file (by default "annotations.csv" next to the index).
// ---------------------------------------------------------------------------

struct ImageRecord {
  std::string identity;
  std::filesystem::path image_path;  // absolute or relative to the working directory
  std::string annotation_id;
  KeypointSet keypoints;
};

struct DatasetIndex {
  std::vector<ImageRecord> images;

  static DatasetIndex load(const std::filesystem::path& index_path,
                           std::optional<std::filesystem::path> annotation_path = std::nullopt);
  /// Writes identity/image path rows; paths are made relative to the index directory.
  void save(const std::filesystem::path& index_path) const;

  std::vector<std::string> identities() const;
};

/// An ordered (condition -> target) pair of image indices.
struct PairRecord {
  std::size_t condition = 0;
  std::size_t target = 0;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

/// Every ordered pair (a, b), a != b, within each identity. With a positive
/// cap, at most `cap_per_identity` pairs per identity, chosen by a seeded
/// shuffle.
std::vector<PairRecord> build_pairs(const DatasetIndex& index, int cap_per_identity = 0,
                                    std::uint64_t seed = 0);

/// Seeded random subset of `count` pairs (all pairs if count <= 0 or
/// count >= pairs.size()), in their original order.
std::vector<PairRecord> sample_pairs(const std::vector<PairRecord>& pairs, int count,
                                     std::uint64_t seed);

struct LoadOptions {
  int height = 128;
  int width = 64;
  int heatmap_radius = kDefaultHeatmapRadius;
  MorphologyParams morphology{};
};

struct PairSample {
  torch::Tensor condition_image;  // [3, H, W] in [-1, 1]
  torch::Tensor target_image;     // [3, H, W] in [-1, 1]
  KeypointSet target_keypoints;
  std::string identity;
  PoseTensor target_pose;
  PoseMask target_mask;
  bool flipped = false;
};

/// Builds a sample from already-decoded [3, H, W] images. When `flip` is
/// set both images and the target keypoints are mirrored together; heatmaps
/// and mask are derived after the flip.
PairSample make_sample(const torch::Tensor& condition, const torch::Tensor& target,
                       const KeypointSet& target_kp, const std::string& identity,
                       const LoadOptions& options, bool flip);

/// Reads both images from disk. With `augment` the flip is drawn from `rng`
/// with probability 1/2.
PairSample load_pair(const DatasetIndex& index, const PairRecord& record,
                     const LoadOptions& options, bool augment, std::mt19937_64* rng);

/// In-memory pair dataset: decoded images are cached as 8-bit tensors and
/// samples are materialized on request.
class PairDataset {
 public:
  PairDataset(DatasetIndex index, std::vector<PairRecord> pairs, LoadOptions options);

  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  PairSample sample(std::size_t i, bool flip) const;

  const DatasetIndex& index() const { return index_; }
  const std::vector<PairRecord>& pairs() const { return pairs_; }
  const LoadOptions& options() const { return options_; }

 private:
  DatasetIndex index_;
  std::vector<PairRecord> pairs_;
  LoadOptions options_;
  std::vector<torch::Tensor> images_;  // uint8 [3, H, W]
};

}  // namespace pg2
