#include "pg2/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "pg2/errors.hpp"
#include "pg2/image_io.hpp"

namespace pg2 {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::uint64_t identity_salt(const std::string& id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool skippable(const std::string& line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace

AnnotationRecord parse_annotation_line(const std::string& line, const std::string& source) {
  const auto fields = split_csv(trim(line));
  const std::string id = fields.empty() ? std::string("<empty>") : fields.front();
  const std::size_t expected = 1 + 2 * kNumJoints;
  if (fields.size() != expected) {
    const std::size_t coords = fields.empty() ? 0 : fields.size() - 1;
    if (coords % 2 != 0) {
      throw DataError(source + ": record '" + id + "' has an odd number of coordinates (" +
                      std::to_string(coords) + ")");
    }
    throw DataError(source + ": record '" + id + "' has " + std::to_string(coords / 2) +
                    " keypoints, expected " + std::to_string(kNumJoints));
  }
  std::array<std::pair<int, int>, kNumJoints> xy{};
  for (std::size_t k = 0; k < kNumJoints; ++k) {
    for (std::size_t c = 0; c < 2; ++c) {
      const auto& f = fields[1 + 2 * k + c];
      int v = 0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw DataError(source + ": record '" + id + "' has a non-integer coordinate '" + f +
                        "' for joint " + std::string(kJointNames[k]));
      }
      (c == 0 ? xy[k].first : xy[k].second) = v;
    }
    const auto [x, y] = xy[k];
    if ((x < 0 || y < 0) && !(x == -1 && y == -1)) {
      throw DataError(source + ": record '" + id + "' joint " + std::string(kJointNames[k]) +
                      " has negative coordinates other than the (-1,-1) sentinel");
    }
  }
  return AnnotationRecord{id, KeypointSet::from_coordinates(xy)};
}

std::map<std::string, KeypointSet> read_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file " + path.string());
  std::map<std::string, KeypointSet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    if (lineno == 1 && trim(line).rfind("image_id", 0) == 0) continue;
    auto rec = parse_annotation_line(line, path.string() + ":" + std::to_string(lineno));
    if (!out.emplace(rec.image_id, rec.keypoints).second) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate record '" +
                      rec.image_id + "'");
    }
  }
  return out;
}

std::string format_annotation_line(const AnnotationRecord& record) {
  std::string line = record.image_id;
  for (const auto& p : record.keypoints.points) {
    line += "," + std::to_string(p.visible ? p.x : -1) + "," + std::to_string(p.visible ? p.y : -1);
  }
  return line;
}

void write_annotations(const fs::path& path, const std::vector<AnnotationRecord>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write annotation file " + path.string());
  out << "image_id";
  for (std::size_t k = 0; k < kNumJoints; ++k) out << ",x" << k << ",y" << k;
  out << "\n";
  for (const auto& r : records) out << format_annotation_line(r) << "\n";
}

DatasetIndex DatasetIndex::load(const fs::path& index_path, std::optional<fs::path> annotation_path) {
  std::ifstream in(index_path);
  if (!in) throw DataError("cannot open dataset index " + index_path.string());
  const fs::path dir = index_path.parent_path();
  const fs::path ann_path = annotation_path.value_or(dir / "annotations.csv");
  const auto annotations = read_annotations(ann_path);

  DatasetIndex index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const auto fields = split_csv(trim(line));
    if (lineno == 1 && !fields.empty() && fields[0] == "identity") continue;
    const auto where = index_path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 3) {
      throw DataError(where + ": expected identity,image_path,annotation_id");
    }
    auto it = annotations.find(fields[2]);
    if (it == annotations.end()) {
      throw DataError(where + ": no annotation record '" + fields[2] + "' in " + ann_path.string());
    }
    fs::path image = fields[1];
    if (image.is_relative()) image = dir / image;
    index.images.push_back(ImageRecord{fields[0], image, fields[2], it->second});
  }
  return index;
}

void DatasetIndex::save(const fs::path& index_path) const {
  if (index_path.has_parent_path()) fs::create_directories(index_path.parent_path());
  std::ofstream out(index_path);
  if (!out) throw DataError("cannot write dataset index " + index_path.string());
  const fs::path dir = index_path.parent_path().empty() ? fs::path(".") : index_path.parent_path();
  out << "identity,image_path,annotation_id\n";
  for (const auto& r : images) {
    out << r.identity << "," << fs::relative(r.image_path, dir).generic_string() << ","
        << r.annotation_id << "\n";
  }
}

std::vector<std::string> DatasetIndex::identities() const {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& r : images) {
    if (seen.insert(r.identity).second) ids.push_back(r.identity);
  }
  return ids;
}

std::vector<PairRecord> build_pairs(const DatasetIndex& index, int cap_per_identity,
                                    std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < index.images.size(); ++i) {
    by_identity[index.images[i].identity].push_back(i);
  }
  std::vector<PairRecord> pairs;
  for (const auto& id : index.identities()) {
    const auto& members = by_identity[id];
    std::vector<PairRecord> local;
    for (auto a : members) {
      for (auto b : members) {
        if (a != b) local.push_back({a, b});
      }
    }
    if (cap_per_identity > 0 && local.size() > static_cast<std::size_t>(cap_per_identity)) {
      std::mt19937_64 rng(seed ^ identity_salt(id));
      std::shuffle(local.begin(), local.end(), rng);
      local.resize(static_cast<std::size_t>(cap_per_identity));
      std::sort(local.begin(), local.end(), [](const PairRecord& x, const PairRecord& y) {
        return std::tie(x.condition, x.target) < std::tie(y.condition, y.target);
      });
    }
    pairs.insert(pairs.end(), local.begin(), local.end());
  }
  return pairs;
}

std::vector<PairRecord> sample_pairs(const std::vector<PairRecord>& pairs, int count,
                                     std::uint64_t seed) {
  if (count <= 0 || static_cast<std::size_t>(count) >= pairs.size()) return pairs;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(static_cast<std::size_t>(count));
  std::sort(order.begin(), order.end());
  std::vector<PairRecord> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(pairs[i]);
  return out;
}

PairSample make_sample(const torch::Tensor& condition, const torch::Tensor& target,
                       const KeypointSet& target_kp, const std::string& identity,
                       const LoadOptions& options, bool flip) {
  for (const auto* img : {&condition, &target}) {
    if (img->dim() != 3 || img->size(0) != 3 || img->size(1) != options.height ||
        img->size(2) != options.width) {
      throw DataError("image of identity '" + identity + "' is not " +
                      std::to_string(options.height) + "x" + std::to_string(options.width));
    }
  }
  target_kp.validate(options.height, options.width);

  PairSample s;
  s.identity = identity;
  s.flipped = flip;
  if (flip) {
    s.condition_image = condition.flip({-1});
    std::tie(s.target_image, s.target_keypoints) = flip_pair(target, target_kp);
  } else {
    s.condition_image = condition;
    s.target_image = target;
    s.target_keypoints = target_kp;
  }
  s.target_pose = encode_heatmaps(s.target_keypoints, options.height, options.width,
                                  options.heatmap_radius);
  s.target_mask =
      compute_pose_mask(s.target_keypoints, options.height, options.width, options.morphology);
#ifndef NDEBUG
  if (s.target_keypoints.num_visible() >= 2 &&
      options.morphology.keypoint_radius >= options.heatmap_radius) {
    auto covered = s.target_pose.channels.amax(0).le(s.target_mask.mask).all().item<bool>();
    if (!covered) throw DataError("pose mask does not cover the heatmaps of '" + identity + "'");
  }
#endif
  return s;
}

PairSample load_pair(const DatasetIndex& index, const PairRecord& record,
                     const LoadOptions& options, bool augment, std::mt19937_64* rng) {
  if (record.condition >= index.images.size() || record.target >= index.images.size()) {
    throw DataError("pair record refers to an image outside the index");
  }
  const auto& a = index.images[record.condition];
  const auto& b = index.images[record.target];
  if (a.identity != b.identity) {
    throw DataError("pair mixes identities '" + a.identity + "' and '" + b.identity + "'");
  }
  bool flip = false;
  if (augment) {
    if (!rng) throw UsageError("load_pair: augmentation requires a random generator");
    flip = std::bernoulli_distribution(0.5)(*rng);
  }
  return make_sample(load_image(a.image_path), load_image(b.image_path), b.keypoints, b.identity,
                     options, flip);
}

PairDataset::PairDataset(DatasetIndex index, std::vector<PairRecord> pairs, LoadOptions options)
    : index_(std::move(index)), pairs_(std::move(pairs)), options_(std::move(options)) {
  images_.resize(index_.images.size());
  std::vector<bool> needed(index_.images.size(), false);
  for (const auto& p : pairs_) {
    if (p.condition >= needed.size() || p.target >= needed.size()) {
      throw DataError("pair record refers to an image outside the index");
    }
    if (index_.images[p.condition].identity != index_.images[p.target].identity) {
      throw DataError("pair mixes identities");
    }
    needed[p.condition] = needed[p.target] = true;
  }
  for (std::size_t i = 0; i < images_.size(); ++i) {
    if (!needed[i]) continue;
    images_[i] = to_rgb8(load_image(index_.images[i].image_path));
    if (images_[i].size(1) != options_.height || images_[i].size(2) != options_.width) {
      throw DataError("image " + index_.images[i].image_path.string() + " is not " +
                      std::to_string(options_.height) + "x" + std::to_string(options_.width));
    }
    index_.images[i].keypoints.validate(options_.height, options_.width);
  }
}

PairSample PairDataset::sample(std::size_t i, bool flip) const {
  const auto& p = pairs_.at(i);
  const auto& target = index_.images[p.target];
  return make_sample(from_rgb8(images_[p.condition]), from_rgb8(images_[p.target]),
                     target.keypoints, target.identity, options_, flip);
}

}  // namespace pg2
