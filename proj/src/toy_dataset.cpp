#include "pg2/toy_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pg2/errors.hpp"
#include "pg2/image_io.hpp"

namespace pg2 {

namespace fs = std::filesystem;

namespace {

Rgb random_color(std::mt19937_64& rng, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return {static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng)),
          static_cast<std::uint8_t>(d(rng))};
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Keypoint place(double x, double y, int height, int width) {
  const int xi = std::clamp(static_cast<int>(std::lround(x)), 0, width - 1);
  const int yi = std::clamp(static_cast<int>(std::lround(y)), 0, height - 1);
  return Keypoint{xi, yi, true};
}

void paint(torch::TensorAccessor<std::uint8_t, 3>& acc, morphology::Binary& figure,
           const morphology::Binary& part, int width, const Rgb& color) {
  for (std::size_t idx = 0; idx < part.size(); ++idx) {
    if (!part[idx]) continue;
    const int i = static_cast<int>(idx) / width;
    const int j = static_cast<int>(idx) % width;
    for (int c = 0; c < 3; ++c) acc[c][i][j] = color[c];
    figure[idx] = 1;
  }
}

std::int64_t cross(const Keypoint& a, const Keypoint& b, int x, int y) {
  return static_cast<std::int64_t>(b.x - a.x) * (y - a.y) -
         static_cast<std::int64_t>(b.y - a.y) * (x - a.x);
}

}  // namespace

ToyAppearance sample_appearance(std::mt19937_64& rng) {
  ToyAppearance look;
  look.background = random_color(rng, 170, 240);
  look.skin = random_color(rng, 120, 220);
  look.torso = random_color(rng, 20, 200);
  look.stripe = random_color(rng, 20, 200);
  look.arms = random_color(rng, 20, 200);
  look.legs = random_color(rng, 20, 160);
  look.stripe_period = std::uniform_int_distribution<int>(0, 1)(rng) == 0
                           ? 0
                           : std::uniform_int_distribution<int>(2, 4)(rng);
  look.shoulder_half_width = uniform(rng, 0.14, 0.2);
  look.hip_half_width = uniform(rng, 0.09, 0.13);
  return look;
}

KeypointSet sample_toy_pose(std::mt19937_64& rng, const ToyAppearance& look, int height,
                            int width) {
  const double h = height;
  const double w = width;
  const double cx = w / 2.0 + uniform(rng, -0.08, 0.08) * w;
  KeypointSet kp;
  auto set = [&](Joint j, double x, double y) {
    kp.points[static_cast<std::size_t>(j)] = place(x, y, height, width);
  };

  const double neck_y = 0.22 * h;
  const double nose_x = cx + uniform(rng, -0.04, 0.04) * w;
  const double nose_y = 0.12 * h;
  set(Joint::Neck, cx, neck_y);
  set(Joint::Nose, nose_x, nose_y);
  set(Joint::REye, nose_x - 0.06 * w, nose_y - 0.03 * h);
  set(Joint::LEye, nose_x + 0.06 * w, nose_y - 0.03 * h);
  set(Joint::REar, nose_x - 0.12 * w, nose_y - 0.01 * h);
  set(Joint::LEar, nose_x + 0.12 * w, nose_y - 0.01 * h);

  const double shoulder_y = neck_y + 0.01 * h;
  const double hip_y = 0.52 * h;
  const double sx = look.shoulder_half_width * w;
  const double hx = look.hip_half_width * w;

  // Angles are measured from the downward vertical, positive away from the body.
  auto limb = [&](double x0, double y0, double outward, double len1, double len2, double a_lo,
                  double a_hi, double b_lo, double b_hi, Joint mid, Joint end) {
    const double a = uniform(rng, a_lo, a_hi);
    const double b = uniform(rng, b_lo, b_hi);
    const double x1 = x0 + outward * len1 * std::sin(a);
    const double y1 = y0 + len1 * std::cos(a);
    const double x2 = x1 + outward * len2 * std::sin(a + b);
    const double y2 = y1 + len2 * std::cos(a + b);
    set(mid, x1, y1);
    set(end, x2, y2);
  };

  set(Joint::RShoulder, cx - sx, shoulder_y);
  set(Joint::LShoulder, cx + sx, shoulder_y);
  limb(cx - sx, shoulder_y, -1.0, 0.16 * h, 0.15 * h, -0.2, 1.6, -0.3, 1.2, Joint::RElbow,
       Joint::RWrist);
  limb(cx + sx, shoulder_y, 1.0, 0.16 * h, 0.15 * h, -0.2, 1.6, -0.3, 1.2, Joint::LElbow,
       Joint::LWrist);

  set(Joint::RHip, cx - hx, hip_y);
  set(Joint::LHip, cx + hx, hip_y);
  limb(cx - hx, hip_y, -1.0, 0.2 * h, 0.2 * h, -0.15, 0.45, -0.35, 0.35, Joint::RKnee,
       Joint::RAnkle);
  limb(cx + hx, hip_y, 1.0, 0.2 * h, 0.2 * h, -0.15, 0.45, -0.35, 0.35, Joint::LKnee,
       Joint::LAnkle);
  return kp;
}

ToyRender render_toy_figure(const ToyAppearance& look, const KeypointSet& kp, int height,
                            int width) {
  kp.validate(height, width);
  if (kp.num_visible() != kNumJoints) {
    throw UsageError("toy figures need all 18 joints visible");
  }
  ToyRender out;
  out.rgb = torch::empty({3, height, width}, torch::kUInt8);
  auto acc = out.rgb.accessor<std::uint8_t, 3>();
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < height; ++i) {
      for (int j = 0; j < width; ++j) acc[c][i][j] = look.background[c];
    }
  }
  const std::size_t n = static_cast<std::size_t>(height) * width;
  out.figure.assign(n, 0);
  const double limb_thickness = std::max(3.0, 0.07 * height);

  auto segment_part = [&](Joint a, Joint b, double thickness) {
    morphology::Binary part(n, 0);
    const auto& p = kp[static_cast<std::size_t>(a)];
    const auto& q = kp[static_cast<std::size_t>(b)];
    morphology::draw_segment(part, height, width, p.x, p.y, q.x, q.y, thickness);
    return part;
  };
  auto draw = [&](Joint a, Joint b, double thickness, const Rgb& color) {
    paint(acc, out.figure, segment_part(a, b, thickness), width, color);
  };

  draw(Joint::RHip, Joint::RKnee, limb_thickness, look.legs);
  draw(Joint::RKnee, Joint::RAnkle, limb_thickness, look.legs);
  draw(Joint::LHip, Joint::LKnee, limb_thickness, look.legs);
  draw(Joint::LKnee, Joint::LAnkle, limb_thickness, look.legs);

  // Torso: convex quad through the shoulders and hips.
  {
    const auto& rs = kp[static_cast<std::size_t>(Joint::RShoulder)];
    const auto& ls = kp[static_cast<std::size_t>(Joint::LShoulder)];
    const auto& lh = kp[static_cast<std::size_t>(Joint::LHip)];
    const auto& rh = kp[static_cast<std::size_t>(Joint::RHip)];
    const std::array<const Keypoint*, 4> quad = {&rs, &ls, &lh, &rh};
    const int top = std::min(rs.y, ls.y);
    morphology::Binary plain(n, 0);
    morphology::Binary striped(n, 0);
    for (int i = 0; i < height; ++i) {
      for (int j = 0; j < width; ++j) {
        bool pos = true;
        bool neg = true;
        for (std::size_t e = 0; e < 4; ++e) {
          const auto c = cross(*quad[e], *quad[(e + 1) % 4], j, i);
          pos = pos && c >= 0;
          neg = neg && c <= 0;
        }
        if (!(pos || neg)) continue;
        const bool stripe = look.stripe_period > 0 && ((i - top) / look.stripe_period) % 2 == 1;
        (stripe ? striped : plain)[static_cast<std::size_t>(i) * width + j] = 1;
      }
    }
    paint(acc, out.figure, plain, width, look.torso);
    paint(acc, out.figure, striped, width, look.stripe);
  }

  draw(Joint::RShoulder, Joint::RElbow, limb_thickness, look.arms);
  draw(Joint::RElbow, Joint::RWrist, limb_thickness, look.arms);
  draw(Joint::LShoulder, Joint::LElbow, limb_thickness, look.arms);
  draw(Joint::LElbow, Joint::LWrist, limb_thickness, look.arms);
  draw(Joint::Neck, Joint::Nose, 3.0, look.skin);

  const auto& nose = kp[static_cast<std::size_t>(Joint::Nose)];
  morphology::Binary head(n, 0);
  morphology::draw_disk(head, height, width, nose.x, nose.y,
                        std::max(2, static_cast<int>(std::lround(0.06 * height))));
  paint(acc, out.figure, head, width, look.skin);

  const Rgb dark = {30, 30, 30};
  for (Joint eye : {Joint::REye, Joint::LEye}) {
    morphology::Binary dot(n, 0);
    const auto& p = kp[static_cast<std::size_t>(eye)];
    dot[static_cast<std::size_t>(p.y) * width + p.x] = 1;
    paint(acc, out.figure, dot, width, dark);
  }
  return out;
}

void ToySpec::validate() const {
  if (num_identities < 1 || images_per_identity < 1 || num_test_identities < 0) {
    throw UsageError("toy spec needs at least one identity with one image");
  }
  if (image_height < 32 || image_width < 16) {
    throw UsageError("toy images must be at least 32x16");
  }
}

json ToySpec::to_json() const {
  return {{"num_identities", num_identities},
          {"images_per_identity", images_per_identity},
          {"num_test_identities", num_test_identities},
          {"image_height", image_height},
          {"image_width", image_width},
          {"seed", seed}};
}

ToySpec ToySpec::from_json(const json& j) {
  ToySpec s;
  s.num_identities = j.value("num_identities", s.num_identities);
  s.images_per_identity = j.value("images_per_identity", s.images_per_identity);
  s.num_test_identities = j.value("num_test_identities", s.num_test_identities);
  s.image_height = j.value("image_height", s.image_height);
  s.image_width = j.value("image_width", s.image_width);
  s.seed = j.value("seed", s.seed);
  return s;
}

ToyDataset make_toy_dataset(const ToySpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  ToyDataset ds;
  ds.root = out_dir;
  std::vector<AnnotationRecord> annotations;
  const int total = spec.num_identities + spec.num_test_identities;
  const auto seed_lo = static_cast<std::uint32_t>(spec.seed & 0xffffffffu);
  const auto seed_hi = static_cast<std::uint32_t>(spec.seed >> 32);
  for (int id = 0; id < total; ++id) {
    std::seed_seq look_seq{seed_lo, seed_hi, static_cast<std::uint32_t>(id), 0u};
    std::mt19937_64 look_rng(look_seq);
    const ToyAppearance look = sample_appearance(look_rng);
    char identity[16];
    std::snprintf(identity, sizeof(identity), "id%03d", id);
    for (int k = 0; k < spec.images_per_identity; ++k) {
      std::seed_seq pose_seq{seed_lo, seed_hi, static_cast<std::uint32_t>(id),
                             static_cast<std::uint32_t>(k + 1)};
      std::mt19937_64 pose_rng(pose_seq);
      const KeypointSet kp = sample_toy_pose(pose_rng, look, spec.image_height, spec.image_width);
      const auto render = render_toy_figure(look, kp, spec.image_height, spec.image_width);
      const std::string name = std::string(identity) + "_" + std::to_string(k);
      const fs::path image_path = out_dir / "images" / (name + ".png");
      save_image(from_rgb8(render.rgb), image_path);
      annotations.push_back({name, kp});
      (id < spec.num_identities ? ds.train : ds.test)
          .images.push_back(ImageRecord{identity, image_path, name, kp});
    }
  }
  write_annotations(out_dir / "annotations.csv", annotations);
  ds.train.save(out_dir / "index_train.csv");
  ds.test.save(out_dir / "index_test.csv");
  std::ofstream manifest(out_dir / "toy_manifest.json");
  if (!manifest) throw DataError("cannot write toy manifest in " + out_dir.string());
  manifest << json{{"toy_spec", spec.to_json()}}.dump(2) << "\n";
  return ds;
}

}  // namespace pg2
