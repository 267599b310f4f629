#include "tpr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <json.hpp>

#include "tpr/tensor_io.hpp"

namespace tpr::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// class colors (RGB); same class => identical appearance
constexpr double kColors[kNumClasses][3] = {
    {0.85, 0.25, 0.20},  // circle
    {0.20, 0.80, 0.30},  // square
    {0.25, 0.45, 0.90},  // triangle
};

struct ShapeTrack {
  ShapeKind kind;
  double cy0, cx0;  // start center
  double vy, vx;    // velocity px/frame
  double r0, r1;    // size at first/last frame (log-interpolated)
};

double size_at(const ShapeTrack& s, double t01) {
  return s.r0 * std::pow(s.r1 / s.r0, t01);
}

// Reflect into [lo, hi] (billiard walls keep shapes on screen).
double reflect(double v, double lo, double hi) {
  if (hi <= lo) return lo;
  const double span = hi - lo;
  double x = std::fmod(v - lo, 2 * span);
  if (x < 0) x += 2 * span;
  return x <= span ? lo + x : hi - (x - span);
}

struct ShapeAt {
  double cy, cx, r;
  ShapeKind kind;
};

bool inside(const ShapeAt& s, double y, double x) {
  const double dy = y - s.cy, dx = x - s.cx;
  switch (s.kind) {
    case ShapeKind::Circle:
      return dy * dy + dx * dx <= s.r * s.r;
    case ShapeKind::Square:
      return std::max(std::abs(dy), std::abs(dx)) <= 0.9 * s.r;
    case ShapeKind::Triangle: {
      // equilateral, apex up, circumradius 1.15 r
      const double rr = 1.15 * s.r;
      double py[3], px[3];
      for (int k = 0; k < 3; ++k) {
        const double a = -kPi / 2 + 2 * kPi * k / 3;
        py[k] = s.cy + rr * std::sin(a);
        px[k] = s.cx + rr * std::cos(a);
      }
      double sign = 0;
      for (int k = 0; k < 3; ++k) {
        const int k2 = (k + 1) % 3;
        const double cross = (px[k2] - px[k]) * (y - py[k]) -
                             (py[k2] - py[k]) * (x - px[k]);
        if (k == 0)
          sign = cross;
        else if (cross * sign < 0)
          return false;
      }
      return true;
    }
  }
  return false;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  a ^= b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2);
  return a;
}

Clip try_gen(const SynthConfig& cfg, std::uint64_t clip_index,
             std::uint64_t attempt) {
  std::mt19937_64 rng(mix(mix(cfg.seed, clip_index + 1), attempt * 7919 + 1));
  const int t_count = cfg.frames_per_clip;
  const int h = cfg.frame_h, w = cfg.frame_w;
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const int n = cfg.min_shapes +
                static_cast<int>(rng() % static_cast<std::uint64_t>(
                                             cfg.max_shapes - cfg.min_shapes + 1));
  std::vector<ShapeTrack> shapes;
  for (int i = 0; i < n; ++i) {
    ShapeTrack s;
    s.kind = static_cast<ShapeKind>(rng() % kNumClasses);
    s.r0 = 7.0 + 7.0 * u01(rng);
    const double f =
        std::pow(3.0, (2.0 * u01(rng) - 1.0) * cfg.scale_change_rate);
    s.r1 = std::clamp(s.r0 * f, 5.0, 0.22 * std::min(h, w));
    const double ang = 2 * kPi * u01(rng);
    const double speed = cfg.motion_speed * (0.6 + 0.8 * u01(rng));
    s.vy = speed * std::sin(ang);
    s.vx = speed * std::cos(ang);
    s.cy0 = s.r0 + u01(rng) * (h - 2 * s.r0);
    s.cx0 = s.r0 + u01(rng) * (w - 2 * s.r0);
    shapes.push_back(s);
  }

  // Steer some pairs to cross mid-clip: shift the later shape's start so the
  // two centers nearly coincide at the crossing frame.
  int steered = 0;
  for (int i = 0; i < n && steered < 2; ++i)
    for (int j = i + 1; j < n && steered < 2; ++j) {
      if (u01(rng) >= cfg.overlap_bias) continue;
      const int tc = t_count / 3 +
                     static_cast<int>(rng() % static_cast<std::uint64_t>(
                                                  std::max(1, t_count / 3)));
      const double dy = 4.0 * (u01(rng) - 0.5), dx = 4.0 * (u01(rng) - 0.5);
      shapes[static_cast<size_t>(j)].cy0 =
          shapes[static_cast<size_t>(i)].cy0 +
          shapes[static_cast<size_t>(i)].vy * tc + dy -
          shapes[static_cast<size_t>(j)].vy * tc;
      shapes[static_cast<size_t>(j)].cx0 =
          shapes[static_cast<size_t>(i)].cx0 +
          shapes[static_cast<size_t>(i)].vx * tc + dx -
          shapes[static_cast<size_t>(j)].vx * tc;
      ++steered;
    }

  // static textured background, fixed per clip
  std::vector<double> bg(static_cast<size_t>(3) * h * w);
  {
    const double fy = 0.02 + 0.05 * u01(rng), fx = 0.02 + 0.05 * u01(rng);
    const double phase[3] = {2 * kPi * u01(rng), 2 * kPi * u01(rng),
                             2 * kPi * u01(rng)};
    std::mt19937_64 nrng(mix(cfg.seed, clip_index * 31 + 17));
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          bg[(static_cast<size_t>(c) * h + y) * w + x] =
              0.38 + 0.08 * std::sin(2 * kPi * (fy * y + fx * x) + phase[c]) +
              0.05 * un(nrng);
  }

  Clip clip;
  clip.gt.frames = t_count;
  clip.gt.h = h;
  clip.gt.w = w;
  clip.gt.per_frame.resize(static_cast<size_t>(t_count));
  for (int i = 0; i < n; ++i) {
    clip.gt.instance_ids.push_back(i + 1);
    clip.gt.instance_classes.push_back(static_cast<int>(shapes[static_cast<size_t>(i)].kind));
  }

  for (int t = 0; t < t_count; ++t) {
    const double t01 = t_count > 1 ? static_cast<double>(t) / (t_count - 1) : 0.0;
    std::vector<ShapeAt> at(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const ShapeTrack& s = shapes[static_cast<size_t>(i)];
      const double r = size_at(s, t01);
      at[static_cast<size_t>(i)] = {reflect(s.cy0 + s.vy * t, r, h - 1 - r),
                                    reflect(s.cx0 + s.vx * t, r, w - 1 - r), r,
                                    s.kind};
    }

    Array frame(static_cast<long>(3) * h * w);
    for (long i = 0; i < frame.size(); ++i) frame[i] = bg[static_cast<size_t>(i)];

    auto& gts = clip.gt.per_frame[static_cast<size_t>(t)];
    gts.assign(static_cast<size_t>(n), InstanceFrameGT{});
    for (auto& g : gts) g.mask.assign(static_cast<size_t>(h) * w, 0);

    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int owner = -1;
        int covered = 0;
        for (int i = 0; i < n; ++i)
          if (inside(at[static_cast<size_t>(i)], y, x)) {
            owner = i;  // later shapes draw on top
            ++covered;
          }
        if (covered >= 2) clip.gt.overlap_heavy = true;
        if (owner < 0) continue;
        gts[static_cast<size_t>(owner)].mask[static_cast<size_t>(y) * w + x] = 1;
        const int cls = static_cast<int>(at[static_cast<size_t>(owner)].kind);
        for (int c = 0; c < 3; ++c)
          frame[(static_cast<long>(c) * h + y) * w + x] = kColors[cls][c];
      }

    for (int i = 0; i < n; ++i) {
      InstanceFrameGT& g = gts[static_cast<size_t>(i)];
      int y0 = h, x0 = w, y1 = -1, x1 = -1;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (g.mask[static_cast<size_t>(y) * w + x]) {
            y0 = std::min(y0, y);
            x0 = std::min(x0, x);
            y1 = std::max(y1, y);
            x1 = std::max(x1, x);
          }
      if (y1 >= 0) {
        g.visible = true;
        g.y0 = y0;
        g.x0 = x0;
        g.y1 = y1 + 1;
        g.x1 = x1 + 1;
      }
    }

    frame = frame.min(1.0).max(0.0);
    clip.frames.push_back(Tensor::from_array({3, h, w}, std::move(frame)));
  }
  return clip;
}

}  // namespace

Clip gen_clip(const SynthConfig& cfg, std::uint64_t clip_index) {
  TPR_CHECK(cfg.frames_per_clip >= 1, "gen_clip: need at least one frame");
  TPR_CHECK(cfg.min_shapes >= 1 && cfg.max_shapes >= cfg.min_shapes,
            "gen_clip: bad shape count range");
  for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
    Clip clip = try_gen(cfg, clip_index, attempt);
    bool ok = true;
    for (int i = 0; ok && i < clip.gt.instances(); ++i) {
      int vis = 0;
      for (int t = 0; t < clip.gt.frames; ++t)
        vis += clip.gt.per_frame[static_cast<size_t>(t)][static_cast<size_t>(i)]
                   .visible;
      ok = vis >= std::min(2, clip.gt.frames);
    }
    if (ok) return clip;
  }
  throw Error("gen_clip: could not satisfy visibility constraints for clip " +
              std::to_string(clip_index));
}

void write_dataset(const std::string& dir, const SynthConfig& cfg,
                   int clip_count) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index;
  index["synth"] = {{"video_count", cfg.video_count},
                    {"frames_per_clip", cfg.frames_per_clip},
                    {"frame_h", cfg.frame_h},
                    {"frame_w", cfg.frame_w},
                    {"min_shapes", cfg.min_shapes},
                    {"max_shapes", cfg.max_shapes},
                    {"scale_change_rate", cfg.scale_change_rate},
                    {"overlap_bias", cfg.overlap_bias},
                    {"motion_speed", cfg.motion_speed},
                    {"seed", cfg.seed}};
  nlohmann::json jclips = nlohmann::json::array();
  for (int ci = 0; ci < clip_count; ++ci) {
    Clip clip = gen_clip(cfg, static_cast<std::uint64_t>(ci));
    const int t_count = clip.gt.frames, h = clip.gt.h, w = clip.gt.w;
    const int n = clip.gt.instances();
    char base[64];
    std::snprintf(base, sizeof(base), "clip_%04d", ci);

    Array fr(static_cast<long>(t_count) * 3 * h * w);
    for (int t = 0; t < t_count; ++t)
      fr.segment(static_cast<long>(t) * 3 * h * w, 3 * h * w) =
          clip.frames[static_cast<size_t>(t)].data();
    io::write_tensor(dir + "/" + base + "_frames.tpr",
                     Tensor::from_array({t_count, 3, h, w}, std::move(fr)));

    Array mk = Array::Zero(static_cast<long>(n) * t_count * h * w);
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < t_count; ++t) {
        const auto& g =
            clip.gt.per_frame[static_cast<size_t>(t)][static_cast<size_t>(i)];
        const long off = (static_cast<long>(i) * t_count + t) * h * w;
        for (long p = 0; p < static_cast<long>(h) * w; ++p)
          mk[off + p] = g.mask[static_cast<size_t>(p)] ? 1.0 : 0.0;
      }
    io::write_tensor(dir + "/" + base + "_masks.tpr",
                     Tensor::from_array({n, t_count, h, w}, std::move(mk)));

    nlohmann::json jc;
    jc["id"] = ci;
    jc["frames"] = std::string(base) + "_frames.tpr";
    jc["masks"] = std::string(base) + "_masks.tpr";
    jc["classes"] = clip.gt.instance_classes;
    jc["instance_ids"] = clip.gt.instance_ids;
    jc["overlap_heavy"] = clip.gt.overlap_heavy;
    nlohmann::json jboxes = nlohmann::json::array();
    for (int t = 0; t < t_count; ++t) {
      nlohmann::json row = nlohmann::json::array();
      for (int i = 0; i < n; ++i) {
        const auto& g =
            clip.gt.per_frame[static_cast<size_t>(t)][static_cast<size_t>(i)];
        row.push_back({g.y0, g.x0, g.y1, g.x1});
      }
      jboxes.push_back(row);
    }
    jc["boxes"] = jboxes;
    jclips.push_back(jc);
  }
  index["clips"] = jclips;
  io::write_file(dir + "/index.json", index.dump(2) + "\n");
}

std::vector<Clip> read_dataset(const std::string& dir) {
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(io::read_file(dir + "/index.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error("dataset index parse error in '" + dir + "': " + e.what());
  }
  std::vector<Clip> clips;
  for (const auto& jc : index.at("clips")) {
    Clip clip;
    Tensor frames = io::read_tensor(dir + "/" + jc.at("frames").get<std::string>());
    Tensor masks = io::read_tensor(dir + "/" + jc.at("masks").get<std::string>());
    const int t_count = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
    const int n = masks.dim(0);
    clip.gt.frames = t_count;
    clip.gt.h = h;
    clip.gt.w = w;
    clip.gt.instance_classes = jc.at("classes").get<std::vector<int>>();
    clip.gt.instance_ids = jc.at("instance_ids").get<std::vector<int>>();
    clip.gt.overlap_heavy = jc.at("overlap_heavy").get<bool>();
    TPR_CHECK(static_cast<int>(clip.gt.instance_classes.size()) == n,
              "dataset: class list does not match mask tensor");
    for (int t = 0; t < t_count; ++t) {
      clip.frames.push_back(Tensor::from_array(
          {3, h, w},
          frames.data().segment(static_cast<long>(t) * 3 * h * w, 3 * h * w)));
      std::vector<InstanceFrameGT> row(static_cast<size_t>(n));
      const auto& jboxes = jc.at("boxes").at(static_cast<size_t>(t));
      for (int i = 0; i < n; ++i) {
        InstanceFrameGT& g = row[static_cast<size_t>(i)];
        g.mask.assign(static_cast<size_t>(h) * w, 0);
        const long off = (static_cast<long>(i) * t_count + t) * h * w;
        bool any = false;
        for (long p = 0; p < static_cast<long>(h) * w; ++p) {
          g.mask[static_cast<size_t>(p)] = masks.data()[off + p] > 0.5 ? 1 : 0;
          any = any || g.mask[static_cast<size_t>(p)];
        }
        g.visible = any;
        const auto& jb = jboxes.at(static_cast<size_t>(i));
        g.y0 = jb.at(0).get<int>();
        g.x0 = jb.at(1).get<int>();
        g.y1 = jb.at(2).get<int>();
        g.x1 = jb.at(3).get<int>();
      }
      clip.gt.per_frame.push_back(std::move(row));
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace tpr::synth
