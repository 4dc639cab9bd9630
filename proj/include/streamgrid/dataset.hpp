#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamgrid/camera.hpp"
#include "streamgrid/grid.hpp"
#include "streamgrid/image.hpp"
#include "streamgrid/render.hpp"
#include "streamgrid/sh.hpp"
#include "streamgrid/view.hpp"

namespace streamgrid {

struct FrameSet {
  int frame_index = 0;
  std::vector<View> views;
};

// ---------------------------------------------------------------------------
// On-disk dataset: poses.txt + frames/{FFFF}/{VV}.png. Each poses.txt row is
// one view: fx fy cx cy width height followed by the 16 row-major
// camera-to-world floats.
// ---------------------------------------------------------------------------
inline std::string frame_dirname(int frame) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", frame);
  return buf;
}
inline std::string view_filename(int view) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d.png", view);
  return buf;
}

inline std::vector<Camera> load_poses(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open poses file: " + path);
  std::vector<Camera> cams;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string trimmed = line;
    auto h = trimmed.find('#');
    if (h != std::string::npos) trimmed.resize(h);
    std::istringstream ss(trimmed);
    Camera c;
    float w, hgt;
    if (!(ss >> c.fx)) continue;  // blank/comment line
    if (!(ss >> c.fy >> c.cx >> c.cy >> w >> hgt))
      throw std::runtime_error(path + " line " + std::to_string(lineno) + ": malformed pose row");
    for (int i = 0; i < 16; ++i)
      if (!(ss >> c.pose[i]))
        throw std::runtime_error(path + " line " + std::to_string(lineno) + ": malformed pose row");
    c.width = static_cast<int>(w);
    c.height = static_cast<int>(hgt);
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

inline void save_poses(const std::string& path, std::span<const Camera> cams) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write poses file: " + path);
  f.precision(9);
  for (const Camera& c : cams) {
    f << c.fx << " " << c.fy << " " << c.cx << " " << c.cy << " " << c.width << " " << c.height;
    for (float v : c.pose) f << " " << v;
    f << "\n";
  }
}

// Sequential multi-view frame reader. Frames are directories 0000, 0001, ...
// scanned contiguously from zero. A directory without a poses file yields
// zero frames.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& root) : root_(root) {
    namespace fs = std::filesystem;
    fs::path poses = fs::path(root) / "poses.txt";
    if (!fs::exists(poses)) return;
    cams_ = load_poses(poses.string());
    while (fs::is_directory(fs::path(root) / "frames" / frame_dirname(n_frames_))) ++n_frames_;
  }

  int frame_count() const { return n_frames_; }
  const std::vector<Camera>& cameras() const { return cams_; }

  FrameSet load_frame(int frame) const {
    namespace fs = std::filesystem;
    if (frame < 0 || frame >= n_frames_) throw std::out_of_range("frame index out of range");
    FrameSet fsout;
    fsout.frame_index = frame;
    for (std::size_t v = 0; v < cams_.size(); ++v) {
      fs::path img = fs::path(root_) / "frames" / frame_dirname(frame) / view_filename(static_cast<int>(v));
      if (!fs::exists(img))
        throw std::runtime_error("missing image for frame " + frame_dirname(frame) + " view " +
                                 std::to_string(v) + ": " + img.string());
      fsout.views.push_back({cams_[v], read_png(img.string())});
    }
    return fsout;
  }

 private:
  std::string root_;
  std::vector<Camera> cams_;
  int n_frames_ = 0;
};

inline void save_dataset(const std::string& root, std::span<const FrameSet> frames) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "frames");
  if (frames.empty()) return;
  std::vector<Camera> cams;
  for (const View& v : frames.front().views) cams.push_back(v.cam);
  save_poses((fs::path(root) / "poses.txt").string(), cams);
  for (const FrameSet& f : frames) {
    fs::path dir = fs::path(root) / "frames" / frame_dirname(f.frame_index);
    fs::create_directories(dir);
    for (std::size_t v = 0; v < f.views.size(); ++v)
      write_png((dir / view_filename(static_cast<int>(v))).string(), f.views[v].image);
  }
}

// ---------------------------------------------------------------------------
// Synthetic dynamic scene: a solid-color sphere with a smooth density shell,
// translating linearly over time. Ground truth is voxelized analytically and
// the emitted images come from the reference volume renderer, so rendering
// the ground-truth grid reproduces the images bit-for-bit.
// ---------------------------------------------------------------------------
struct SyntheticScene {
  GridDims dims;           // ground-truth voxelization resolution
  Vec3 center0{};          // sphere center at frame 0
  Vec3 velocity{};         // center displacement per frame (world units)
  float radius = 0.3f;
  float edge_width = 0.05f;  // linear density falloff width at the surface
  float sigma_max = 25.f;
  Vec3 color{0.9f, 0.4f, 0.25f};
  Vec3 background{0.f, 0.f, 0.f};
};

inline Vec3 scene_center(const SyntheticScene& s, int frame) {
  return s.center0 + static_cast<float>(frame) * s.velocity;
}

inline float scene_density(const SyntheticScene& s, Vec3 p, int frame) {
  Vec3 d = p - scene_center(s, frame);
  float q = norm(d);
  float t = (s.radius - q) / s.edge_width;
  if (t <= 0.f) return 0.f;
  return s.sigma_max * (t >= 1.f ? 1.f : t);
}

// Voxelizes the analytic field at frame `frame`. Color is view-independent:
// only the DC SH coefficient is set, at logit(color)/Y00.
inline SparseGrid voxelize_scene(const SyntheticScene& s, int frame) {
  const GridDims& d = s.dims;
  OccupancyMask mask(d);
  std::vector<VoxelData> voxels;
  const float y00 = 0.28209479177387814f;
  VoxelData proto;
  for (int ch = 0; ch < 3; ++ch) {
    float c = s.color[ch];
    proto.sh[ch * 9] = std::log(c / (1.f - c)) / y00;
  }
  for (int x = 0; x < d.nx; ++x)
    for (int y = 0; y < d.ny; ++y)
      for (int z = 0; z < d.nz; ++z) {
        float sigma = scene_density(s, d.node_position(x, y, z), frame);
        if (sigma <= 0.f) continue;
        mask.set(x, y, z, true);
        VoxelData v = proto;
        v.sigma = sigma;
        voxels.push_back(v);
      }
  return SparseGrid(d, std::move(mask), std::move(voxels));
}

// Evenly spaced camera ring looking at the box center, alternating between
// two elevations. Deterministic.
inline std::vector<Camera> make_camera_ring(int n_views, int width, int height, Vec3 target, float distance,
                                            float focal_scale = 1.1f) {
  std::vector<Camera> cams;
  for (int i = 0; i < n_views; ++i) {
    double angle = 2.0 * 3.14159265358979323846 * i / n_views;
    float elevation = (i % 2 == 0) ? 0.35f : 0.75f;
    Vec3 eye{target.x + distance * static_cast<float>(std::cos(angle)),
             target.y + distance * static_cast<float>(std::sin(angle)),
             target.z + elevation * distance};
    float f = focal_scale * static_cast<float>(width);
    cams.push_back(make_lookat_camera(eye, target, f, f, width, height));
  }
  return cams;
}

struct SyntheticFrame {
  FrameSet frames;
  SparseGrid gt_grid;
};

// Emits n_frames of the scene viewed by `cams`, plus the ground-truth grids.
inline std::vector<SyntheticFrame> generate_synthetic(const SyntheticScene& s, int n_frames,
                                                      std::span<const Camera> cams, int threads = 1) {
  if (cams.size() < 2) throw std::invalid_argument("need at least 2 views");
  std::vector<SyntheticFrame> out;
  RenderOptions ropt;
  ropt.background = s.background;
  ropt.threads = threads;
  for (int t = 0; t < n_frames; ++t) {
    SyntheticFrame sf{FrameSet{t, {}}, voxelize_scene(s, t)};
    for (const Camera& c : cams) sf.frames.views.push_back({c, render_image(sf.gt_grid, c, ropt)});
    out.push_back(std::move(sf));
  }
  return out;
}

}  // namespace streamgrid
