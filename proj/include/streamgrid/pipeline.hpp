#pragma once

#include <span>
#include <string>
#include <vector>

#include "streamgrid/config.hpp"
#include "streamgrid/dataset.hpp"
#include "streamgrid/delta.hpp"
#include "streamgrid/grid.hpp"
#include "streamgrid/morphology.hpp"
#include "streamgrid/pilot.hpp"
#include "streamgrid/trainer.hpp"

namespace streamgrid {

// ---------------------------------------------------------------------------
// Pipeline configuration. Defaults are the desk-scale preset; the paper-scale
// presets ship as config files.
// ---------------------------------------------------------------------------
struct PipelineConfig {
  // scene box and base-training schedule
  Vec3 world_min{-0.8f, -0.8f, -0.8f};
  Vec3 world_max{0.8f, 0.8f, 0.8f};
  int base_res[3] = {16, 16, 16};
  std::vector<int> stage_iters = {800, 800, 1500};  // one entry per resolution stage
  float stage_prune_sigma = 0.5f;
  float init_sigma = 0.1f;

  // optimizer
  float lr_sigma = 30.f;
  float lr_sh = 1e-2f;
  float rms_decay = 0.95f;
  float lambda_tv_sigma = 5e-4f;
  float lambda_tv_sh = 5e-3f;
  int batch_rays = 2048;

  // streaming
  int pilot_iters = 200;
  int full_iters = 100;
  int tune_batch_rays = 2048;
  float pilot_tv_scale = 10.f;
  int rho_d = 2;
  int rho_e = 2;
  float epsilon = 0.02f;
  float sigma_eps = 1e-3f;
  float stream_prune_sigma = 0.f;
  bool use_band = true;
  bool use_pilot = true;

  // rendering / sampling
  Vec3 background{0.f, 0.f, 0.f};
  float step_scale = 0.5f;
  double term_eps = 1e-6;  // training-time early ray termination

  int threads = 1;
  std::uint64_t seed = 1234;

  TrainConfig base_train_config(int iters) const {
    TrainConfig c;
    c.lr_sigma = lr_sigma;
    c.lr_sh = lr_sh;
    c.rms_decay = rms_decay;
    c.lambda_tv_sigma = lambda_tv_sigma;
    c.lambda_tv_sh = lambda_tv_sh;
    c.batch_rays = batch_rays;
    c.iters = iters;
    return c;
  }
  TrainConfig full_tune_config() const {
    TrainConfig c = base_train_config(full_iters);
    c.batch_rays = tune_batch_rays;
    return c;
  }
  TrainConfig pilot_tune_config() const {
    TrainConfig c = base_train_config(pilot_iters);
    c.batch_rays = tune_batch_rays;
    c.lambda_tv_sigma *= pilot_tv_scale;
    c.lambda_tv_sh *= pilot_tv_scale;
    return c;
  }
  TrainOptions train_options() const {
    TrainOptions o;
    o.background = background;
    o.step_scale = step_scale;
    o.term_eps = term_eps;
    o.threads = threads;
    return o;
  }
  RenderOptions render_options() const {
    RenderOptions o;
    o.background = background;
    o.step_scale = step_scale;
    o.threads = threads;
    return o;
  }

  static PipelineConfig from_config(const KeyValueConfig& kv);
  static PipelineConfig from_file(const std::string& path) {
    return from_config(KeyValueConfig::from_file(path));
  }
};

inline PipelineConfig PipelineConfig::from_config(const KeyValueConfig& kv) {
  kv.check_known({"world_min", "world_max", "base_res", "stage_iters", "stage_prune_sigma", "init_sigma",
                  "lr_sigma", "lr_sh", "rms_decay", "lambda_tv_sigma", "lambda_tv_sh", "batch_rays",
                  "pilot_iters", "full_iters", "tune_batch_rays", "pilot_tv_scale", "rho_d", "rho_e", "epsilon",
                  "sigma_eps", "stream_prune_sigma", "use_band", "use_pilot", "background", "step_scale",
                  "term_eps", "threads", "seed"});
  PipelineConfig c;
  auto vec3 = [&](const char* key, Vec3 fallback) {
    auto v = kv.get_list(key, {fallback.x, fallback.y, fallback.z});
    if (v.size() != 3) throw std::runtime_error(std::string("config key '") + key + "' needs 3 numbers");
    return Vec3{static_cast<float>(v[0]), static_cast<float>(v[1]), static_cast<float>(v[2])};
  };
  c.world_min = vec3("world_min", c.world_min);
  c.world_max = vec3("world_max", c.world_max);
  auto res = kv.get_list("base_res", {double(c.base_res[0]), double(c.base_res[1]), double(c.base_res[2])});
  if (res.size() != 3) throw std::runtime_error("config key 'base_res' needs 3 numbers");
  for (int a = 0; a < 3; ++a) c.base_res[a] = static_cast<int>(res[a]);
  std::vector<double> si(c.stage_iters.begin(), c.stage_iters.end());
  si = kv.get_list("stage_iters", si);
  c.stage_iters.assign(si.size(), 0);
  for (std::size_t i = 0; i < si.size(); ++i) c.stage_iters[i] = static_cast<int>(si[i]);
  c.stage_prune_sigma = static_cast<float>(kv.get_double("stage_prune_sigma", c.stage_prune_sigma));
  c.init_sigma = static_cast<float>(kv.get_double("init_sigma", c.init_sigma));
  c.lr_sigma = static_cast<float>(kv.get_double("lr_sigma", c.lr_sigma));
  c.lr_sh = static_cast<float>(kv.get_double("lr_sh", c.lr_sh));
  c.rms_decay = static_cast<float>(kv.get_double("rms_decay", c.rms_decay));
  c.lambda_tv_sigma = static_cast<float>(kv.get_double("lambda_tv_sigma", c.lambda_tv_sigma));
  c.lambda_tv_sh = static_cast<float>(kv.get_double("lambda_tv_sh", c.lambda_tv_sh));
  c.batch_rays = kv.get_int("batch_rays", c.batch_rays);
  c.pilot_iters = kv.get_int("pilot_iters", c.pilot_iters);
  c.full_iters = kv.get_int("full_iters", c.full_iters);
  c.tune_batch_rays = kv.get_int("tune_batch_rays", c.tune_batch_rays);
  c.pilot_tv_scale = static_cast<float>(kv.get_double("pilot_tv_scale", c.pilot_tv_scale));
  c.rho_d = kv.get_int("rho_d", c.rho_d);
  c.rho_e = kv.get_int("rho_e", c.rho_e);
  c.epsilon = static_cast<float>(kv.get_double("epsilon", c.epsilon));
  c.sigma_eps = static_cast<float>(kv.get_double("sigma_eps", c.sigma_eps));
  c.stream_prune_sigma = static_cast<float>(kv.get_double("stream_prune_sigma", c.stream_prune_sigma));
  c.use_band = kv.get_bool("use_band", c.use_band);
  c.use_pilot = kv.get_bool("use_pilot", c.use_pilot);
  c.background = vec3("background", c.background);
  c.step_scale = static_cast<float>(kv.get_double("step_scale", c.step_scale));
  c.term_eps = kv.get_double("term_eps", c.term_eps);
  c.threads = kv.get_int("threads", c.threads);
  c.seed = static_cast<std::uint64_t>(kv.get_double("seed", static_cast<double>(c.seed)));
  return c;
}

// ---------------------------------------------------------------------------
// Base-frame training: dense init, coarse-to-fine with pruning after each
// stage. Returns the initialized grid untouched when every stage has zero
// iterations.
// ---------------------------------------------------------------------------
inline SparseGrid init_dense_grid(const PipelineConfig& cfg) {
  GridDims dims(cfg.base_res[0], cfg.base_res[1], cfg.base_res[2], cfg.world_min, cfg.world_max);
  OccupancyMask mask(dims);
  for (std::size_t i = 0; i < dims.voxel_count(); ++i) mask.set(i, true);
  std::vector<VoxelData> voxels(dims.voxel_count());
  for (VoxelData& v : voxels) v.sigma = cfg.init_sigma;
  return SparseGrid(dims, std::move(mask), std::move(voxels));
}

inline SparseGrid train_base(std::span<const View> views, const PipelineConfig& cfg, Rng& rng) {
  if (views.size() < 2) throw std::invalid_argument("train_base needs at least 2 views");
  SparseGrid grid = init_dense_grid(cfg);
  long total = 0;
  for (int it : cfg.stage_iters) total += it;
  if (total == 0) return grid;

  TrainOptions opt = cfg.train_options();
  for (std::size_t stage = 0; stage < cfg.stage_iters.size(); ++stage) {
    run_training(grid, views, nullptr, cfg.base_train_config(cfg.stage_iters[stage]), opt, rng);
    grid = prune(grid, cfg.stage_prune_sigma);
    if (stage + 1 < cfg.stage_iters.size()) grid = upsample(grid);
  }
  return grid;
}

// ---------------------------------------------------------------------------
// One streaming step: band -> activate -> pilot tune -> guidance + fill-back
// -> guided full tune -> prune -> encode. The returned grid is the delta
// applied to grid_prev (the decoder's state), so replaying deltas reproduces
// the live stream exactly.
// ---------------------------------------------------------------------------
struct StreamResult {
  SparseGrid grid_next;
  FrameDelta delta;
  OccupancyMask band;         // trainable region of the full model this frame
  OccupancyMask guidance;     // pilot-derived guidance (empty mask if unused)
};

inline StreamResult stream_step(const SparseGrid& grid_prev, const FrameSet& frame, const PipelineConfig& cfg,
                                Rng& rng) {
  TrainOptions opt = cfg.train_options();
  SparseGrid grid = grid_prev;

  OccupancyMask band(grid.dims());
  OccupancyMask guidance(grid.dims());
  TrainableSet full_trainable{OccupancyMask(grid.dims())};

  if (cfg.use_band) {
    band = compute_band(grid_prev.mask(), cfg.rho_d, cfg.rho_e);
    full_trainable = activate_band(grid, band);
  } else {
    // sparse-grid-only tuning: every currently occupied voxel is trainable
    band = grid.mask();
    full_trainable.mask = grid.mask();
  }

  if (cfg.use_pilot) {
    SparseGrid pilot_prev = make_pilot(grid_prev);
    SparseGrid pilot = pilot_prev;
    if (cfg.use_band) {
      OccupancyMask pilot_band = compute_band(pilot_prev.mask(), cfg.rho_d, cfg.rho_e);
      TrainableSet pilot_trainable = activate_band(pilot, pilot_band);
      run_training(pilot, frame.views, &pilot_trainable, cfg.pilot_tune_config(), opt, rng);
    } else {
      run_training(pilot, frame.views, nullptr, cfg.pilot_tune_config(), opt, rng);
    }
    pilot = prune(pilot, cfg.stream_prune_sigma);
    DiffMasks pilot_masks = compute_masks(pilot_prev, pilot, cfg.epsilon, cfg.sigma_eps);
    guidance = guidance_mask(pilot_masks, grid.dims());
    fill_back(grid, pilot, pilot_masks);
    guided_tune(grid, frame.views, guidance, cfg.full_tune_config(), opt, rng);
  } else {
    run_training(grid, frame.views, &full_trainable, cfg.full_tune_config(), opt, rng);
  }

  grid = prune(grid, cfg.stream_prune_sigma);

  StreamResult res{SparseGrid{}, encode_delta(grid_prev, grid, cfg.epsilon, cfg.sigma_eps, frame.frame_index),
                   std::move(band), std::move(guidance)};
  res.grid_next = apply_delta(grid_prev, res.delta);
  return res;
}

// V^0 + sum of deltas 1..t. Deltas must be contiguous from frame 1.
inline SparseGrid replay(const SparseGrid& base, std::span<const FrameDelta> deltas, int t) {
  if (t < 0 || static_cast<std::size_t>(t) > deltas.size()) throw std::out_of_range("replay: frame out of range");
  SparseGrid grid = base;
  for (int i = 0; i < t; ++i) {
    if (deltas[static_cast<std::size_t>(i)].frame_index != i + 1)
      throw std::runtime_error("replay: delta sequence has a frame-index gap at position " + std::to_string(i));
    grid = apply_delta(grid, deltas[static_cast<std::size_t>(i)]);
  }
  return grid;
}

// Held-out-view quality: PSNR of the rendered view against its image.
inline double eval_view_psnr(const SparseGrid& grid, const View& view, const RenderOptions& opt) {
  return image_psnr(render_image(grid, view.cam, opt), view.image);
}

}  // namespace streamgrid
