#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "streamgrid/common.hpp"
#include "streamgrid/grid.hpp"
#include "streamgrid/render.hpp"
#include "streamgrid/sh.hpp"
#include "streamgrid/view.hpp"

namespace streamgrid {

struct TrainConfig {
  float lr_sigma = 30.f;   // tuned on the synthetic suite, not a published value
  float lr_sh = 1e-2f;     // ditto
  float rms_decay = 0.95f;
  float lambda_tv_sigma = 5e-4f;
  float lambda_tv_sh = 5e-3f;
  int batch_rays = 2048;
  int iters = 100;

  void validate() const {
    if (!(rms_decay > 0.f && rms_decay < 1.f)) throw std::invalid_argument("rms_decay must be in (0,1)");
    if (!(lr_sigma > 0.f) || !(lr_sh > 0.f)) throw std::invalid_argument("learning rates must be positive");
    if (batch_rays <= 0 || iters < 0) throw std::invalid_argument("bad batch/iteration counts");
  }
};

// Voxels whose parameters may change this round; always a subset of the
// grid occupancy when used.
struct TrainableSet {
  OccupancyMask mask;
};

struct RayObs {
  Ray ray;
  Vec3 gt{};
};

template <class Real>
struct Gradients {
  std::vector<Real> sigma;  // per occupied voxel
  std::vector<Real> sh;     // per occupied voxel * 27

  void resize(std::size_t n_voxels) {
    sigma.assign(n_voxels, Real(0));
    sh.assign(n_voxels * kShCoeffs, Real(0));
  }
  void zero() {
    std::fill(sigma.begin(), sigma.end(), Real(0));
    std::fill(sh.begin(), sh.end(), Real(0));
  }
  void add(const Gradients& o) {
    for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] += o.sigma[i];
    for (std::size_t i = 0; i < sh.size(); ++i) sh[i] += o.sh[i];
  }
};

struct TrainOptions {
  Vec3 background{0.f, 0.f, 0.f};
  float step_scale = 0.5f;
  double term_eps = 0.0;  // early ray termination; 0 marches every sample
  int threads = 1;
};

// Per-slot trainable flags in storage order; empty means "all trainable".
inline std::vector<std::uint8_t> trainable_flags(const SparseGrid& grid, const TrainableSet* trainable) {
  std::vector<std::uint8_t> flags(grid.voxel_count(), 1);
  if (!trainable) return flags;
  if (!trainable->mask.dims().same_counts(grid.dims())) throw std::invalid_argument("trainable dims mismatch");
  std::size_t slot = 0;
  grid.mask().for_each_set([&](std::size_t idx) { flags[slot++] = trainable->mask.get(idx) ? 1 : 0; });
  return flags;
}

namespace detail {

template <class Real>
struct SampleRec {
  std::array<std::ptrdiff_t, 8> slots;
  std::array<Real, 8> weights;
  Real sigma_raw;
  Real od;             // activated sigma * step
  Real transmittance;  // before this sample
  std::array<Real, 3> rgb;
};

template <class Real>
struct RayWorkspace {
  std::vector<SampleRec<Real>> recs;
};

// Forward pass for one ray; returns the composited color (with background)
// and retains per-sample records for the backward sweep.
template <class Real>
inline std::array<Real, 3> forward_ray(const SparseGrid& grid, const Ray& ray, Real step,
                                       const std::array<Real, 9>& basis, const TrainOptions& opt,
                                       RayWorkspace<Real>& ws, Real& t_final_out) {
  ws.recs.clear();
  int m = sample_count(ray, static_cast<float>(step));
  Real optical = Real(0);
  std::array<Real, 3> color{Real(0), Real(0), Real(0)};
  for (int j = 0; j < m; ++j) {
    float t = ray.t_near + (static_cast<float>(j) + 0.5f) * static_cast<float>(step);
    Vec3 p = ray.origin + t * ray.dir;
    Stencil<Real> st = gather_stencil<Real>(grid, p);
    if (!st.any_occupied) continue;
    Real transmittance = std::exp(-optical);
    if (opt.term_eps > 0.0 && transmittance < static_cast<Real>(opt.term_eps)) break;
    SampleRec<Real> rec;
    rec.slots = st.slots;
    rec.weights = st.weights;
    Real sigma_raw = Real(0);
    std::array<Real, kShCoeffs> sh{};
    for (int c = 0; c < 8; ++c) {
      if (st.slots[c] < 0) continue;
      const VoxelData& v = grid.voxels()[static_cast<std::size_t>(st.slots[c])];
      Real w = st.weights[c];
      sigma_raw += w * static_cast<Real>(v.sigma);
      for (int k = 0; k < kShCoeffs; ++k) sh[k] += w * static_cast<Real>(v.sh[k]);
    }
    Real sigma = sigma_raw > Real(0) ? sigma_raw : Real(0);
    rec.sigma_raw = sigma_raw;
    rec.od = sigma * step;
    rec.transmittance = transmittance;
    rec.rgb = eval_color<Real>(basis, sh.data());
    Real alpha = Real(1) - std::exp(-rec.od);
    Real w = transmittance * alpha;
    for (int ch = 0; ch < 3; ++ch) color[ch] += w * rec.rgb[ch];
    optical += rec.od;
    ws.recs.push_back(rec);
  }
  t_final_out = std::exp(-optical);
  for (int ch = 0; ch < 3; ++ch) color[ch] += t_final_out * static_cast<Real>(opt.background[ch]);
  return color;
}

// Backward sweep for one ray given dL/dC. Scatters into per-voxel gradient
// buffers, honoring the trainable flags. The sigma clamp backpropagates zero
// at raw sigma <= 0.
template <class Real>
inline void backward_ray(const std::array<Real, 9>& basis, Real step, const TrainOptions& opt,
                         const RayWorkspace<Real>& ws, Real t_final, const std::array<Real, 3>& dL_dC,
                         const std::vector<std::uint8_t>& flags, Gradients<Real>& grads) {
  std::array<Real, 3> suffix{Real(0), Real(0), Real(0)};  // sum of w_i * c_i over i > j
  for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(ws.recs.size()) - 1; j >= 0; --j) {
    const SampleRec<Real>& rec = ws.recs[static_cast<std::size_t>(j)];
    Real alpha = Real(1) - std::exp(-rec.od);
    Real w = rec.transmittance * alpha;
    Real t_next = rec.transmittance - w;  // transmittance after this sample

    // dC/dsigma_j per channel: delta * (T_{j+1} c_j - suffix - T_N bg);
    // the clamp backpropagates zero at raw sigma <= 0.
    Real dL_dsigma = Real(0);
    if (rec.sigma_raw > Real(0)) {
      for (int ch = 0; ch < 3; ++ch) {
        Real dC = step * (t_next * rec.rgb[ch] - suffix[ch] - t_final * static_cast<Real>(opt.background[ch]));
        dL_dsigma += dL_dC[ch] * dC;
      }
    }

    std::array<Real, 3> dL_dz;
    for (int ch = 0; ch < 3; ++ch)
      dL_dz[ch] = dL_dC[ch] * w * rec.rgb[ch] * (Real(1) - rec.rgb[ch]);

    for (int c = 0; c < 8; ++c) {
      std::ptrdiff_t slot = rec.slots[c];
      if (slot < 0 || !flags[static_cast<std::size_t>(slot)]) continue;
      Real wc = rec.weights[c];
      grads.sigma[static_cast<std::size_t>(slot)] += wc * dL_dsigma;
      Real* gsh = grads.sh.data() + static_cast<std::size_t>(slot) * kShCoeffs;
      for (int ch = 0; ch < 3; ++ch) {
        Real g = wc * dL_dz[ch];
        for (int b = 0; b < 9; ++b) gsh[ch * 9 + b] += g * basis[b];
      }
    }

    for (int ch = 0; ch < 3; ++ch) suffix[ch] += w * rec.rgb[ch];
  }
}

}  // namespace detail

// Mean over rays and channels of the squared error between composited color
// and ground truth.
template <class Real = float>
inline double photometric_loss(const SparseGrid& grid, std::span<const RayObs> rays, const TrainOptions& opt = {}) {
  if (rays.empty()) return 0.0;
  Real step = static_cast<Real>(opt.step_scale) * static_cast<Real>(grid.dims().min_spacing());
  std::vector<double> partial(static_cast<std::size_t>(std::max(opt.threads, 1)), 0.0);
  parallel_for(rays.size(), opt.threads, [&](std::size_t b, std::size_t e, int tid) {
    detail::RayWorkspace<Real> ws;
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      auto basis = sh_basis<Real>(rays[i].ray.dir.x, rays[i].ray.dir.y, rays[i].ray.dir.z);
      Real t_final;
      auto c = detail::forward_ray<Real>(grid, rays[i].ray, step, basis, opt, ws, t_final);
      for (int ch = 0; ch < 3; ++ch) {
        double d = static_cast<double>(c[ch]) - static_cast<double>(rays[i].gt[ch]);
        acc += d * d;
      }
    }
    partial[static_cast<std::size_t>(tid)] += acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / (3.0 * static_cast<double>(rays.size()));
}

// Analytic gradients of photometric_loss w.r.t. raw sigma and SH coefficients
// of voxels in `trainable` (all occupied voxels when null). Returns the loss.
template <class Real = float>
inline double backward(const SparseGrid& grid, std::span<const RayObs> rays, const TrainableSet* trainable,
                       const TrainOptions& opt, Gradients<Real>& grads) {
  grads.resize(grid.voxel_count());
  if (rays.empty()) return 0.0;
  std::vector<std::uint8_t> flags = trainable_flags(grid, trainable);
  Real step = static_cast<Real>(opt.step_scale) * static_cast<Real>(grid.dims().min_spacing());
  Real scale = Real(2) / (Real(3) * static_cast<Real>(rays.size()));

  int threads = std::max(opt.threads, 1);
  std::vector<Gradients<Real>> tg(static_cast<std::size_t>(threads));
  std::vector<double> partial(static_cast<std::size_t>(threads), 0.0);
  parallel_for(rays.size(), threads, [&](std::size_t b, std::size_t e, int tid) {
    Gradients<Real>& g = tg[static_cast<std::size_t>(tid)];
    g.resize(grid.voxel_count());
    detail::RayWorkspace<Real> ws;
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      auto basis = sh_basis<Real>(rays[i].ray.dir.x, rays[i].ray.dir.y, rays[i].ray.dir.z);
      Real t_final;
      auto c = detail::forward_ray<Real>(grid, rays[i].ray, step, basis, opt, ws, t_final);
      std::array<Real, 3> dL_dC;
      for (int ch = 0; ch < 3; ++ch) {
        Real d = c[ch] - static_cast<Real>(rays[i].gt[ch]);
        acc += static_cast<double>(d) * static_cast<double>(d);
        dL_dC[ch] = scale * d;
      }
      detail::backward_ray<Real>(basis, step, opt, ws, t_final, dL_dC, flags, g);
    }
    partial[static_cast<std::size_t>(tid)] += acc;
  });
  for (int t = 0; t < threads; ++t) grads.add(tg[static_cast<std::size_t>(t)]);  // fixed reduction order
  double total = 0.0;
  for (double p : partial) total += p;
  return total / (3.0 * static_cast<double>(rays.size()));
}

// Total-variation penalty over 6-connected occupied pairs, squared
// differences: sum over pairs of lambda * (theta_a - theta_b)^2. Adds the
// gradient (zeroed outside trainable) and returns the penalty value.
template <class Real = float>
inline double tv_loss_grad(const SparseGrid& grid, const TrainableSet* trainable, float lambda_tv_sigma,
                           float lambda_tv_sh, Gradients<Real>& grads) {
  if (grads.sigma.size() != grid.voxel_count()) grads.resize(grid.voxel_count());
  std::vector<std::uint8_t> flags = trainable_flags(grid, trainable);
  const GridDims& d = grid.dims();
  double loss = 0.0;
  Real ls = static_cast<Real>(lambda_tv_sigma);
  Real lc = static_cast<Real>(lambda_tv_sh);
  grid.mask().for_each_set([&](std::size_t idx) {
    auto [x, y, z] = d.coord(idx);
    std::ptrdiff_t sa = grid.slot(idx);
    const VoxelData& va = grid.voxels()[static_cast<std::size_t>(sa)];
    for (int axis = 0; axis < 3; ++axis) {
      int nx2 = x + (axis == 0), ny2 = y + (axis == 1), nz2 = z + (axis == 2);
      if (nx2 >= d.nx || ny2 >= d.ny || nz2 >= d.nz) continue;
      std::ptrdiff_t sb = grid.slot(nx2, ny2, nz2);
      if (sb < 0) continue;
      const VoxelData& vb = grid.voxels()[static_cast<std::size_t>(sb)];
      Real ds = static_cast<Real>(va.sigma) - static_cast<Real>(vb.sigma);
      loss += static_cast<double>(ls) * static_cast<double>(ds) * static_cast<double>(ds);
      if (flags[static_cast<std::size_t>(sa)]) grads.sigma[static_cast<std::size_t>(sa)] += Real(2) * ls * ds;
      if (flags[static_cast<std::size_t>(sb)]) grads.sigma[static_cast<std::size_t>(sb)] -= Real(2) * ls * ds;
      Real* ga = grads.sh.data() + static_cast<std::size_t>(sa) * kShCoeffs;
      Real* gb = grads.sh.data() + static_cast<std::size_t>(sb) * kShCoeffs;
      for (int k = 0; k < kShCoeffs; ++k) {
        Real dc = static_cast<Real>(va.sh[k]) - static_cast<Real>(vb.sh[k]);
        loss += static_cast<double>(lc) * static_cast<double>(dc) * static_cast<double>(dc);
        if (flags[static_cast<std::size_t>(sa)]) ga[k] += Real(2) * lc * dc;
        if (flags[static_cast<std::size_t>(sb)]) gb[k] -= Real(2) * lc * dc;
      }
    }
  });
  return loss;
}

// One RMSProp update: s <- decay*s + (1-decay)*g^2; p <- p - lr*g/(sqrt(s)+1e-8).
template <class Real>
inline void rmsprop_update(float& param, Real grad, float& state, float lr, float decay) {
  float g = static_cast<float>(grad);
  state = decay * state + (1.f - decay) * g * g;
  param -= lr * g / (std::sqrt(state) + 1e-8f);
}

template <class Real>
inline void rmsprop_step(std::span<float> params, std::span<const Real> grads, std::span<float> state, float lr,
                         float decay) {
  if (params.size() != grads.size() || params.size() != state.size())
    throw std::invalid_argument("rmsprop: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) rmsprop_update(params[i], grads[i], state[i], lr, decay);
}

struct TrainStats {
  std::vector<double> iter_loss;  // photometric term per iteration (batch mean)

  double initial() const { return iter_loss.empty() ? 0.0 : iter_loss.front(); }
  double final_() const { return iter_loss.empty() ? 0.0 : iter_loss.back(); }
};

// Precomputed pool of rays that hit the grid box, with their target colors.
inline std::vector<RayObs> build_ray_pool(const SparseGrid& grid, std::span<const View> views) {
  std::vector<RayObs> pool;
  for (const View& v : views) {
    for (int y = 0; y < v.cam.height; ++y)
      for (int x = 0; x < v.cam.width; ++x) {
        auto ray = generate_ray(v.cam, x, y, grid.dims());
        if (!ray) continue;
        const float* px = v.image.pixel(x, y);
        pool.push_back({*ray, Vec3{px[0], px[1], px[2]}});
      }
  }
  return pool;
}

// RMSProp training restricted to `trainable` (all occupied when null).
// Parameters outside the trainable set are bit-identical afterwards.
inline TrainStats run_training(SparseGrid& grid, std::span<const View> views, const TrainableSet* trainable,
                               const TrainConfig& cfg, const TrainOptions& opt, Rng& rng) {
  cfg.validate();
  TrainStats stats;
  if (cfg.iters == 0 || grid.voxel_count() == 0) return stats;

  std::vector<std::uint8_t> flags = trainable_flags(grid, trainable);
  std::vector<std::uint32_t> slots;
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) slots.push_back(static_cast<std::uint32_t>(i));
  if (slots.empty()) return stats;  // nothing tunable; grid must stay bit-identical

  std::vector<RayObs> pool = build_ray_pool(grid, views);
  if (pool.empty()) throw std::runtime_error("no training rays hit the grid bounding box");

  std::vector<float> s_sigma(grid.voxel_count(), 0.f);
  std::vector<float> s_sh(grid.voxel_count() * kShCoeffs, 0.f);
  Gradients<float> grads;
  std::vector<RayObs> batch;
  std::size_t batch_size = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_rays), pool.size());

  for (int it = 0; it < cfg.iters; ++it) {
    batch.clear();
    for (std::size_t i = 0; i < batch_size; ++i)
      batch.push_back(pool[rng.below(static_cast<std::uint32_t>(pool.size()))]);

    double loss = backward<float>(grid, batch, trainable, opt, grads);
    stats.iter_loss.push_back(loss);
    tv_loss_grad<float>(grid, trainable, cfg.lambda_tv_sigma, cfg.lambda_tv_sh, grads);

    for (std::uint32_t s : slots) {
      VoxelData& v = grid.voxels()[s];
      rmsprop_update(v.sigma, grads.sigma[s], s_sigma[s], cfg.lr_sigma, cfg.rms_decay);
      float* st = s_sh.data() + static_cast<std::size_t>(s) * kShCoeffs;
      const float* g = grads.sh.data() + static_cast<std::size_t>(s) * kShCoeffs;
      for (int k = 0; k < kShCoeffs; ++k) rmsprop_update(v.sh[k], g[k], st[k], cfg.lr_sh, cfg.rms_decay);
    }
  }
  return stats;
}

}  // namespace streamgrid
