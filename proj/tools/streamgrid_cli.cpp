// streamgrid command-line tool: base-frame training, per-frame streaming,
// replay rendering, and delta inspection over checkpoint directories.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "streamgrid/checkpoint.hpp"
#include "streamgrid/dataset.hpp"
#include "streamgrid/pipeline.hpp"

namespace fs = std::filesystem;
using namespace streamgrid;

namespace {

int log_level() {
  const char* env = std::getenv("STREAMGRID_LOG");
  if (!env) return 0;
  std::string v = env;
  if (v == "1" || v == "info") return 1;
  if (v == "2" || v == "debug") return 2;
  return 0;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[streamgrid] " << msg << std::endl;
}

struct CommonArgs {
  std::string config_path;
  std::int64_t seed = -1;   // -1: keep config value
  int threads = 0;          // 0: all cores
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "key=value config file (defaults to the desk preset)");
  cmd->add_option("--seed", a.seed, "RNG seed (overrides config)");
  cmd->add_option("--threads", a.threads, "worker threads (default: all cores)");
}

PipelineConfig resolve_config(const CommonArgs& a) {
  PipelineConfig cfg = a.config_path.empty() ? PipelineConfig{} : PipelineConfig::from_file(a.config_path);
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.threads = a.threads > 0 ? a.threads : default_threads();
  return cfg;
}

std::vector<View> split_views(const FrameSet& frame, int eval_view, View* held_out) {
  std::vector<View> train;
  for (std::size_t v = 0; v < frame.views.size(); ++v) {
    if (static_cast<int>(v) == eval_view) {
      if (held_out) *held_out = frame.views[v];
    } else {
      train.push_back(frame.views[v]);
    }
  }
  return train;
}

double mean_view_psnr(const SparseGrid& grid, std::span<const View> views, const RenderOptions& opt) {
  double acc = 0.0;
  for (const View& v : views) acc += eval_view_psnr(grid, v, opt);
  return views.empty() ? 0.0 : acc / static_cast<double>(views.size());
}

int count_contiguous_deltas(const fs::path& dir) {
  int n = 0;
  while (fs::exists(dir / delta_filename(n + 1))) ++n;
  return n;
}

int cmd_train_base(const std::string& dataset_path, const std::string& out_dir, const CommonArgs& args,
                   bool dry_run, int eval_view) {
  if (!fs::is_directory(dataset_path)) {
    std::cerr << "dataset not found: " << dataset_path << std::endl;
    return 2;
  }
  PipelineConfig cfg = resolve_config(args);
  DatasetReader reader(dataset_path);
  if (reader.frame_count() == 0) {
    std::cerr << "dataset has no frames: " << dataset_path << std::endl;
    return 1;
  }
  if (dry_run) {
    std::cout << "config ok; dataset ok (" << reader.frame_count() << " frames, " << reader.cameras().size()
              << " views); nothing written" << std::endl;
    return 0;
  }
  FrameSet frame0 = reader.load_frame(0);
  View held_out;
  std::vector<View> train = split_views(frame0, eval_view, &held_out);
  if (train.size() < 2) {
    std::cerr << "need at least 2 training views" << std::endl;
    return 1;
  }

  Rng rng(cfg.seed, 0);
  auto t0 = std::chrono::steady_clock::now();
  SparseGrid grid = train_base(train, cfg, rng);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_info("base training done in " + std::to_string(secs) + " s, " + std::to_string(grid.voxel_count()) +
           " voxels");

  fs::create_directories(out_dir);
  save_grid((fs::path(out_dir) / "base.sgrd").string(), grid);
  Manifest m{grid.dims().nx, grid.dims().ny, grid.dims().nz, cfg.epsilon, cfg.rho_d, cfg.rho_e, 0};
  save_manifest((fs::path(out_dir) / "manifest.txt").string(), m);

  RenderOptions ropt = cfg.render_options();
  std::cout << "train_psnr=" << mean_view_psnr(grid, train, ropt);
  if (eval_view >= 0) std::cout << " test_psnr=" << eval_view_psnr(grid, held_out, ropt);
  std::cout << std::endl;
  return 0;
}

int cmd_train_stream(const std::string& dataset_path, const std::string& base_dir, const std::string& out_dir,
                     const CommonArgs& args, int eval_view) {
  if (!fs::is_directory(dataset_path)) {
    std::cerr << "dataset not found: " << dataset_path << std::endl;
    return 2;
  }
  fs::path base_ckpt = fs::path(base_dir) / "base.sgrd";
  if (!fs::exists(base_ckpt)) {
    std::cerr << "base checkpoint not found: " << base_ckpt.string() << std::endl;
    return 2;
  }
  PipelineConfig cfg = resolve_config(args);
  DatasetReader reader(dataset_path);
  fs::create_directories(out_dir);

  SparseGrid grid = load_grid(base_ckpt.string());
  int n_stream = std::max(reader.frame_count() - 1, 0);

  // Idempotent restart: replay any deltas already on disk and continue.
  int done = count_contiguous_deltas(out_dir);
  std::vector<FrameDelta> existing;
  for (int i = 1; i <= done; ++i) existing.push_back(load_delta((fs::path(out_dir) / delta_filename(i)).string()));
  grid = replay(grid, existing, done);
  if (done > 0) log_info("resuming after frame " + std::to_string(done));

  fs::path csv_path = fs::path(out_dir) / "stream_log.csv";
  std::ofstream csv(csv_path, done > 0 ? std::ios::app : std::ios::trunc);
  if (!csv) {
    std::cerr << "cannot write " << csv_path.string() << std::endl;
    return 1;
  }

  RenderOptions ropt = cfg.render_options();
  for (int i = done + 1; i <= n_stream; ++i) {
    FrameSet frame = reader.load_frame(i);
    View held_out;
    std::vector<View> train = split_views(frame, eval_view, &held_out);
    FrameSet train_frame{frame.frame_index, train};

    auto t0 = std::chrono::steady_clock::now();
    Rng rng(cfg.seed, static_cast<std::uint64_t>(i));  // per-frame stream: restart-stable
    StreamResult res = stream_step(grid, train_frame, cfg, rng);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<std::uint8_t> bytes = serialize_delta(res.delta);
    write_file_bytes((fs::path(out_dir) / delta_filename(i)).string(), bytes);
    grid = std::move(res.grid_next);

    double psnr = eval_view >= 0 ? eval_view_psnr(grid, held_out, ropt) : mean_view_psnr(grid, train, ropt);
    csv << i << "," << psnr << "," << bytes.size() << "," << secs << "\n";
    csv.flush();
    std::cout << i << "," << psnr << "," << bytes.size() << "," << secs << std::endl;
  }

  Manifest m{grid.dims().nx, grid.dims().ny, grid.dims().nz, cfg.epsilon, cfg.rho_d, cfg.rho_e, n_stream};
  save_manifest((fs::path(out_dir) / "manifest.txt").string(), m);
  return 0;
}

int cmd_render(const std::string& ckpt_dir, int frame, const std::string& camera_spec, const std::string& out_png,
               const CommonArgs& args) {
  PipelineConfig cfg = resolve_config(args);
  fs::path base_ckpt = fs::path(ckpt_dir) / "base.sgrd";
  if (!fs::exists(base_ckpt)) {
    std::cerr << "base checkpoint not found: " << base_ckpt.string() << std::endl;
    return 2;
  }
  SparseGrid grid = load_grid(base_ckpt.string());
  std::vector<FrameDelta> deltas;
  for (int i = 1; i <= frame; ++i) {
    fs::path p = fs::path(ckpt_dir) / delta_filename(i);
    if (!fs::exists(p)) {
      std::cerr << "frame " << frame << " beyond last delta (missing " << p.string() << ")" << std::endl;
      return 1;
    }
    deltas.push_back(load_delta(p.string()));
  }
  grid = replay(grid, deltas, frame);

  std::vector<Camera> cams = load_poses(camera_spec);
  if (cams.empty()) {
    std::cerr << "camera spec has no pose rows: " << camera_spec << std::endl;
    return 1;
  }
  Image img = render_image(grid, cams.front(), cfg.render_options());
  write_png(out_png, img);
  log_info("wrote " + out_png);
  return 0;
}

int cmd_inspect(const std::string& delta_path) {
  FrameDelta d = load_delta(delta_path);
  DeltaStats s = delta_stats(d);
  std::size_t file_size = fs::file_size(delta_path);
  std::size_t header_bytes = 4 + 4 + 4 + 12 + 4;  // magic, version, frame, dims, epsilon
  std::cout << "frame_index=" << d.frame_index << "\n"
            << "dims=" << d.nx << " " << d.ny << " " << d.nz << "\n"
            << "epsilon=" << d.epsilon << "\n"
            << "mask_next_popcount=" << d.mask_next.popcount() << "\n"
            << "m_remain_popcount=" << d.m_remain.popcount() << "\n"
            << "n_add=" << s.n_add << "\n"
            << "n_remain=" << s.n_remain << "\n"
            << "raw_bytes=" << s.raw_bytes << "\n"
            << "post_threshold_bytes=" << s.post_threshold_bytes << "\n"
            << "post_half_bytes=" << s.post_half_bytes << "\n"
            << "post_deflate_bytes=" << s.post_deflate_bytes << "\n"
            << "header_bytes=" << header_bytes << "\n"
            << "compressed_body_bytes=" << (file_size - header_bytes) << "\n"
            << "file_bytes=" << file_size << "\n"
            << "size_check=" << ((s.post_deflate_bytes == file_size) ? "ok" : "MISMATCH") << std::endl;
  return s.post_deflate_bytes == file_size ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming sparse-voxel radiance field trainer/renderer"};
  app.require_subcommand(1);

  CommonArgs base_args, stream_args, render_args;
  std::string dataset_path, out_dir, base_dir, camera_spec, out_png, delta_path;
  bool dry_run = false;
  int eval_view = -1, stream_eval_view = -1, frame = 0;

  CLI::App* tb = app.add_subcommand("train-base", "train the frame-0 base model");
  tb->add_option("dataset", dataset_path, "dataset directory")->required();
  tb->add_option("--out", out_dir, "checkpoint output directory")->required();
  tb->add_option("--eval-view", eval_view, "view index held out of training and used for test PSNR");
  tb->add_flag("--dry-run", dry_run, "validate config and dataset, write nothing");
  add_common(tb, base_args);

  CLI::App* ts = app.add_subcommand("train-stream", "tune and delta-encode frames 1..N");
  ts->add_option("dataset", dataset_path, "dataset directory")->required();
  ts->add_option("--base", base_dir, "directory holding base.sgrd")->required();
  ts->add_option("--out", out_dir, "delta output directory (default: the base directory)");
  ts->add_option("--eval-view", stream_eval_view, "held-out view for the per-frame PSNR log");
  add_common(ts, stream_args);

  CLI::App* rd = app.add_subcommand("render", "replay a frame and render a view");
  rd->add_option("checkpoint", base_dir, "checkpoint directory")->required();
  rd->add_option("--frame", frame, "frame index (0 = base model)")->required();
  rd->add_option("--camera", camera_spec, "camera spec file (one poses.txt-format row)")->required();
  rd->add_option("--out", out_png, "output PNG path")->required();
  add_common(rd, render_args);

  CLI::App* in = app.add_subcommand("inspect", "print delta file statistics");
  in->add_option("delta", delta_path, "path to a .sdlt file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (tb->parsed()) return cmd_train_base(dataset_path, out_dir, base_args, dry_run, eval_view);
    if (ts->parsed())
      return cmd_train_stream(dataset_path, base_dir, out_dir.empty() ? base_dir : out_dir, stream_args,
                              stream_eval_view);
    if (rd->parsed()) return cmd_render(base_dir, frame, camera_spec, out_png, render_args);
    if (in->parsed()) return cmd_inspect(delta_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
