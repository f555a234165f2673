// tetsplat command-line driver.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tetsplat/config.hpp"
#include "tetsplat/diagnostics.hpp"
#include "tetsplat/fit.hpp"
#include "tetsplat/image_io.hpp"
#include "tetsplat/splat.hpp"

namespace fs = std::filesystem;
using namespace tetsplat;

namespace {

enum Exit { kOk = 0, kValidation = 1, kNumerical = 2, kIo = 3 };

Json config_or_empty(const std::string& path) { return path.empty() ? Json::object() : load_json(path); }

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

struct GridField {
  TetrahedralGrid grid;
  FieldState field;
};

GridField load_field(const std::string& checkpoint) {
  std::ifstream in(checkpoint, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + checkpoint);
  GridField gf;
  gf.field = read_checkpoint(in);
  const int r = resolution_for_vertex_count(gf.field.sdf.size());
  if (r == 0) throw IoError("checkpoint vertex count is not (R+1)^3: " + checkpoint);
  gf.grid = build_grid(r);
  gf.field.deformation_limit = deformation_limit(gf.grid);
  return gf;
}

struct RenderFlags {
  std::string config, out, init, checkpoint;
  std::optional<double> s;
  bool reference = false;
};

int cmd_render(const RenderFlags& flags) {
  RenderRunConfig c = parse_render_config(config_or_empty(flags.config));
  if (!flags.out.empty()) c.out = flags.out;
  if (!flags.checkpoint.empty()) c.checkpoint = flags.checkpoint;
  if (!flags.init.empty()) c.init = parse_shape_spec(flags.init);
  if (flags.s) {
    if (!(*flags.s > 0)) throw InvalidArgument("--s must be positive");
    c.s = flags.s;
  }
  c.reference = c.reference || flags.reference;

  GridField gf;
  if (!c.checkpoint.empty()) {
    gf = load_field(c.checkpoint);
  } else {
    gf.grid = build_grid(c.resolution);
    gf.field = init_from_shape(gf.grid, c.init.value_or(AnalyticShape::sphere(0.5)));
  }
  const double s = c.s.value_or(c.checkpoint.empty() ? 200.0 : gf.field.steepness);
  const Camera camera = c.camera.camera();
  const Scene scene = preprocess(gf.grid, gf.field, s, c.filter_threshold);
  RenderMaps maps;
  if (c.reference) {
    maps = render_reference(make_splats(scene, camera), camera, s);
  } else {
    maps = render_view(scene, camera, c.render).forward.maps;
  }
  for (const auto& p : write_maps(c.out, maps, camera)) std::cout << p.string() << '\n';
  return kOk;
}

int cmd_fit(const std::string& config, const std::string& out_flag) {
  FitRunConfig c = parse_fit_config(config_or_empty(config));
  if (!out_flag.empty()) c.out = out_flag;
  const fs::path out = c.out;
  make_dir(out);
  const auto t0 = std::chrono::steady_clock::now();
  const int every = std::max(1, c.fit.iterations / 20);
  FitResult result = fit(c.fit, [&](const IterationRecord& r, const FieldState&) {
    if (r.iteration % every == 0 || r.iteration + 1 == c.fit.iterations)
      std::fprintf(stderr, "iter %5d  s %8.2f  loss %.6g  active %zu  max|f| %.4g  %.0f ms\n", r.iteration,
                   r.steepness, r.loss.total, r.active_tets, r.max_abs_sdf, r.wall_ms);
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_checkpoint(result.field, out / "field.tspf");
  write_trace(out / "trace.jsonl", result.trace);
  export_obj(result.mesh, out / "mesh.obj");
  Json summary{{"chamfer", result.trace.chamfer},
               {"cell_edge", result.grid.cell_edge()},
               {"iterations", c.fit.iterations},
               {"resolution", c.fit.resolution},
               {"final_loss", result.trace.records.empty() ? 0.0 : result.trace.records.back().loss.total},
               {"topology", topology_json(mesh_topology(result.mesh))},
               {"wall_seconds", seconds}};
  std::ofstream s(out / "summary.json");
  s << summary.dump(2) << '\n';
  if (!s) throw IoError("write failed: " + (out / "summary.json").string());
  std::cout << summary.dump() << '\n';
  return kOk;
}

int cmd_extract(const std::string& config, const std::string& out_flag, const std::string& checkpoint_flag) {
  Json j = config_or_empty(config);
  if (!checkpoint_flag.empty()) j["checkpoint"] = checkpoint_flag;
  ExtractRunConfig c = parse_extract_config(j);
  if (!out_flag.empty()) c.out = out_flag;
  const GridField gf = load_field(c.checkpoint);
  const TriangleMesh mesh = marching_tetrahedra(gf.grid, gf.field);
  make_dir(c.out);
  export_obj(mesh, fs::path(c.out) / "mesh.obj");
  std::cout << topology_json(mesh_topology(mesh)).dump() << '\n';
  return kOk;
}

int cmd_check_grad(const std::string& config) {
  const CheckGradRunConfig c = parse_check_grad_config(config_or_empty(config));
  set_backward_corruption(c.corrupt_backward);
  const GradCheckReport report = check_gradients(c.check);
  set_backward_corruption(1.0);
  std::printf("resolution %d, %zu active tets\n", c.check.resolution, report.active_tets);
  for (const auto& e : report.entries)
    std::printf("%-8s %-12s max_rel_error %.3e  tolerance %.0e  %s  (unfiltered %.3e, %zu kink pixels)\n",
                e.map.c_str(), e.parameter.c_str(), e.max_rel_error, e.tolerance, e.passed ? "ok" : "FAIL",
                e.max_rel_error_unfiltered, e.excluded);
  return report.passed() ? kOk : kNumerical;
}

int cmd_bench_sort(const std::string& config, const std::string& out_flag) {
  BenchSortRunConfig c = parse_bench_sort_config(config_or_empty(config));
  if (!out_flag.empty()) c.out = out_flag;
  std::string csv = "resolution,window,max_abs,mean_abs,ms_per_frame\n";
  for (const auto& r : bench_sort(c.bench)) {
    char line[256];
    std::snprintf(line, sizeof line, "%d,%d,%.9g,%.9g,%.3f\n", r.resolution, r.window, r.max_abs, r.mean_abs,
                  r.ms_per_frame);
    csv += line;
  }
  std::cout << csv;
  if (!c.out.empty()) {
    make_dir(c.out);
    std::ofstream f(fs::path(c.out) / "bench_sort.csv");
    f << csv;
    if (!f) throw IoError("write failed: " + c.out);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable tetrahedron splatting"};
  app.require_subcommand(1);

  RenderFlags rf;
  std::string config, out, checkpoint;
  auto* render = app.add_subcommand("render", "Render normal/depth/opacity maps");
  render->add_option("--config", rf.config, "JSON config");
  render->add_option("--out", rf.out, "Output directory");
  render->add_option("--init", rf.init, "Analytic init, e.g. sphere:0.5");
  render->add_option("--s", rf.s, "Steepness");
  render->add_option("--checkpoint", rf.checkpoint, "Field checkpoint");
  render->add_flag("--reference", rf.reference, "Exact per-pixel sorting");

  auto* fit_cmd = app.add_subcommand("fit", "Fit a field to an analytic target");
  fit_cmd->add_option("--config", config, "JSON config");
  fit_cmd->add_option("--out", out, "Output directory");

  auto* extract = app.add_subcommand("extract", "Marching tetrahedra on a checkpoint");
  extract->add_option("--config", config, "JSON config");
  extract->add_option("--out", out, "Output directory");
  extract->add_option("--checkpoint", checkpoint, "Field checkpoint");

  auto* grad = app.add_subcommand("check-grad", "Finite-difference gradient check");
  grad->add_option("--config", config, "JSON config");
  grad->add_option("--out", out, "Unused");

  auto* bench = app.add_subcommand("bench-sort", "Sorting-window error and throughput");
  bench->add_option("--config", config, "JSON config");
  bench->add_option("--out", out, "Output directory for bench_sort.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kValidation;
  }

  try {
    if (*render) return cmd_render(rf);
    if (*fit_cmd) return cmd_fit(config, out);
    if (*extract) return cmd_extract(config, out, checkpoint);
    if (*grad) return cmd_check_grad(config);
    if (*bench) return cmd_bench_sort(config, out);
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  }
  return kValidation;
}
