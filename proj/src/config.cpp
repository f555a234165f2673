#include "tetsplat/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace tetsplat {

ConfigError::ConfigError(std::vector<std::string> problems)
    : InvalidArgument([&] {
        std::string msg = "invalid config:";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
}

AnalyticShape parse_shape_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  std::vector<double> v;
  if (colon != std::string::npos) {
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t used = 0;
      double x = 0;
      try {
        x = std::stod(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != item.size()) throw InvalidArgument("bad number '" + item + "' in shape '" + spec + "'");
      v.push_back(x);
    }
  }
  AnalyticShape shape;
  if (kind == "sphere" && v.size() == 1) shape = AnalyticShape::sphere(v[0]);
  else if (kind == "torus" && v.size() == 2) shape = AnalyticShape::torus(v[0], v[1]);
  else if (kind == "box" && v.size() == 3) shape = AnalyticShape::box({v[0], v[1], v[2]});
  else throw InvalidArgument("shape '" + spec + "': expected sphere:r, torus:R,r or box:hx,hy,hz");
  validate(shape);
  return shape;
}

namespace {

class Reader {
 public:
  Reader(const Json* j, std::string path, std::vector<std::string>& problems)
      : j_(j), path_(std::move(path)), problems_(problems) {
    if (j_ && !j_->is_object()) {
      problem(path_.empty() ? "<root>" : path_, "expected an object");
      j_ = nullptr;
    }
  }
  Reader(const Reader&) = delete;

  ~Reader() {
    if (!j_) return;
    for (const auto& [key, value] : j_->items())
      if (!seen_.count(key)) problem(key_path(key), "unknown key");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void problem(const std::string& where, const std::string& what) { problems_.push_back(where + ": " + what); }

  const Json* find(const char* key) {
    seen_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  std::vector<std::string>& sink() { return problems_; }

  bool has(const char* key) const { return j_ && j_->contains(key); }

  Reader child(const char* key) { return Reader(find(key), key_path(key), problems_); }

  void get(const char* key, int& out) {
    if (const Json* v = find(key)) {
      if (v->is_number_integer() && v->get<long long>() >= INT32_MIN && v->get<long long>() <= INT32_MAX)
        out = v->get<int>();
      else problem(key_path(key), "expected an integer");
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const Json* v = find(key)) {
      if (v->is_number_unsigned()) out = v->get<std::uint64_t>();
      else problem(key_path(key), "expected a non-negative integer");
    }
  }
  void get(const char* key, double& out) {
    if (const Json* v = find(key)) {
      if (v->is_number()) out = v->get<double>();
      else problem(key_path(key), "expected a number");
    }
  }
  void get(const char* key, bool& out) {
    if (const Json* v = find(key)) {
      if (v->is_boolean()) out = v->get<bool>();
      else problem(key_path(key), "expected true or false");
    }
  }
  void get(const char* key, std::string& out) {
    if (const Json* v = find(key)) {
      if (v->is_string()) out = v->get<std::string>();
      else problem(key_path(key), "expected a string");
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (const Json* v = find(key)) {
      bool ok = v->is_array() && !v->empty();
      if (ok)
        for (const auto& x : *v) ok = ok && x.is_number_integer();
      if (ok) out = v->get<std::vector<int>>();
      else problem(key_path(key), "expected a non-empty array of integers");
    }
  }
  void get(const char* key, Vec3& out) {
    if (const Json* v = find(key)) {
      if (v->is_array() && v->size() == 3 && (*v)[0].is_number() && (*v)[1].is_number() && (*v)[2].is_number())
        out = Vec3{(*v)[0].get<double>(), (*v)[1].get<double>(), (*v)[2].get<double>()};
      else problem(key_path(key), "expected [x, y, z]");
    }
  }

 private:
  const Json* j_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

void read_shape(Reader& parent, const char* key, AnalyticShape& out) {
  const Json* v = parent.find(key);
  if (!v) return;
  const std::string where = parent.key_path(key);
  if (v->is_string()) {
    try {
      out = parse_shape_spec(v->get<std::string>());
    } catch (const InvalidArgument& e) {
      parent.problem(where, e.what());
    }
    return;
  }
  std::string kind = "sphere";
  double radius = 0.5, major = 0.5, minor = 0.2;
  Vec3 half{0.3, 0.3, 0.3}, center;
  const std::size_t before = parent.sink().size();
  {
    Reader r(v, where, parent.sink());
    r.get("shape", kind);
    if (kind == "sphere") r.get("radius", radius);
    else if (kind == "torus") {
      r.get("major", major);
      r.get("minor", minor);
    } else if (kind == "box") r.get("half_extents", half);
    else r.problem(where + ".shape", "expected sphere, torus or box");
    r.get("center", center);
  }
  if (parent.sink().size() != before) return;
  try {
    if (kind == "sphere") out = AnalyticShape::sphere(radius, center);
    else if (kind == "torus") out = AnalyticShape::torus(major, minor, center);
    else out = AnalyticShape::box(half, center);
    validate(out);
  } catch (const InvalidArgument& e) {
    parent.problem(where, e.what());
  }
}

void read_view(Reader& parent, const char* key, ViewSpec& v) {
  Reader r = parent.child(key);
  r.get("width", v.width);
  r.get("height", v.height);
  r.get("fov_deg", v.fov_deg);
  r.get("radius", v.radius);
  r.get("azimuth_deg", v.azimuth_deg);
  r.get("elevation_deg", v.elevation_deg);
  r.get("near", v.near);
  r.get("far", v.far);
}

void read_render_options(Reader& parent, RenderOptions& o) {
  Reader r = parent.child("render");
  r.get("window", o.window);
  r.get("stop_transmittance", o.stop_transmittance);
  r.get("tile_size", o.tile_size);
}

void check_view(const ViewSpec& v, const std::string& where, std::vector<std::string>& problems) {
  if (v.width < 1 || v.height < 1) {
    problems.push_back(where + ": width and height must be >= 1");
    return;
  }
  try {
    validate(v.camera());
  } catch (const std::exception& e) {
    problems.push_back(where + ": " + e.what());
  }
}

void finish(std::vector<std::string>& problems) {
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

}  // namespace

RenderRunConfig parse_render_config(const Json& j) {
  RenderRunConfig c;
  std::vector<std::string> problems;
  {
    Reader r(&j, "", problems);
    r.get("checkpoint", c.checkpoint);
    if (r.has("init")) {
      AnalyticShape shape;
      read_shape(r, "init", shape);
      c.init = shape;
    } else {
      r.find("init");
    }
    r.get("resolution", c.resolution);
    if (r.has("s")) {
      double s = 0;
      r.get("s", s);
      c.s = s;
    } else {
      r.find("s");
    }
    read_view(r, "camera", c.camera);
    read_render_options(r, c.render);
    r.get("filter_threshold", c.filter_threshold);
    r.get("reference", c.reference);
    r.get("out", c.out);
  }
  if (c.resolution < 1) problems.push_back("resolution: must be >= 1");
  if (c.s && !(*c.s > 0)) problems.push_back("s: must be positive");
  if (c.render.window < 1) problems.push_back("render.window: must be >= 1");
  if (c.render.tile_size < 1) problems.push_back("render.tile_size: must be >= 1");
  check_view(c.camera, "camera", problems);
  finish(problems);
  return c;
}

FitRunConfig parse_fit_config(const Json& j) {
  FitRunConfig run;
  FitConfig& c = run.fit;
  std::vector<std::string> problems;
  {
    Reader r(&j, "", problems);
    r.get("resolution", c.resolution);
    r.get("image_size", c.image_size);
    r.get("views", c.views);
    r.get("batch", c.batch);
    r.get("iterations", c.iterations);
    r.get("s_start", c.s_start);
    r.get("s_ratio", c.s_ratio);
    r.get("lambda_eik", c.lambda_eik);
    r.get("lambda_nc", c.lambda_nc);
    {
      Reader w = r.child("map_weights");
      w.get("opacity", c.map_weights.opacity);
      w.get("depth", c.map_weights.depth);
      w.get("normal", c.map_weights.normal);
      w.get("color", c.map_weights.color);
    }
    r.get("lr_sdf", c.lr_sdf);
    r.get("lr_deform", c.lr_deform);
    r.get("beta1", c.beta1);
    r.get("beta2", c.beta2);
    r.get("adam_epsilon", c.adam_epsilon);
    r.get("deformation", c.deformation);
    r.get("coarse_to_fine", c.coarse_to_fine);
    std::string scope = "active";
    r.get("eikonal_scope", scope);
    if (scope == "active") c.eikonal_scope = EikonalScope::active;
    else if (scope == "all") c.eikonal_scope = EikonalScope::all;
    else problems.push_back("eikonal_scope: expected \"active\" or \"all\"");
    r.get("filter_threshold", c.filter_threshold);
    r.get("init_radius", c.init_radius);
    read_shape(r, "target", c.target);
    {
      Reader o = r.child("orbit");
      o.get("radius", c.orbit.radius);
      o.get("elevation_min_deg", c.orbit.elevation_min_deg);
      o.get("elevation_max_deg", c.orbit.elevation_max_deg);
      o.get("fov_deg", c.orbit.fov_deg);
      o.get("near", c.orbit.near);
      o.get("far", c.orbit.far);
    }
    read_render_options(r, c.render);
    r.get("chamfer_samples", c.chamfer_samples);
    r.get("seed", c.seed);
    r.get("out", run.out);
  }
  if (problems.empty()) {
    try {
      validate(c);
    } catch (const InvalidArgument& e) {
      problems.push_back(e.what());
    }
  }
  finish(problems);
  return run;
}

ExtractRunConfig parse_extract_config(const Json& j) {
  ExtractRunConfig c;
  std::vector<std::string> problems;
  {
    Reader r(&j, "", problems);
    r.get("checkpoint", c.checkpoint);
    r.get("out", c.out);
  }
  if (c.checkpoint.empty()) problems.push_back("checkpoint: required");
  finish(problems);
  return c;
}

CheckGradRunConfig parse_check_grad_config(const Json& j) {
  CheckGradRunConfig run;
  GradCheckConfig& c = run.check;
  std::vector<std::string> problems;
  {
    Reader r(&j, "", problems);
    r.get("resolution", c.resolution);
    read_view(r, "camera", c.view);
    r.get("s", c.s);
    r.get("seed", c.seed);
    r.get("step", c.step);
    r.get("tolerance", c.tolerance);
    r.get("opacity_tolerance", c.opacity_tolerance);
    r.get("floor", c.floor);
    r.get("window", c.window);
    r.get("corrupt_backward", run.corrupt_backward);
    std::string out;
    r.get("out", out);
  }
  if (c.resolution < 1) problems.push_back("resolution: must be >= 1");
  if (!(c.s > 0)) problems.push_back("s: must be positive");
  if (!(c.step > 0)) problems.push_back("step: must be positive");
  if (c.window < 1) problems.push_back("window: must be >= 1");
  check_view(c.view, "camera", problems);
  finish(problems);
  return run;
}

BenchSortRunConfig parse_bench_sort_config(const Json& j) {
  BenchSortRunConfig run;
  BenchSortConfig& c = run.bench;
  std::vector<std::string> problems;
  {
    Reader r(&j, "", problems);
    r.get("resolutions", c.resolutions);
    r.get("windows", c.windows);
    read_view(r, "camera", c.view);
    r.get("s", c.s);
    r.get("seed", c.seed);
    r.get("frames", c.frames);
    r.get("out", run.out);
  }
  for (int x : c.resolutions)
    if (x < 1) problems.push_back("resolutions: entries must be >= 1");
  for (int x : c.windows)
    if (x < 0) problems.push_back("windows: entries must be >= 0 (0 selects the longest tile list)");
  if (!(c.s > 0)) problems.push_back("s: must be positive");
  if (c.frames < 1) problems.push_back("frames: must be >= 1");
  check_view(c.view, "camera", problems);
  finish(problems);
  return run;
}

Json trace_record(const IterationRecord& rec) {
  const LossReport& l = rec.loss;
  return Json{{"iteration", rec.iteration},
              {"s", rec.steepness},
              {"loss", l.total},
              {"map_total", l.map_total},
              {"map_opacity", l.map_opacity},
              {"map_depth", l.map_depth},
              {"map_normal", l.map_normal},
              {"map_color", l.map_color},
              {"eikonal", l.eikonal},
              {"normal_consistency", l.normal_consistency},
              {"lambda_eik", l.lambda_eik},
              {"lambda_nc", l.lambda_nc},
              {"lambda_rgb", l.lambda_rgb},
              {"lambda_mask", l.lambda_mask},
              {"active_tets", rec.active_tets},
              {"max_abs_sdf", rec.max_abs_sdf}};
}

void write_trace(const std::filesystem::path& path, const FitTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& rec : trace.records) out << trace_record(rec).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Json topology_json(const MeshTopology& t) {
  return Json{{"vertices", t.vertices},
              {"edges", t.edges},
              {"faces", t.faces},
              {"boundary_edges", t.boundary_edges},
              {"nonmanifold_edges", t.nonmanifold_edges},
              {"euler_characteristic", t.euler_characteristic()},
              {"watertight", t.watertight()}};
}

}  // namespace tetsplat
