#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tetsplat/diagnostics.hpp"
#include "tetsplat/errors.hpp"
#include "tetsplat/fit.hpp"

namespace tetsplat {

using Json = nlohmann::json;

// All problems found in one config, each prefixed by its key path
// (e.g. "render.window: expected an integer", "lamda_eik: unknown key").
class ConfigError : public InvalidArgument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

// Throws IoError when unreadable, ConfigError on malformed JSON.
Json load_json(const std::filesystem::path& path);

// "sphere:0.5", "torus:0.5,0.2", "box:0.3,0.3,0.3".
AnalyticShape parse_shape_spec(const std::string& spec);

struct RenderRunConfig {
  std::string checkpoint;                 // empty: analytic init
  std::optional<AnalyticShape> init;
  int resolution = 32;
  std::optional<double> s;                // default: checkpoint value, else 200
  ViewSpec camera{3.0, 30, 25, 40, 256, 256, 0.1, 10};
  RenderOptions render;
  double filter_threshold = kDefaultFilterThreshold;
  bool reference = false;
  std::string out = "out";
};

struct FitRunConfig {
  FitConfig fit;
  std::string out = "out";
};

struct ExtractRunConfig {
  std::string checkpoint;
  std::string out = "out";
};

struct CheckGradRunConfig {
  GradCheckConfig check;
  double corrupt_backward = 1.0;  // test hook: scales backward output
};

struct BenchSortRunConfig {
  BenchSortConfig bench;
  std::string out;  // empty: CSV to stdout only
};

RenderRunConfig parse_render_config(const Json& j);
FitRunConfig parse_fit_config(const Json& j);
ExtractRunConfig parse_extract_config(const Json& j);
CheckGradRunConfig parse_check_grad_config(const Json& j);
BenchSortRunConfig parse_bench_sort_config(const Json& j);

// One JSON object per line; wall time is left out so equal runs give equal files.
Json trace_record(const IterationRecord& record);
void write_trace(const std::filesystem::path& path, const FitTrace& trace);

Json topology_json(const MeshTopology& topo);

}  // namespace tetsplat
