#include "spark/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace spark::config {

namespace {

std::string_view Trim(std::string_view s)
{
  auto const b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) { return {}; }
  auto const e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ParseDouble(std::string_view key, std::string_view v)
{
  double out = 0.0;
  auto const [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(fmt::format("{}: '{}' is not a finite number", key, v));
  }
  return out;
}

Index ParseIndex(std::string_view key, std::string_view v)
{
  long long out = 0;
  auto const [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) { throw ConfigError(fmt::format("{}: '{}' is not an integer", key, v)); }
  return static_cast<Index>(out);
}

bool ParseBool(std::string_view key, std::string_view v)
{
  if (v == "true" || v == "1" || v == "yes") { return true; }
  if (v == "false" || v == "0" || v == "no") { return false; }
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

struct Field
{
  char const *key;
  char const *help;
  std::function<void(RunConfig &, std::string_view)> set;
};

std::vector<Field> const &Fields()
{
  using K = std::string_view;
  static std::vector<Field> const f{
    {"g_max", "gradient amplitude limit, mT/m", [](RunConfig &c, K v) { c.spec.hardware.g_max = ParseDouble("g_max", v); }},
    {"s_max", "slew-rate limit, T/m/s", [](RunConfig &c, K v) { c.spec.hardware.s_max = ParseDouble("s_max", v); }},
    {"raster_dt", "gradient raster time, us", [](RunConfig &c, K v) { c.spec.hardware.raster_dt = ParseDouble("raster_dt", v); }},
    {"dwell_dt", "ADC dwell time, us", [](RunConfig &c, K v) { c.spec.hardware.dwell_dt = ParseDouble("dwell_dt", v); }},
    {"gamma", "gyromagnetic ratio, MHz/T", [](RunConfig &c, K v) { c.spec.hardware.gamma = ParseDouble("gamma", v); }},
    {"n", "image matrix size", [](RunConfig &c, K v) { c.spec.hardware.n = ParseIndex("n", v); }},
    {"fov", "field of view, m", [](RunConfig &c, K v) { c.spec.hardware.fov = ParseDouble("fov", v); }},
    {"n_shots", "number of shots Nc", [](RunConfig &c, K v) { c.spec.n_shots = ParseIndex("n_shots", v); }},
    {"n_samples", "raster samples per shot Ns", [](RunConfig &c, K v) { c.spec.n_samples = ParseIndex("n_samples", v); }},
    {"anchor_center", "pin the middle sample of every shot to k = 0", [](RunConfig &c, K v) { c.anchor_center = ParseBool("anchor_center", v); }},
    {"vds_cutoff", "VDS cutoff C", [](RunConfig &c, K v) { c.vds.cutoff = ParseDouble("vds_cutoff", v); }},
    {"vds_decay", "VDS decay D", [](RunConfig &c, K v) { c.vds.decay = ParseDouble("vds_decay", v); }},
    {"loupe_sparsity", "LOUPE-lite budget (1/R)", [](RunConfig &c, K v) { c.loupe.target_sparsity = ParseDouble("loupe_sparsity", v); }},
    {"loupe_slope", "LOUPE-lite sigmoid slope", [](RunConfig &c, K v) { c.loupe.slope = ParseDouble("loupe_slope", v); }},
    {"loupe_epochs", "LOUPE-lite epochs", [](RunConfig &c, K v) { c.loupe.epochs = ParseIndex("loupe_epochs", v); }},
    {"loupe_step", "LOUPE-lite learning rate", [](RunConfig &c, K v) { c.loupe.step_size = ParseDouble("loupe_step", v); }},
    {"loupe_seed", "LOUPE-lite seed", [](RunConfig &c, K v) { c.loupe.seed = static_cast<std::uint64_t>(ParseIndex("loupe_seed", v)); }},
    {"n_levels", "multi-resolution levels", [](RunConfig &c, K v) { c.sparkling.n_levels = ParseIndex("n_levels", v); }},
    {"iters_per_level", "descent iterations per level", [](RunConfig &c, K v) { c.sparkling.iters_per_level = ParseIndex("iters_per_level", v); }},
    {"step_scale", "initial step as a fraction of the step bound", [](RunConfig &c, K v) { c.sparkling.step_scale = ParseDouble("step_scale", v); }},
    {"max_halvings", "backtracking halvings per iteration", [](RunConfig &c, K v) { c.sparkling.max_halvings = ParseIndex("max_halvings", v); }},
    {"step_growth", "step multiplier after an accepted step", [](RunConfig &c, K v) { c.sparkling.step_growth = ParseDouble("step_growth", v); }},
    {"init", "radial | golden-angle | file", [](RunConfig &c, K v) {
       if (v == "radial") {
         c.sparkling.init = sparkling::Init::RadialInOut;
       } else if (v == "golden-angle") {
         c.sparkling.init = sparkling::Init::GoldenAngle;
       } else if (v == "file") {
         c.sparkling.init = sparkling::Init::File;
       } else {
         throw ConfigError(fmt::format("init: unknown initialization '{}'", v));
       }
     }},
    {"seed", "SPARKLING seed", [](RunConfig &c, K v) { c.sparkling.seed = static_cast<std::uint64_t>(ParseIndex("seed", v)); }},
    {"proj_max_iter", "projection iterations inside the descent", [](RunConfig &c, K v) { c.sparkling.projection.max_iter = ParseIndex("proj_max_iter", v); }},
    {"proj_tol", "projection tolerance inside the descent", [](RunConfig &c, K v) { c.sparkling.projection.tol = ParseDouble("proj_tol", v); }},
    {"final_proj_max_iter", "iterations of the final projection", [](RunConfig &c, K v) { c.sparkling.final_projection.max_iter = ParseIndex("final_proj_max_iter", v); }},
    {"final_proj_tol", "tolerance of the final projection", [](RunConfig &c, K v) { c.sparkling.final_projection.tol = ParseDouble("final_proj_tol", v); }},
    {"proj_method", "interior-point | dual-ascent", [](RunConfig &c, K v) {
       constraints::ProjectionMethod m;
       if (v == "interior-point") {
         m = constraints::ProjectionMethod::InteriorPoint;
       } else if (v == "dual-ascent") {
         m = constraints::ProjectionMethod::DualAscent;
       } else {
         throw ConfigError(fmt::format("proj_method: unknown method '{}'", v));
       }
       c.sparkling.projection.method = m;
       c.sparkling.final_projection.method = m;
     }},
    {"bh_threshold", "point count above which repulsion uses Barnes-Hut", [](RunConfig &c, K v) { c.sparkling.repulsion.exact_max = ParseIndex("bh_threshold", v); }},
    {"bh_theta", "Barnes-Hut opening angle", [](RunConfig &c, K v) { c.sparkling.repulsion.theta = ParseDouble("bh_theta", v); }},
    {"lambda", "l1 weight (relative, see README)", [](RunConfig &c, K v) { c.recon.lambda = ParseDouble("lambda", v); }},
    {"recon_max_iter", "FISTA iterations", [](RunConfig &c, K v) { c.recon.max_iter = ParseIndex("recon_max_iter", v); }},
    {"recon_tol", "relative objective change to stop", [](RunConfig &c, K v) { c.recon.tol = ParseDouble("recon_tol", v); }},
    {"wavelet", "sym8 | haar", [](RunConfig &c, K v) { c.recon.wavelet.family = std::string(v); }},
    {"wavelet_scales", "decomposition levels", [](RunConfig &c, K v) { c.recon.wavelet.n_scales = ParseIndex("wavelet_scales", v); }},
    {"dc_precondition", "weight the data term by Pipe weights", [](RunConfig &c, K v) { c.recon.dc_precondition = ParseBool("dc_precondition", v); }},
    {"dc_iters", "Pipe iterations", [](RunConfig &c, K v) { c.recon.dc_iters = ParseIndex("dc_iters", v); }},
    {"center_fraction", "k-space radius used for sensitivity maps", [](RunConfig &c, K v) { c.center_fraction = ParseDouble("center_fraction", v); }},
    {"nufft", "gridded | exact", [](RunConfig &c, K v) {
       if (v == "gridded") {
         c.nufft_mode = nufft::Mode::Gridded;
       } else if (v == "exact") {
         c.nufft_mode = nufft::Mode::Exact;
       } else {
         throw ConfigError(fmt::format("nufft: unknown mode '{}'", v));
       }
     }},
  };
  return f;
}

} // namespace

void RunConfig::validate() const
{
  spec.validate();
  vds.validate();
  loupe.validate();
  sparkling.validate(spec.n_samples);
  recon.validate(spec.hardware.n);
  for (auto const *p : {&sparkling.projection, &sparkling.final_projection}) {
    if (p->max_iter < 1 || !(p->tol > 0.0)) { throw ConfigError("projection needs max_iter >= 1 and tol > 0"); }
  }
  if (!(center_fraction > 0.0 && center_fraction <= 1.0)) {
    throw ConfigError(fmt::format("center_fraction must be in (0, 1], got {}", center_fraction));
  }
}

RunConfig ParseRunConfig(std::string_view text)
{
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  Index line_no = 0;
  while (!text.empty()) {
    auto const nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (auto const hash = line.find('#'); hash != std::string_view::npos) { line = line.substr(0, hash); }
    line = Trim(line);
    if (line.empty()) { continue; }
    auto const eq = line.find('=');
    if (eq == std::string_view::npos) { throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no)); }
    auto const key = Trim(line.substr(0, eq));
    auto const value = Trim(line.substr(eq + 1));
    if (value.empty()) { throw ConfigError(fmt::format("line {}: '{}' has no value", line_no, key)); }
    auto const &fields = Fields();
    auto const it = std::find_if(fields.begin(), fields.end(), [&](Field const &f) { return key == f.key; });
    if (it == fields.end()) { throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key)); }
    if (!seen.insert(std::string(key)).second) { throw ConfigError(fmt::format("line {}: '{}' given twice", line_no, key)); }
    it->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig LoadRunConfig(std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError(fmt::format("cannot open config '{}'", path.string())); }
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseRunConfig(ss.str());
}

std::vector<KeyDoc> Keys()
{
  std::vector<KeyDoc> out;
  for (auto const &f : Fields()) {
    out.push_back({f.key, f.help});
  }
  return out;
}

} // namespace spark::config
