#include "spark/study.hpp"

#include "spark/constraints.hpp"
#include "spark/density.hpp"
#include "spark/io.hpp"
#include "spark/metrics.hpp"
#include "spark/phantom.hpp"
#include "spark/sparkling.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace spark::study {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Re2> TrainingSet(Index n, Index count, std::uint64_t seed)
{
  std::vector<Re2> out;
  for (Index j = 0; j < count; ++j) {
    out.push_back(phantom::Random(n, seed ^ 0x7261696e696e67ull, j));
  }
  return out;
}

DensityGrid BuildDensity(std::string const &method, config::RunConfig const &run, std::vector<Re2> const &training)
{
  Index const n = run.spec.hardware.n;
  if (method == "vds") { return density::Vds(n, run.vds); }
  if (training.empty()) { throw ConfigError(fmt::format("density method '{}' needs training images", method)); }
  if (method == "spectrum") { return density::Spectrum(training); }
  if (method == "log-spectrum") { return density::LogSpectrum(training); }
  if (method == "loupe-lite") { return density::LoupeLite(training, run.loupe).density; }
  throw ConfigError(fmt::format("unknown density method '{}'", method));
}

Trajectory DesignTrajectory(DensityGrid const &rho, config::RunConfig const &run)
{
  auto const q = constraints::FromHardware(run.spec, run.anchor_center);
  return sparkling::Generate(rho, run.spec, q, run.sparkling).trajectory;
}

nufft::Plan AcquisitionPlan(Trajectory const &t, config::RunConfig const &run)
{
  return nufft::Plan(sparkling::SampleDwellPoints(t, t.spec().hardware.oversampling()), run.spec.hardware.n, run.nufft_mode);
}

recon::KSpace Acquire(Re2 const &image, nufft::Plan const &plan, Index n_coils)
{
  if (image.rows() != plan.n() || image.cols() != plan.n()) {
    throw DataError(fmt::format("image is {}x{}, trajectory is set up for {}x{}", image.rows(), image.cols(), plan.n(), plan.n()));
  }
  return nufft::Forward(plan, phantom::ApplyCoils(image, phantom::GaussianCoils(plan.n(), n_coils)));
}

namespace {

std::string ConfigText(json const &cfg)
{
  if (!cfg.is_object()) { throw ConfigError("manifest 'config' must be an object of key/value pairs"); }
  std::string text;
  for (auto const &[k, v] : cfg.items()) {
    std::string value;
    if (v.is_string()) {
      value = v.get<std::string>();
    } else if (v.is_boolean()) {
      value = v.get<bool>() ? "true" : "false";
    } else if (v.is_number()) {
      value = v.dump();
    } else {
      throw ConfigError(fmt::format("manifest config value for '{}' must be a scalar", k));
    }
    text += fmt::format("{} = {}\n", k, value);
  }
  return text;
}

template <typename T>
T Get(json const &j, char const *key, T fallback)
{
  if (!j.contains(key)) { return fallback; }
  try {
    return j.at(key).get<T>();
  } catch (json::exception const &e) {
    throw ConfigError(fmt::format("manifest '{}': {}", key, e.what()));
  }
}

} // namespace

Manifest ParseManifest(std::string const &json_text, fs::path const &base)
{
  json j;
  try {
    j = json::parse(json_text);
  } catch (json::exception const &e) {
    throw ConfigError(fmt::format("manifest is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) { throw ConfigError("manifest must be a JSON object"); }
  static std::set<std::string> const known{"slices",  "phantoms", "methods", "config",  "config_file", "lambda",
                                           "lambda_grid", "coils", "training_images", "seed", "workers", "output"};
  for (auto const &[k, v] : j.items()) {
    if (!known.contains(k)) { throw ConfigError(fmt::format("unknown manifest key '{}'", k)); }
  }

  Manifest m;
  m.seed = Get<std::uint64_t>(j, "seed", 0);
  m.coils = Get<Index>(j, "coils", 1);
  m.training_images = Get<Index>(j, "training_images", 20);
  m.lambda_grid = Get<Index>(j, "lambda_grid", 9);
  m.workers = Get<Index>(j, "workers", 0);
  if (m.coils < 1) { throw ConfigError(fmt::format("coils must be >= 1, got {}", m.coils)); }
  if (m.lambda_grid < 1) { throw ConfigError(fmt::format("lambda_grid must be >= 1, got {}", m.lambda_grid)); }
  if (m.workers < 0) { throw ConfigError(fmt::format("workers must be >= 0, got {}", m.workers)); }
  if (j.contains("output")) { m.output = base / Get<std::string>(j, "output", ""); }

  std::string text;
  if (j.contains("config_file")) {
    fs::path const p = base / Get<std::string>(j, "config_file", "");
    std::ifstream in(p);
    if (!in) { throw ConfigError(fmt::format("config file '{}' not found", p.string())); }
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str() + "\n";
  }
  if (j.contains("config")) { text += ConfigText(j["config"]); }
  m.run = config::ParseRunConfig(text);

  if (j.contains("lambda")) {
    auto const &l = j["lambda"];
    if (l.is_string() && l.get<std::string>() == "search") {
      m.lambda.reset();
    } else if (l.is_number()) {
      m.lambda = l.get<double>();
      if (!(*m.lambda >= 0.0)) { throw ConfigError(fmt::format("lambda must be >= 0, got {}", *m.lambda)); }
    } else {
      throw ConfigError("manifest 'lambda' must be a number or \"search\"");
    }
  } else {
    m.lambda = m.run.recon.lambda;
  }

  m.methods = Get<std::vector<std::string>>(j, "methods", {"vds"});
  if (m.methods.empty()) { throw ConfigError("manifest lists no density methods"); }
  std::set<std::string> seen;
  for (auto const &meth : m.methods) {
    if (std::find(std::begin(kMethods), std::end(kMethods), meth) == std::end(kMethods)) {
      throw ConfigError(fmt::format("unknown density method '{}'", meth));
    }
    if (!seen.insert(meth).second) { throw ConfigError(fmt::format("density method '{}' listed twice", meth)); }
  }

  if (j.contains("slices")) {
    if (!j["slices"].is_array()) { throw ConfigError("manifest 'slices' must be an array"); }
    for (auto const &s : j["slices"]) {
      Slice sl;
      sl.file = base / Get<std::string>(s, "file", "");
      if (!s.contains("file")) { throw ConfigError("every slice needs a 'file'"); }
      sl.contrast = Get<std::string>(s, "contrast", "");
      sl.id = Get<std::string>(s, "id", sl.file.stem().string());
      if (!fs::is_regular_file(sl.file)) { throw ConfigError(fmt::format("slice file '{}' does not exist", sl.file.string())); }
      m.slices.push_back(std::move(sl));
    }
  }
  if (j.contains("phantoms")) {
    auto const &p = j["phantoms"];
    Index const count = Get<Index>(p, "count", 0);
    if (count < 1) { throw ConfigError("phantoms.count must be >= 1"); }
    auto const contrasts = Get<std::vector<std::string>>(p, "contrasts", {"phantom"});
    if (contrasts.empty()) { throw ConfigError("phantoms.contrasts is empty"); }
    for (Index i = 0; i < count; ++i) {
      Slice sl;
      sl.id = fmt::format("phantom_{:03d}", i);
      sl.contrast = contrasts[static_cast<std::size_t>(i) % contrasts.size()];
      sl.phantom_index = i;
      m.slices.push_back(std::move(sl));
    }
  }
  if (m.slices.empty()) { throw ConfigError("manifest has no slices"); }
  std::set<std::string> ids;
  for (auto const &s : m.slices) {
    if (!ids.insert(s.id).second) { throw ConfigError(fmt::format("slice id '{}' is not unique", s.id)); }
  }
  return m;
}

Manifest LoadManifest(fs::path const &path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError(fmt::format("cannot open manifest '{}'", path.string())); }
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseManifest(ss.str(), path.parent_path());
}

double Quantile(std::vector<double> v, double q)
{
  if (v.empty()) { return std::nan(""); }
  std::sort(v.begin(), v.end());
  double const pos = q * static_cast<double>(v.size() - 1);
  auto const lo = static_cast<std::size_t>(std::floor(pos));
  auto const hi = std::min(lo + 1, v.size() - 1);
  double const f = pos - static_cast<double>(lo);
  if (f == 0.0) { return v[lo]; }
  return v[lo] + f * (v[hi] - v[lo]);
}

Index Result::failures() const
{
  return static_cast<Index>(std::count_if(rows.begin(), rows.end(), [](Row const &r) { return !r.error.empty(); }));
}

namespace {

Row RunSlice(Manifest const &m, Slice const &s, std::string const &method, nufft::Plan const &plan)
{
  auto const t0 = std::chrono::steady_clock::now();
  Row row;
  row.slice_id = s.id;
  row.method = method;
  row.R = AccelerationFactor(m.run.spec);
  row.lambda = m.lambda.value_or(0.0);
  try {
    Index const n = m.run.spec.hardware.n;
    Re2 const ref = s.phantom_index ? phantom::Random(n, m.seed, *s.phantom_index) : io::ReadMagnitude(s.file);
    auto const ks = Acquire(ref, plan, m.coils);
    auto const maps = recon::EstimateSensitivities(ks, plan, m.run.center_fraction);
    auto const mask = metrics::AutoMask(ref);
    if (m.lambda) {
      recon::ReconConfig cfg = m.run.recon;
      cfg.lambda = *m.lambda;
      auto const r = recon::CsReconstruct(ks, plan, maps, cfg);
      auto const q = metrics::Score(ref, metrics::Magnitude(r.image), mask);
      row.ssim = q.ssim;
      row.psnr = q.psnr;
      row.recon_iters = r.iterations;
    } else {
      auto const search = recon::SearchLambda(ks, plan, maps, ref, recon::LogGrid(m.lambda_grid), m.run.recon, mask);
      auto const best = std::find_if(search.table.begin(), search.table.end(), [&](auto const &r) { return r.lambda == search.best; });
      if (best == search.table.end() || !best->error.empty()) { throw DivergenceError("every lambda in the search failed"); }
      row.lambda = best->lambda;
      row.ssim = best->ssim;
      row.psnr = best->psnr;
      row.recon_iters = best->iterations;
    }
  } catch (std::exception const &e) {
    row.error = e.what();
  }
  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

} // namespace

Result RunRetrospective(Manifest const &m)
{
  Index const n = m.run.spec.hardware.n;
  bool const needs_training = std::any_of(m.methods.begin(), m.methods.end(), [](auto const &s) { return s != "vds"; });
  auto const training = needs_training ? TrainingSet(n, m.training_images, m.seed) : std::vector<Re2>{};

  std::vector<nufft::Plan> plans;
  for (auto const &method : m.methods) {
    auto const rho = BuildDensity(method, m.run, training);
    auto const traj = DesignTrajectory(rho, m.run);
    if (!m.output.empty()) {
      fs::create_directories(m.output);
      io::WriteDensity(m.output / fmt::format("density_{}.t", method), rho);
      io::WriteTrajectory(m.output / fmt::format("traj_{}.t", method), traj);
    }
    plans.push_back(AcquisitionPlan(traj, m.run));
  }

  std::vector<Slice> slices = m.slices;
  std::sort(slices.begin(), slices.end(), [](Slice const &a, Slice const &b) { return a.id < b.id; });
  std::size_t const M = m.methods.size();
  std::vector<Row> rows(slices.size() * M);
  auto const tasks = static_cast<std::ptrdiff_t>(rows.size());
  int const workers = m.workers > 0 ? static_cast<int>(m.workers) : 0;
  auto body = [&](std::ptrdiff_t k) {
    auto const i = static_cast<std::size_t>(k) / M, j = static_cast<std::size_t>(k) % M;
    rows[static_cast<std::size_t>(k)] = RunSlice(m, slices[i], m.methods[j], plans[j]);
  };
  if (workers > 0) {
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::ptrdiff_t k = 0; k < tasks; ++k) {
      body(k);
    }
  } else {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < tasks; ++k) {
      body(k);
    }
  }

  Result res;
  res.rows = std::move(rows);
  for (auto const &method : m.methods) {
    Summary s;
    s.method = method;
    std::vector<double> ssim, psnr;
    for (auto const &r : res.rows) {
      if (r.method != method) { continue; }
      ++s.slices;
      if (!r.error.empty()) {
        ++s.failures;
        continue;
      }
      ssim.push_back(r.ssim);
      psnr.push_back(r.psnr);
    }
    s.ssim_q1 = Quantile(ssim, 0.25);
    s.ssim_median = Quantile(ssim, 0.5);
    s.ssim_q3 = Quantile(ssim, 0.75);
    s.psnr_q1 = Quantile(psnr, 0.25);
    s.psnr_median = Quantile(psnr, 0.5);
    s.psnr_q3 = Quantile(psnr, 0.75);
    res.summary.push_back(s);
  }
  return res;
}

namespace {

void WriteText(fs::path const &path, std::string const &text)
{
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) { throw DataError(fmt::format("cannot open '{}' for writing", path.string())); }
    out << text;
    if (!out) { throw DataError(fmt::format("write to '{}' failed", path.string())); }
  }
  fs::rename(tmp, path);
}

std::string Csv(std::string const &s)
{
  if (s.find_first_of(",\"\n") == std::string::npos) { return s; }
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') { q += '"'; }
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

std::string Num(double v, char const *f) { return std::isnan(v) ? std::string("nan") : fmt::format(fmt::runtime(f), v); }

} // namespace

void WriteResult(Result const &r, fs::path const &dir)
{
  fs::create_directories(dir);
  std::string results = "slice_id,density_method,R,lambda,ssim,psnr,recon_iters\n";
  std::string timings = "slice_id,density_method,wall_ms\n";
  std::string failures = "slice_id,density_method,error\n";
  for (auto const &row : r.rows) {
    timings += fmt::format("{},{},{:.1f}\n", Csv(row.slice_id), row.method, row.wall_ms);
    if (!row.error.empty()) {
      failures += fmt::format("{},{},{}\n", Csv(row.slice_id), row.method, Csv(row.error));
      results += fmt::format("{},{},{:.6g},{:.6g},nan,nan,{}\n", Csv(row.slice_id), row.method, row.R, row.lambda, row.recon_iters);
      continue;
    }
    results += fmt::format("{},{},{:.6g},{:.6g},{},{},{}\n", Csv(row.slice_id), row.method, row.R, row.lambda, Num(row.ssim, "{:.6f}"),
                           Num(row.psnr, "{:.4f}"), row.recon_iters);
  }
  std::string summary = "density_method,slices,failures,ssim_q1,ssim_median,ssim_q3,psnr_q1,psnr_median,psnr_q3\n";
  for (auto const &s : r.summary) {
    summary += fmt::format("{},{},{},{},{},{},{},{},{}\n", s.method, s.slices, s.failures, Num(s.ssim_q1, "{:.6f}"), Num(s.ssim_median, "{:.6f}"),
                           Num(s.ssim_q3, "{:.6f}"), Num(s.psnr_q1, "{:.4f}"), Num(s.psnr_median, "{:.4f}"), Num(s.psnr_q3, "{:.4f}"));
  }
  WriteText(dir / "results.csv", results);
  WriteText(dir / "timings.csv", timings);
  WriteText(dir / "summary.csv", summary);
  WriteText(dir / "failures.csv", failures);
}

} // namespace spark::study
