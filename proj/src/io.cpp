#include "spark/io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace spark::io {

static_assert(std::endian::native == std::endian::little, "tensor files are little-endian; big-endian hosts unsupported");

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view Name(DType t)
{
  switch (t) {
  case DType::F32: return "f32";
  case DType::F64: return "f64";
  case DType::C64: return "c64";
  case DType::C128: return "c128";
  }
  return "?";
}

DType ParseDType(std::string_view s)
{
  if (s == "f32") { return DType::F32; }
  if (s == "f64") { return DType::F64; }
  if (s == "c64") { return DType::C64; }
  if (s == "c128") { return DType::C128; }
  throw FormatError(fmt::format("unknown dtype '{}'", s));
}

std::size_t ByteSize(DType t)
{
  switch (t) {
  case DType::F32: return 4;
  case DType::F64: return 8;
  case DType::C64: return 8;
  case DType::C128: return 16;
  }
  return 0;
}

bool IsComplex(DType t) { return t == DType::C64 || t == DType::C128; }

Index Tensor::elements() const
{
  Index n = 1;
  for (Index d : shape) {
    n *= d;
  }
  return n;
}

namespace {

Index Product(std::vector<Index> const &shape)
{
  if (shape.empty()) { throw FormatError("tensor shape must be nonempty"); }
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) { throw FormatError(fmt::format("negative tensor dimension {}", d)); }
    n *= d;
  }
  return n;
}

std::string Header(std::vector<Index> const &shape, DType dtype)
{
  json h;
  h["shape"] = shape;
  h["dtype"] = Name(dtype);
  h["order"] = "row-major";
  h["endianness"] = "little";
  return h.dump();
}

// Writes to a sibling temporary and renames, so a failed write never leaves a partial file.
void Commit(fs::path const &path, std::string const &header, std::string const &payload)
{
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) { throw DataError(fmt::format("cannot open '{}' for writing", path.string())); }
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.put('\n');
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw DataError(fmt::format("write to '{}' failed", path.string()));
    }
  }
  fs::rename(tmp, path);
}

template <typename T>
void Append(std::string &buf, T v)
{
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T Load(char const *p)
{
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

} // namespace

void WriteTensor(fs::path const &path, std::span<double const> data, std::vector<Index> const &shape, DType dtype)
{
  if (IsComplex(dtype)) { throw FormatError("real data cannot be written with a complex dtype"); }
  if (Product(shape) != static_cast<Index>(data.size())) {
    throw FormatError(fmt::format("shape holds {} elements but {} were given", Product(shape), data.size()));
  }
  std::string payload;
  payload.reserve(data.size() * ByteSize(dtype));
  for (double v : data) {
    if (dtype == DType::F32) {
      Append(payload, static_cast<float>(v));
    } else {
      Append(payload, v);
    }
  }
  Commit(path, Header(shape, dtype), payload);
}

void WriteTensor(fs::path const &path, std::span<Cx const> data, std::vector<Index> const &shape, DType dtype)
{
  if (!IsComplex(dtype)) { throw FormatError("complex data cannot be written with a real dtype"); }
  if (Product(shape) != static_cast<Index>(data.size())) {
    throw FormatError(fmt::format("shape holds {} elements but {} were given", Product(shape), data.size()));
  }
  std::string payload;
  payload.reserve(data.size() * ByteSize(dtype));
  for (Cx v : data) {
    if (dtype == DType::C64) {
      Append(payload, static_cast<float>(v.real()));
      Append(payload, static_cast<float>(v.imag()));
    } else {
      Append(payload, v.real());
      Append(payload, v.imag());
    }
  }
  Commit(path, Header(shape, dtype), payload);
}

Tensor ReadTensor(fs::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw DataError(fmt::format("cannot open '{}'", path.string())); }
  std::string line;
  if (!std::getline(in, line)) { throw FormatError(fmt::format("'{}' has no header line", path.string())); }

  Tensor t;
  try {
    json const h = json::parse(line);
    t.shape = h.at("shape").get<std::vector<Index>>();
    t.dtype = ParseDType(h.at("dtype").get<std::string>());
    if (h.contains("order") && h["order"] != "row-major") { throw FormatError("only row-major order is supported"); }
    if (h.contains("endianness") && h["endianness"] != "little") { throw FormatError("only little-endian payloads are supported"); }
  } catch (json::exception const &e) {
    throw FormatError(fmt::format("bad header in '{}': {}", path.string(), e.what()));
  }

  Index const count = Product(t.shape);
  std::size_t const expected = static_cast<std::size_t>(count) * ByteSize(t.dtype);
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() != expected) {
    throw CorruptFileError(fmt::format("'{}': payload is {} bytes, header implies {}", path.string(), payload.size(), expected));
  }

  char const *p = payload.data();
  switch (t.dtype) {
  case DType::F32:
    t.real.resize(static_cast<std::size_t>(count));
    for (auto &v : t.real) {
      v = Load<float>(p);
      p += 4;
    }
    break;
  case DType::F64:
    t.real.resize(static_cast<std::size_t>(count));
    for (auto &v : t.real) {
      v = Load<double>(p);
      p += 8;
    }
    break;
  case DType::C64:
    t.complex.resize(static_cast<std::size_t>(count));
    for (auto &v : t.complex) {
      v = Cx(Load<float>(p), Load<float>(p + 4));
      p += 8;
    }
    break;
  case DType::C128:
    t.complex.resize(static_cast<std::size_t>(count));
    for (auto &v : t.complex) {
      v = Cx(Load<double>(p), Load<double>(p + 8));
      p += 16;
    }
    break;
  }
  return t;
}

void WriteDensity(fs::path const &path, DensityGrid const &rho)
{
  WriteTensor(path, rho.values().flat(), {rho.n(), rho.n()}, DType::F64);
}

DensityGrid ReadDensity(fs::path const &path)
{
  Tensor t = ReadTensor(path);
  if (t.shape.size() != 2 || t.shape[0] != t.shape[1] || IsComplex(t.dtype)) {
    throw FormatError(fmt::format("'{}' is not a real square [n][n] density", path.string()));
  }
  Re2 v(t.shape[0], t.shape[1]);
  std::copy(t.real.begin(), t.real.end(), v.vec().begin());
  return DensityGrid(std::move(v));
}

void WriteTrajectory(fs::path const &path, Trajectory const &t)
{
  std::vector<double> flat;
  flat.reserve(t.points().size() * 2);
  for (Vec2 p : t.points()) {
    flat.push_back(p.x);
    flat.push_back(p.y);
  }
  WriteTensor(path, flat, {t.shots(), t.samples(), 2}, DType::F64);
}

Trajectory ReadTrajectory(fs::path const &path, HardwareConfig const &hw)
{
  Tensor t = ReadTensor(path);
  if (t.shape.size() != 3 || t.shape[2] != 2 || IsComplex(t.dtype)) {
    throw FormatError(fmt::format("'{}' is not a real [shots][samples][2] trajectory", path.string()));
  }
  std::vector<Vec2> pts(static_cast<std::size_t>(t.shape[0] * t.shape[1]));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i] = {t.real[2 * i], t.real[2 * i + 1]};
  }
  return Trajectory(TrajectorySpec{t.shape[0], t.shape[1], hw}, std::move(pts));
}

void WriteKSpace(fs::path const &path, std::vector<std::vector<Cx>> const &kspace)
{
  if (kspace.empty()) { throw DataError("no coils to write"); }
  std::vector<Cx> flat;
  for (auto const &c : kspace) {
    if (c.size() != kspace[0].size()) { throw DataError("coils hold different sample counts"); }
    flat.insert(flat.end(), c.begin(), c.end());
  }
  WriteTensor(path, flat, {static_cast<Index>(kspace.size()), static_cast<Index>(kspace[0].size())}, DType::C128);
}

std::vector<std::vector<Cx>> ReadKSpace(fs::path const &path)
{
  Tensor t = ReadTensor(path);
  if (t.shape.size() != 2 || !IsComplex(t.dtype)) {
    throw FormatError(fmt::format("'{}' is not a complex [L][P] k-space file", path.string()));
  }
  std::vector<std::vector<Cx>> out;
  for (Index l = 0; l < t.shape[0]; ++l) {
    auto const b = t.complex.begin() + l * t.shape[1];
    out.emplace_back(b, b + t.shape[1]);
  }
  return out;
}

void WriteImage(fs::path const &path, Re2 const &img) { WriteTensor(path, img.flat(), {img.rows(), img.cols()}, DType::F64); }

void WriteImages(fs::path const &path, std::vector<Cx2> const &imgs)
{
  if (imgs.empty()) { throw DataError("no images to write"); }
  std::vector<Cx> flat;
  for (auto const &im : imgs) {
    flat.insert(flat.end(), im.vec().begin(), im.vec().end());
  }
  WriteTensor(path, flat, {static_cast<Index>(imgs.size()), imgs[0].rows(), imgs[0].cols()}, DType::C128);
}

std::vector<Cx2> ReadImages(fs::path const &path)
{
  Tensor t = ReadTensor(path);
  Index count = 1, rows = 0, cols = 0;
  if (t.shape.size() == 2) {
    rows = t.shape[0];
    cols = t.shape[1];
  } else if (t.shape.size() == 3) {
    count = t.shape[0];
    rows = t.shape[1];
    cols = t.shape[2];
  } else {
    throw FormatError(fmt::format("'{}' is not an [n][n] or [L][n][n] image", path.string()));
  }
  std::vector<Cx2> out;
  for (Index l = 0; l < count; ++l) {
    Cx2 im(rows, cols);
    for (Index i = 0; i < rows * cols; ++i) {
      auto const j = static_cast<std::size_t>(l * rows * cols + i);
      im[i] = IsComplex(t.dtype) ? t.complex[j] : Cx(t.real[j], 0.0);
    }
    out.push_back(std::move(im));
  }
  return out;
}

Re2 ReadMagnitude(fs::path const &path)
{
  auto const imgs = ReadImages(path);
  Re2 mag(imgs[0].rows(), imgs[0].cols());
  for (auto const &im : imgs) {
    for (Index i = 0; i < mag.size(); ++i) {
      mag[i] += std::norm(im[i]);
    }
  }
  for (double &v : mag.flat()) {
    v = std::sqrt(v);
  }
  return mag;
}

} // namespace spark::io
