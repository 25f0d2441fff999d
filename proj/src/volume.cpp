#include "spinesim/volume.hpp"

#include "spinesim/error.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace spinesim {

namespace fs = std::filesystem;
using nlohmann::json;

VoxelVolume::VoxelVolume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin)
    : dims_(dims), spacing_(spacing), origin_(origin) {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
    contract_error("invalid_dims", "volume dims must all be >= 1");
  }
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  values_.assign(n, 0.0f);
  labels_.assign(n, 0);
}

VoxelVolume::VoxelVolume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin,
                         std::vector<float> values, std::vector<std::uint8_t> labels)
    : dims_(dims),
      spacing_(spacing),
      origin_(origin),
      values_(std::move(values)),
      labels_(std::move(labels)) {
  if (labels_.empty()) labels_.assign(values_.size(), 0);
  validate();
}

Vec3 VoxelVolume::voxel_center(int i, int j, int k) const {
  return origin_ + Vec3(i, j, k).cwiseProduct(spacing_);
}

Vec3 VoxelVolume::to_index(const Vec3& world) const {
  return (world - origin_).cwiseQuotient(spacing_);
}

Vec3 VoxelVolume::upper_bound() const {
  return origin_ + (Vec3(dims_[0], dims_[1], dims_[2]) - Vec3::Constant(0.5)).cwiseProduct(spacing_);
}

double VoxelVolume::sample(const Vec3& world) const {
  Vec3 c = to_index(world);
  // Snap round-off so that voxel centers return stored values exactly.
  for (int a = 0; a < 3; ++a) {
    const double r = std::round(c[a]);
    if (std::abs(c[a] - r) < 1e-9) c[a] = r;
  }
  const double fx = std::floor(c.x()), fy = std::floor(c.y()), fz = std::floor(c.z());
  const int i0 = static_cast<int>(fx), j0 = static_cast<int>(fy), k0 = static_cast<int>(fz);
  if (i0 < -1 || j0 < -1 || k0 < -1 || i0 >= dims_[0] || j0 >= dims_[1] || k0 >= dims_[2]) {
    return 0.0;
  }
  const double tx = c.x() - fx, ty = c.y() - fy, tz = c.z() - fz;
  double acc = 0.0;
  for (int dk = 0; dk < 2; ++dk) {
    const int k = k0 + dk;
    if (k < 0 || k >= dims_[2]) continue;
    const double wz = dk ? tz : 1.0 - tz;
    for (int dj = 0; dj < 2; ++dj) {
      const int j = j0 + dj;
      if (j < 0 || j >= dims_[1]) continue;
      const double wy = dj ? ty : 1.0 - ty;
      for (int di = 0; di < 2; ++di) {
        const int i = i0 + di;
        if (i < 0 || i >= dims_[0]) continue;
        const double wx = di ? tx : 1.0 - tx;
        acc += wx * wy * wz * values_[index(i, j, k)];
      }
    }
  }
  return acc;
}

void VoxelVolume::validate() const {
  if (dims_[0] < 1 || dims_[1] < 1 || dims_[2] < 1) {
    contract_error("invalid_dims", "volume dims must all be >= 1");
  }
  if (!(spacing_.minCoeff() > 0.0) || !spacing_.allFinite()) {
    contract_error("invalid_spacing", "volume spacing must be positive");
  }
  const std::size_t n = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  if (values_.size() != n || labels_.size() != n) {
    contract_error("size_mismatch", "value/label grids do not match dims");
  }
  for (float v : values_) {
    if (!std::isfinite(v) || v < 0.0f) {
      contract_error("invalid_value", "attenuation values must be finite and >= 0");
    }
  }
}

void MaterialTable::validate() const {
  for (const auto& [id, m] : entries) {
    if (id < 0 || id > 255) contract_error("invalid_label", "label ids must fit in 8 bits");
    if (id == 0) continue;
    if (!(m.density_g_cm3 > 0.0) || !(m.mu_over_rho_cm2_g > 0.0)) {
      contract_error("invalid_material", "material '" + m.name + "' needs positive density and attenuation");
    }
  }
}

namespace {

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error("missing_file", "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const char* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_error("write_failed", "cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(n));
  if (!out) io_error("write_failed", "short write to " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) io_error("missing_file", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    contract_error("malformed_metadata", path.string() + ": " + e.what());
  }
}

Vec3 vec3_from(const json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) contract_error("malformed_metadata", std::string(key) + " needs 3 entries");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

float f32_from_le(const char* p) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void f32_to_le(float f, char* p) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  std::memcpy(p, &u, 4);
}

}  // namespace

VoxelVolume load_volume(const fs::path& header_path) {
  const json h = read_json(header_path);
  std::array<int, 3> dims{};
  Vec3 spacing, origin;
  std::string data_rel, labels_rel;
  try {
    const auto& d = h.at("dims");
    if (!d.is_array() || d.size() != 3) contract_error("malformed_metadata", "dims needs 3 entries");
    for (int a = 0; a < 3; ++a) dims[a] = d[a].get<int>();
    spacing = vec3_from(h, "spacing_mm");
    origin = vec3_from(h, "origin_mm");
    if (h.value("dtype", std::string("f32")) != "f32") {
      contract_error("unsupported_dtype", "only f32 volumes are supported");
    }
    data_rel = h.at("data").get<std::string>();
    labels_rel = h.value("labels", std::string());
  } catch (const json::exception& e) {
    contract_error("malformed_metadata", header_path.string() + ": " + e.what());
  }
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) contract_error("invalid_dims", "dims must be >= 1");

  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  const fs::path dir = header_path.parent_path();
  const std::vector<char> raw = read_bytes(dir / data_rel);
  if (raw.size() != n * 4) {
    contract_error("size_mismatch", "raw data holds " + std::to_string(raw.size() / 4) +
                                        " scalars, header expects " + std::to_string(n));
  }
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = f32_from_le(raw.data() + 4 * i);
    if (!std::isfinite(values[i])) contract_error("non_finite", "volume contains non-finite values");
  }
  std::vector<std::uint8_t> labels(n, 0);
  if (!labels_rel.empty()) {
    const std::vector<char> lraw = read_bytes(dir / labels_rel);
    if (lraw.size() != n) contract_error("size_mismatch", "label file size does not match dims");
    std::memcpy(labels.data(), lraw.data(), n);
  }
  return VoxelVolume(dims, spacing, origin, std::move(values), std::move(labels));
}

void write_volume(const VoxelVolume& v, const fs::path& header_path) {
  const std::string stem = header_path.stem().string();
  const fs::path dir = header_path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  const std::string data_name = stem + ".raw";
  const std::string labels_name = stem + ".labels.raw";

  std::vector<char> raw(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) f32_to_le(v.values()[i], raw.data() + 4 * i);
  write_bytes(dir / data_name, raw.data(), raw.size());
  write_bytes(dir / labels_name, reinterpret_cast<const char*>(v.labels().data()), v.labels().size());

  json h;
  h["dims"] = {v.dims()[0], v.dims()[1], v.dims()[2]};
  h["spacing_mm"] = {v.spacing().x(), v.spacing().y(), v.spacing().z()};
  h["origin_mm"] = {v.origin().x(), v.origin().y(), v.origin().z()};
  h["dtype"] = "f32";
  h["data"] = data_name;
  h["labels"] = labels_name;
  const std::string text = h.dump(2) + "\n";
  write_bytes(header_path, text.data(), text.size());
}

MaterialTable load_material_table(const fs::path& path) {
  const json j = read_json(path);
  MaterialTable t;
  try {
    for (const auto& [key, m] : j.at("materials").items()) {
      Material mat;
      mat.name = m.value("name", std::string());
      mat.density_g_cm3 = m.at("density_g_cm3").get<double>();
      mat.mu_over_rho_cm2_g = m.at("mu_over_rho_cm2_g").get<double>();
      t.entries[std::stoi(key)] = mat;
    }
  } catch (const std::exception& e) {
    contract_error("malformed_metadata", path.string() + ": " + e.what());
  }
  t.validate();
  return t;
}

void write_material_table(const MaterialTable& t, const fs::path& path) {
  json j;
  j["materials"] = json::object();
  for (const auto& [id, m] : t.entries) {
    j["materials"][std::to_string(id)] = {{"name", m.name},
                                          {"density_g_cm3", m.density_g_cm3},
                                          {"mu_over_rho_cm2_g", m.mu_over_rho_cm2_g}};
  }
  const std::string text = j.dump(2) + "\n";
  write_bytes(path, text.data(), text.size());
}

namespace {

/// Half-sample symmetric reflection into [0, n).
int reflect(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

VoxelVolume gaussian_smooth(const VoxelVolume& v, double sigma_mm) {
  if (!(sigma_mm >= 0.0)) contract_error("invalid_sigma", "smoothing sigma must be >= 0");
  if (sigma_mm == 0.0) return v;

  const auto& dims = v.dims();
  std::vector<float> cur = v.values();
  std::vector<float> next(cur.size());
  for (int axis = 0; axis < 3; ++axis) {
    const double sigma_vox = sigma_mm / v.spacing()[axis];
    const int radius = static_cast<int>(std::ceil(3.0 * sigma_mm / v.spacing()[axis]));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int r = -radius; r <= radius; ++r) {
      kernel[r + radius] = std::exp(-0.5 * (r * r) / (sigma_vox * sigma_vox));
      sum += kernel[r + radius];
    }
    for (double& w : kernel) w /= sum;

    const int n = dims[axis];
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? dims[0] : static_cast<std::size_t>(dims[0]) * dims[1];
    for (int k = 0; k < dims[2]; ++k) {
      for (int j = 0; j < dims[1]; ++j) {
        for (int i = 0; i < dims[0]; ++i) {
          const int pos = axis == 0 ? i : axis == 1 ? j : k;
          const std::size_t base = v.index(i, j, k) - static_cast<std::size_t>(pos) * stride;
          double acc = 0.0;
          for (int r = -radius; r <= radius; ++r) {
            acc += kernel[r + radius] * cur[base + static_cast<std::size_t>(reflect(pos + r, n)) * stride];
          }
          next[v.index(i, j, k)] = static_cast<float>(acc);
        }
      }
    }
    std::swap(cur, next);
  }
  return VoxelVolume(dims, v.spacing(), v.origin(), std::move(cur), v.labels());
}

VoxelVolume resample_volume(const VoxelVolume& v, int factor, double sigma_mm) {
  if (factor < 1) contract_error("invalid_factor", "resampling factor must be >= 1");
  if (!(sigma_mm >= 0.0)) contract_error("invalid_sigma", "smoothing sigma must be >= 0");
  if (factor == 1) return gaussian_smooth(v, sigma_mm);

  const auto& in = v.dims();
  const std::array<int, 3> out{in[0] * factor, in[1] * factor, in[2] * factor};
  const Vec3 spacing = v.spacing() / factor;
  // Cells keep the same physical extent: the first output center sits half
  // an output cell inside the first input cell.
  const Vec3 origin = v.origin() - 0.5 * v.spacing() + 0.5 * spacing;

  // Per-axis lookup: lower input index and interpolation weight (clamped at edges).
  std::array<std::vector<int>, 3> lo;
  std::array<std::vector<double>, 3> frac;
  std::array<std::vector<int>, 3> nearest;
  for (int a = 0; a < 3; ++a) {
    lo[a].resize(out[a]);
    frac[a].resize(out[a]);
    nearest[a].resize(out[a]);
    for (int o = 0; o < out[a]; ++o) {
      double c = (o + 0.5) / factor - 0.5;
      c = std::clamp(c, 0.0, static_cast<double>(in[a] - 1));
      int l = static_cast<int>(std::floor(c));
      if (l >= in[a] - 1) l = std::max(0, in[a] - 2);
      lo[a][o] = l;
      frac[a][o] = in[a] == 1 ? 0.0 : c - l;
      nearest[a][o] = o / factor;
    }
  }

  std::vector<float> values(static_cast<std::size_t>(out[0]) * out[1] * out[2]);
  std::vector<std::uint8_t> labels(values.size());
  auto at = [&](int i, int j, int k) -> double {
    return v.value(std::min(i, in[0] - 1), std::min(j, in[1] - 1), std::min(k, in[2] - 1));
  };
  std::size_t idx = 0;
  for (int k = 0; k < out[2]; ++k) {
    const int k0 = lo[2][k];
    const double tz = frac[2][k];
    for (int j = 0; j < out[1]; ++j) {
      const int j0 = lo[1][j];
      const double ty = frac[1][j];
      for (int i = 0; i < out[0]; ++i, ++idx) {
        const int i0 = lo[0][i];
        const double tx = frac[0][i];
        const double c00 = at(i0, j0, k0) * (1 - tx) + at(i0 + 1, j0, k0) * tx;
        const double c10 = at(i0, j0 + 1, k0) * (1 - tx) + at(i0 + 1, j0 + 1, k0) * tx;
        const double c01 = at(i0, j0, k0 + 1) * (1 - tx) + at(i0 + 1, j0, k0 + 1) * tx;
        const double c11 = at(i0, j0 + 1, k0 + 1) * (1 - tx) + at(i0 + 1, j0 + 1, k0 + 1) * tx;
        const double c0 = c00 * (1 - ty) + c10 * ty;
        const double c1 = c01 * (1 - ty) + c11 * ty;
        values[idx] = static_cast<float>(c0 * (1 - tz) + c1 * tz);
        labels[idx] = v.label(nearest[0][i], nearest[1][j], nearest[2][k]);
      }
    }
  }
  VoxelVolume up(out, spacing, origin, std::move(values), std::move(labels));
  return gaussian_smooth(up, sigma_mm);
}

VoxelVolume apply_materials(const VoxelVolume& v, const MaterialTable& t) {
  t.validate();
  std::array<float, 256> lut{};
  std::array<bool, 256> known{};
  known[0] = true;
  for (const auto& [id, m] : t.entries) {
    if (id == 0) continue;
    lut[id] = static_cast<float>(m.attenuation_per_mm());
    known[id] = true;
  }
  std::vector<float> values(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::uint8_t l = v.labels()[i];
    if (!known[l]) contract_error("unknown_label", "label " + std::to_string(l) + " missing from material table");
    values[i] = lut[l];
  }
  return VoxelVolume(v.dims(), v.spacing(), v.origin(), std::move(values), v.labels());
}

}  // namespace spinesim
