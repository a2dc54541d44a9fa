#include "agw/raster.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "agw/error.hpp"
#include "agw/random.hpp"

namespace agw {

std::string_view to_string(VariableKind kind) {
  switch (kind) {
    case VariableKind::Rainfall: return "rainfall_mm_per_day";
    case VariableKind::TempMean: return "temp_mean_c";
    case VariableKind::TempMax: return "temp_max_c";
  }
  return "unknown";
}

bool operator==(const RasterStack& a, const RasterStack& b) {
  if (a.variable_kind != b.variable_kind || a.product_id != b.product_id ||
      a.origin_lon != b.origin_lon || a.origin_lat != b.origin_lat ||
      a.cell_size_lon != b.cell_size_lon || a.cell_size_lat != b.cell_size_lat ||
      a.n_rows != b.n_rows || a.n_cols != b.n_cols || a.start_date != b.start_date ||
      a.n_days != b.n_days || a.values.size() != b.values.size())
    return false;
  // bitwise so that NaN sentinels compare equal
  return std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0;
}

void validate(const RasterStack& stack) {
  if (stack.n_rows == 0 || stack.n_cols == 0 || stack.n_days == 0)
    throw Error(ErrorCode::InvalidHeader, "dimensions must be positive");
  if (!(stack.cell_size_lon > 0.0) || !(stack.cell_size_lat > 0.0))
    throw Error(ErrorCode::InvalidHeader, "cell sizes must be positive");
  if (stack.product_id.size() > 255)
    throw Error(ErrorCode::InvalidHeader, "product id longer than 255 bytes");
  if (stack.values.size() != std::size_t{stack.n_days} * stack.cells_per_day())
    throw Error(ErrorCode::InvalidHeader, "values length does not match dimensions");
  if (stack.variable_kind == VariableKind::Rainfall) {
    for (float v : stack.values)
      if (v < 0.0f) throw Error(ErrorCode::InvalidHeader, "negative rainfall value");
  }
}

RasterStack shorten_to_blinding_start(const RasterStack& stack) {
  if (stack.start_date >= blinding_start()) return stack;
  const auto skip = static_cast<std::size_t>((blinding_start() - stack.start_date).count());
  if (skip >= stack.n_days)
    throw Error(ErrorCode::DateOutOfRange, "record ends before " + format_date(blinding_start()));
  RasterStack out = stack;
  out.start_date = blinding_start();
  out.n_days = static_cast<std::uint32_t>(stack.n_days - skip);
  out.values.assign(stack.values.begin() + static_cast<std::ptrdiff_t>(skip * stack.cells_per_day()),
                    stack.values.end());
  return out;
}

CellIndex cell_of(const RasterStack& stack, const GeoPoint& point) {
  if (!stack.contains(point))
    throw Error(ErrorCode::OutOfDomain, "point (" + std::to_string(point.lon) + ", " +
                                            std::to_string(point.lat) + ") outside grid");
  const double fx = (point.lon - stack.origin_lon) / stack.cell_size_lon;
  const double fy = (stack.origin_lat - point.lat) / stack.cell_size_lat;
  // the outer east/south edges belong to the last column/row
  const auto col = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(fx)), stack.n_cols - 1);
  const auto row = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(fy)), stack.n_rows - 1);
  return {static_cast<std::uint32_t>(std::max<std::int64_t>(row, 0)),
          static_cast<std::uint32_t>(std::max<std::int64_t>(col, 0))};
}

std::size_t day_index(const RasterStack& stack, Date date) {
  if (date < stack.start_date || date >= stack.end_date())
    throw Error(ErrorCode::DateOutOfRange, format_date(date) + " outside [" +
                                               format_date(stack.start_date) + ", " +
                                               format_date(stack.end_date()) + ")");
  return static_cast<std::size_t>((date - stack.start_date).count());
}

float value_at(const RasterStack& stack, Date date, std::uint32_t row, std::uint32_t col) {
  const std::size_t day = day_index(stack, date);
  if (row >= stack.n_rows || col >= stack.n_cols)
    throw Error(ErrorCode::IndexOutOfRange,
                "cell (" + std::to_string(row) + ", " + std::to_string(col) + ")");
  return stack.at(day, row, col);
}

// ---------------------------------------------------------------------------
// AGWX encoding

namespace {

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                       std::uint8_t>>>;
    auto bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }

  void put_bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& in) : in_(in) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                       std::uint8_t>>>;
    require(sizeof(T));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(U{in_[pos_ + i]} << (8 * i));
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string get_string(std::size_t n) {
    require(n);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void require(std::size_t n) const {
    if (pos_ + n > in_.size()) throw Error(ErrorCode::InvalidHeader, "header truncated");
  }

  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_agwx(const RasterStack& stack) {
  validate(stack);
  std::vector<std::uint8_t> out;
  out.reserve(64 + stack.product_id.size() + stack.values.size() * 4);
  ByteWriter w(out);
  w.put_bytes("AGWX");
  w.put(kAgwxVersion);
  w.put(static_cast<std::uint8_t>(stack.variable_kind));
  w.put(static_cast<std::uint8_t>(stack.product_id.size()));
  w.put_bytes(stack.product_id);
  w.put(stack.origin_lon);
  w.put(stack.origin_lat);
  w.put(stack.cell_size_lon);
  w.put(stack.cell_size_lat);
  w.put(stack.n_rows);
  w.put(stack.n_cols);
  w.put(days_since_epoch(stack.start_date));
  w.put(stack.n_days);
  for (float v : stack.values) w.put(v);
  return out;
}

RasterStack decode_agwx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "AGWX", 4) != 0)
    throw Error(ErrorCode::BadMagic, "not an AGWX file");
  ByteReader r(bytes);
  r.get_string(4);
  if (const auto version = r.get<std::uint16_t>(); version != kAgwxVersion)
    throw Error(ErrorCode::InvalidHeader, "unsupported version " + std::to_string(version));
  RasterStack s;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 2) throw Error(ErrorCode::InvalidHeader, "unknown variable kind " + std::to_string(kind));
  s.variable_kind = static_cast<VariableKind>(kind);
  s.product_id = r.get_string(r.get<std::uint8_t>());
  s.origin_lon = r.get<double>();
  s.origin_lat = r.get<double>();
  s.cell_size_lon = r.get<double>();
  s.cell_size_lat = r.get<double>();
  s.n_rows = r.get<std::uint32_t>();
  s.n_cols = r.get<std::uint32_t>();
  const auto start = r.get<std::int32_t>();
  s.n_days = r.get<std::uint32_t>();
  if (s.n_rows == 0 || s.n_cols == 0 || s.n_days == 0)
    throw Error(ErrorCode::InvalidHeader, "non-positive dimensions");
  if (!(s.cell_size_lon > 0.0) || !(s.cell_size_lat > 0.0))
    throw Error(ErrorCode::InvalidHeader, "non-positive cell size");
  s.start_date = date_from_days(start);
  if (!ymd(s.start_date).ok()) throw Error(ErrorCode::InvalidHeader, "invalid start date");
  const std::uint64_t count = std::uint64_t{s.n_days} * s.n_rows * s.n_cols;
  if (count * 4 > r.remaining())
    throw Error(ErrorCode::TruncatedPayload, "header declares " + std::to_string(count) +
                                                 " values but only " +
                                                 std::to_string(r.remaining() / 4) + " present");
  s.values.resize(count);
  for (auto& v : s.values) v = r.get<float>();
  return s;
}

RasterStack load_raster_stack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_agwx(bytes);
}

void save_raster_stack(const RasterStack& stack, const std::filesystem::path& path) {
  const auto bytes = encode_agwx(stack);
  auto tmp = path;
  tmp += ".tmp";
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename to " + path.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// synthesis

void validate(const SynthWeatherConfig& c) {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (!(c.east > c.west) || !(c.north > c.south)) bad("extent must have east > west and north > south");
  if (!(c.cell_size_lon > 0.0) || !(c.cell_size_lat > 0.0)) bad("cell size must be positive");
  if (c.end_date < c.start_date) bad("end_date before start_date");
  if (!(c.correlation_km > 0.0)) bad("correlation_km must be positive");
  if (!(c.gamma_shape > 0.0) || !(c.gamma_scale > 0.0)) bad("gamma parameters must be positive");
  if (c.wet_prob_mean < 0.0 || c.wet_prob_mean > 1.0) bad("wet_prob_mean must lie in [0,1]");
  if (c.wet_prob_amplitude < 0.0 || c.wet_prob_mean - c.wet_prob_amplitude < 0.0 ||
      c.wet_prob_mean + c.wet_prob_amplitude > 1.0)
    bad("seasonal wet-day probability must stay within [0,1]");
  if (c.temp_noise_sd_c < 0.0) bad("temp_noise_sd_c must be non-negative");
  if (c.product_id.size() > 255) bad("product id longer than 255 bytes");
}

namespace {

std::vector<double> gaussian_kernel(double sigma_cells) {
  if (sigma_cells < 0.25) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_cells));
  std::vector<double> k(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma_cells * sigma_cells));
    norm += k[i + radius] * k[i + radius];
  }
  // unit variance after filtering white noise
  for (auto& v : k) v /= std::sqrt(norm);
  return k;
}

/// Unit-variance Gaussian field with squared-exponential correlation,
/// produced by separable filtering of padded white noise.
class SmoothField {
 public:
  SmoothField(std::uint32_t rows, std::uint32_t cols, double sigma_x, double sigma_y)
      : rows_(rows), cols_(cols), kx_(gaussian_kernel(sigma_x)), ky_(gaussian_kernel(sigma_y)) {
    px_ = kx_.size() / 2;
    py_ = ky_.size() / 2;
    wide_ = cols_ + 2 * px_;
    tall_ = rows_ + 2 * py_;
    noise_.resize(wide_ * tall_);
    tmp_.resize(cols_ * tall_);
    out_.resize(std::size_t{rows_} * cols_);
  }

  template <typename Rng>
  const std::vector<double>& draw(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : noise_) v = normal(rng);
    for (std::size_t r = 0; r < tall_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) {
        double acc = 0.0;
        const double* src = &noise_[r * wide_ + c];
        for (std::size_t k = 0; k < kx_.size(); ++k) acc += kx_[k] * src[k];
        tmp_[r * cols_ + c] = acc;
      }
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < ky_.size(); ++k) acc += ky_[k] * tmp_[(r + k) * cols_ + c];
        out_[r * cols_ + c] = acc;
      }
    return out_;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> kx_, ky_;
  std::size_t px_ = 0, py_ = 0, wide_ = 0, tall_ = 0;
  std::vector<double> noise_, tmp_, out_;
};

int day_of_year(Date d) {
  const auto y = ymd(d).year();
  return static_cast<int>((d - Date{y / std::chrono::January / 1}).count()) + 1;
}

}  // namespace

RasterStack synth_weather(const SynthWeatherConfig& config) {
  validate(config);
  RasterStack s;
  s.variable_kind = config.variable_kind;
  s.product_id = config.product_id;
  s.origin_lon = config.west;
  s.origin_lat = config.north;
  s.cell_size_lon = config.cell_size_lon;
  s.cell_size_lat = config.cell_size_lat;
  s.n_cols = static_cast<std::uint32_t>(
      std::max<long long>(1, std::llround((config.east - config.west) / config.cell_size_lon)));
  s.n_rows = static_cast<std::uint32_t>(
      std::max<long long>(1, std::llround((config.north - config.south) / config.cell_size_lat)));
  s.start_date = config.start_date;
  s.n_days = static_cast<std::uint32_t>((config.end_date - config.start_date).count() + 1);
  s.values.resize(std::size_t{s.n_days} * s.cells_per_day());

  // kernel sd L/sqrt(2) gives correlation exp(-d^2 / (2 L^2)) after filtering
  const double mid_lat = 0.5 * (config.north + config.south);
  const double km_per_deg_lon = 111.32 * std::cos(deg2rad(mid_lat));
  const double km_per_deg_lat = 110.574;
  const double sigma_km = config.correlation_km / std::sqrt(2.0);
  const double sigma_x = sigma_km / (km_per_deg_lon * config.cell_size_lon);
  const double sigma_y = sigma_km / (km_per_deg_lat * config.cell_size_lat);

  SmoothField primary(s.n_rows, s.n_cols, sigma_x, sigma_y);
  SmoothField secondary(s.n_rows, s.n_cols, sigma_x, sigma_y);
  const bool rain = config.variable_kind == VariableKind::Rainfall;
  std::mt19937_64 rng(derive_seed(config.seed, rain ? "rain" : "temperature"));

  const boost::math::normal standard_normal;
  const double two_pi = 2.0 * std::numbers::pi;
  // Wilson-Hilferty cube-root normal approximation of gamma quantiles
  const double wh_a = 1.0 - 1.0 / (9.0 * config.gamma_shape);
  const double wh_b = std::sqrt(1.0 / (9.0 * config.gamma_shape));
  const double gamma_mean = config.gamma_shape * config.gamma_scale;

  const std::size_t cells = s.cells_per_day();
  for (std::uint32_t day = 0; day < s.n_days; ++day) {
    const Date date = s.start_date + std::chrono::days{day};
    const int doy = day_of_year(date);
    const auto& z1 = primary.draw(rng);
    const auto& z2 = secondary.draw(rng);
    float* out = &s.values[day * cells];
    if (rain) {
      const double p = std::clamp(
          config.wet_prob_mean +
              config.wet_prob_amplitude * std::cos(two_pi * (doy - config.wet_peak_doy) / 365.25),
          0.0, 1.0);
      const double threshold = p <= 0.0   ? std::numeric_limits<double>::infinity()
                               : p >= 1.0 ? -std::numeric_limits<double>::infinity()
                                          : boost::math::quantile(standard_normal, 1.0 - p);
      for (std::size_t i = 0; i < cells; ++i) {
        if (z1[i] <= threshold) {
          out[i] = 0.0f;
          continue;
        }
        const double root = std::max(0.0, wh_a + wh_b * z2[i]);
        out[i] = static_cast<float>(gamma_mean * root * root * root);
      }
    } else {
      const double base = config.temp_mean_c +
                          config.temp_amplitude_c * std::cos(two_pi * (doy - config.temp_peak_doy) / 365.25);
      for (std::size_t i = 0; i < cells; ++i) {
        double t = base + config.temp_noise_sd_c * z1[i];
        if (config.variable_kind == VariableKind::TempMax) t += config.tmax_offset_c + z2[i];
        out[i] = static_cast<float>(t);
      }
    }
  }
  return s;
}

}  // namespace agw
