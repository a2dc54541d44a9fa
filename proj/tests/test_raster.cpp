#include <cmath>
#include <cstring>
#include <fstream>

#include "agw/raster.hpp"
#include "support.hpp"

using namespace agw;
using agw::test::make_stack;

namespace {

RasterStack random_stack(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> dim(1, 6);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  auto s = make_stack(dim(rng), dim(rng), dim(rng), [&](auto, auto, auto) { return u(rng); }, u(rng), u(rng) / 2.0,
                      0.05 + std::abs(u(rng)) / 50.0, make_date(1990, 1, 1) + std::chrono::days{dim(rng) * 100});
  s.variable_kind = VariableKind::TempMean;
  s.product_id = "p" + std::to_string(dim(rng));
  if (!s.values.empty()) s.values[0] = kMissing;
  return s;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("agwx round trip is the identity") {
  std::mt19937_64 rng(11);
  const auto dir = test::scratch_dir("raster_roundtrip");
  for (int i = 0; i < 50; ++i) {
    const auto s = random_stack(rng);
    const auto path = dir / ("s" + std::to_string(i) + ".agwx");
    save_raster_stack(s, path);
    const auto loaded = load_raster_stack(path);
    CHECK(loaded == s);
    CHECK(std::isnan(loaded.values[0]));

    // load then save reproduces the file byte for byte
    const auto again = dir / ("t" + std::to_string(i) + ".agwx");
    save_raster_stack(loaded, again);
    std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(a)), {}), bb((std::istreambuf_iterator<char>(b)), {});
    CHECK(ba == bb);
  }
  CHECK_FALSE(std::filesystem::exists(dir / "s0.agwx.tmp"));
}

TEST_CASE("agwx byte layout of a single-cell stack") {
  auto s = test::constant_stack(1, 1, 1, 5.0f);
  s.product_id = "test";
  const auto bytes = encode_agwx(s);
  // 4 magic + 2 version + 1 kind + 1 length + 4 id + 4*8 georef + 4 rows + 4 cols + 4 start + 4 days
  REQUIRE(bytes.size() == 60 + 4);
  CHECK(std::memcmp(bytes.data(), "AGWX", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 4);
  CHECK(std::memcmp(bytes.data() + 8, "test", 4) == 0);
  // 2000-01-01 is day 10957 since 1970
  std::int32_t start = 0;
  std::memcpy(&start, bytes.data() + 52, 4);
  CHECK(start == 10957);
  const std::uint8_t five[4] = {0x00, 0x00, 0xA0, 0x40};
  CHECK(std::memcmp(bytes.data() + 60, five, 4) == 0);
}

TEST_CASE("agwx decoding errors") {
  const auto good = encode_agwx(test::constant_stack(2, 2, 10, 1.0f));

  auto bad_magic = good;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  CHECK_ERROR(decode_agwx(bad_magic), ErrorCode::BadMagic);

  // header claims 10 days, payload holds 3
  auto truncated = good;
  truncated.resize(truncated.size() - 7 * 4 * 4);
  CHECK_ERROR(decode_agwx(truncated), ErrorCode::TruncatedPayload);

  auto zero_rows = good;
  std::memset(zero_rows.data() + 44, 0, 4);
  CHECK_ERROR(decode_agwx(zero_rows), ErrorCode::InvalidHeader);

  std::vector<std::uint8_t> short_header(good.begin(), good.begin() + 20);
  CHECK_ERROR(decode_agwx(short_header), ErrorCode::InvalidHeader);
}

TEST_CASE("saving into an unwritable location fails with IoFailure") {
  const auto dir = test::scratch_dir("raster_unwritable");
  const auto blocker = dir / "file";
  std::ofstream(blocker) << "x";
  CHECK_ERROR(save_raster_stack(test::constant_stack(1, 1, 1, 1.0f), blocker / "sub" / "s.agwx"), ErrorCode::IoFailure);
}

TEST_CASE("cell_of index arithmetic") {
  const auto s = test::constant_stack(4, 4, 1, 0.0f);  // origin (0, 10), 1 degree cells
  CHECK(cell_of(s, {0.25, 9.75}) == CellIndex{0, 0});
  CHECK(cell_of(s, {1.5, 9.5}) == CellIndex{0, 1});
  // interior boundary: the cell east/south of the line
  CHECK(cell_of(s, {1.0, 9.5}) == CellIndex{0, 1});
  CHECK(cell_of(s, {0.5, 9.0}) == CellIndex{1, 0});
  // outer east/south edge stays in the last cell
  CHECK(cell_of(s, {4.0, 6.0}) == CellIndex{3, 3});
  CHECK_ERROR(cell_of(s, {-5.0, 9.0}), ErrorCode::OutOfDomain);
  CHECK_ERROR(cell_of(s, {-1e-9, 9.0}), ErrorCode::OutOfDomain);
}

TEST_CASE("cell_of of every cell center returns that cell") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_stack(rng);
    for (std::uint32_t r = 0; r < s.n_rows; ++r)
      for (std::uint32_t c = 0; c < s.n_cols; ++c) CHECK(cell_of(s, {s.center_lon(c), s.center_lat(r)}) == CellIndex{r, c});
  }
}

TEST_CASE("value_at reads the day-major layout") {
  auto s = make_stack(2, 3, 4, [](auto d, auto r, auto c) { return 100.0 * d + 10.0 * r + c; });
  s.values[0] = 7.5f;
  CHECK(value_at(s, s.start_date, 0, 0) == 7.5f);
  // day 1 begins at payload offset n_rows * n_cols
  CHECK(s.offset(1, 0, 0) == 6);
  CHECK(value_at(s, s.start_date + std::chrono::days{1}, 0, 0) == s.values[6]);
  CHECK(value_at(s, s.start_date + std::chrono::days{3}, 1, 2) == 312.0f);
  CHECK_ERROR(value_at(s, s.end_date(), 0, 0), ErrorCode::DateOutOfRange);
  CHECK_ERROR(value_at(s, s.start_date - std::chrono::days{1}, 0, 0), ErrorCode::DateOutOfRange);
  CHECK_ERROR(value_at(s, s.start_date, 2, 0), ErrorCode::IndexOutOfRange);
}

TEST_CASE("shortening to the blinding start") {
  auto s = make_stack(1, 1, 10, [](auto d, auto, auto) { return d; }, 0, 10, 1, make_date(1982, 12, 27));
  const auto t = shorten_to_blinding_start(s);
  CHECK(t.start_date == make_date(1983, 1, 1));
  CHECK(t.n_days == 5);
  CHECK(t.values.front() == 5.0f);
}

TEST_CASE("synthetic weather") {
  SynthWeatherConfig c;
  c.west = 30.0, c.east = 32.5, c.south = 5.0, c.north = 5.5;
  c.cell_size_lon = c.cell_size_lat = 0.1;
  c.start_date = make_date(2001, 1, 1);
  c.end_date = make_date(2001, 12, 31);
  c.correlation_km = 50.0;
  c.seed = 99;

  const auto rain = synth_weather(c);
  CHECK(rain.n_cols == 25);
  CHECK(rain.n_rows == 5);
  CHECK(rain.n_days == 365);
  CHECK(synth_weather(c) == rain);
  for (float v : rain.values) REQUIRE(v >= 0.0f);
  c.seed = 100;
  CHECK_FALSE(synth_weather(c) == rain);

  SUBCASE("near cells correlate more than distant cells") {
    c.variable_kind = VariableKind::TempMean;
    const auto t = synth_weather(c);
    std::vector<double> a, near, far;
    for (std::uint32_t d = 0; d < t.n_days; ++d) {
      a.push_back(t.at(d, 2, 2));
      near.push_back(t.at(d, 2, 3));
      far.push_back(t.at(d, 2, 22));
    }
    CHECK(correlation(a, near) > correlation(a, far));

    std::vector<double> ra, rn, rf;
    for (std::uint32_t d = 0; d < rain.n_days; ++d) {
      ra.push_back(rain.at(d, 2, 2));
      rn.push_back(rain.at(d, 2, 3));
      rf.push_back(rain.at(d, 2, 22));
    }
    CHECK(correlation(ra, rn) > correlation(ra, rf));
  }

  SUBCASE("temperature pair is coherent") {
    c.variable_kind = VariableKind::TempMean;
    const auto mean = synth_weather(c);
    c.variable_kind = VariableKind::TempMax;
    const auto max = synth_weather(c);
    double diff = 0.0;
    for (std::size_t i = 0; i < mean.values.size(); ++i) diff += max.values[i] - mean.values[i];
    CHECK(diff / static_cast<double>(mean.values.size()) == doctest::Approx(c.tmax_offset_c).epsilon(0.05));
  }

  SUBCASE("invalid configs") {
    c.correlation_km = 0.0;
    CHECK_ERROR(synth_weather(c), ErrorCode::InvalidConfig);
    c.correlation_km = 50.0;
    c.wet_prob_mean = 1.5;
    CHECK_ERROR(synth_weather(c), ErrorCode::InvalidConfig);
  }
}
