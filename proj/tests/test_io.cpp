#include "spad/io.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace spad;
using namespace spad::io;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("spadglare_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("SPHC round trip, both dtypes") {
  TempDir tmp;
  std::mt19937_64 rng(1);

  SUBCASE("u16 payload") {
    HistogramCube cube;
    cube.pulses_per_frame = 500;
    cube.counts = Cube<std::uint32_t>(3, 4, 16, 0u);
    std::uniform_int_distribution<std::uint32_t> uni(0, 65535);
    for (std::size_t i = 0; i < cube.counts.size(); ++i) cube.counts.data()[i] = uni(rng);
    write_sphc(tmp.file("a.sphc"), cube);
    CHECK(read_sphc(tmp.file("a.sphc")) == cube);
  }
  SUBCASE("u32 payload") {
    HistogramCube cube;
    cube.pulses_per_frame = 100000;
    cube.counts = Cube<std::uint32_t>(2, 2, 8, 0u);
    cube.counts.at(0, 0, 0) = 70000;  // forces the wide dtype
    cube.counts.at(1, 1, 7) = 123456789;
    write_sphc(tmp.file("b.sphc"), cube);
    CHECK(read_sphc(tmp.file("b.sphc")) == cube);
  }
}

TEST_CASE("SPHC reader reports offsets on bad input") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("bad.sphc"), std::ios::binary);
    out << "SPHX";  // wrong magic
  }
  try {
    read_sphc(tmp.file("bad.sphc"));
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset == 0);
  }

  {
    std::ofstream out(tmp.file("trunc.sphc"), std::ios::binary);
    out << "SPHC";
    const std::uint32_t one = 1;
    out.write(reinterpret_cast<const char*>(&one), 4);
  }
  CHECK_THROWS_AS(read_sphc(tmp.file("trunc.sphc")), FormatError);
}

TEST_CASE("SPHC reader rejects trailing bytes") {
  TempDir tmp;
  HistogramCube cube;
  cube.pulses_per_frame = 10;
  cube.counts = Cube<std::uint32_t>(1, 1, 4, 7u);
  write_sphc(tmp.file("t.sphc"), cube);
  {
    std::ofstream out(tmp.file("t.sphc"), std::ios::binary | std::ios::app);
    out << 'x';
  }
  CHECK_THROWS_AS(read_sphc(tmp.file("t.sphc")), FormatError);
}

TEST_CASE("PLUT reader rejects non-increasing grids") {
  TempDir tmp;
  pileup::PileupLuts L;
  L.alpha_grid = {1.0, 1.0, 2.0};  // not strictly increasing
  L.beta_grid = {0.0, 1.0};
  L.window = 5;
  L.gamma.assign(6, 0.0);
  L.mu.assign(6, 0.0);
  L.var.assign(6, 0.0);
  write_plut(tmp.file("bad.plut"), L);
  CHECK_THROWS_AS(read_plut(tmp.file("bad.plut")), FormatError);
}

TEST_CASE("GSFA round trip") {
  TempDir tmp;
  gsf::GsfAtlas atlas;
  atlas.rows = 5;
  atlas.cols = 6;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  for (int k = 0; k < 3; ++k) {
    gsf::NormalizedGsf g;
    g.source = {1.0 + k, 2.0};
    g.outscatter = 0.1f * (k + 1);
    g.map = Grid2<double>(5, 6, 0.0);
    for (std::size_t i = 0; i < g.map.size(); ++i) g.map[i] = uni(rng);
    atlas.entries.push_back(g);
  }
  write_gsfa(tmp.file("a.gsfa"), atlas);
  gsf::GsfAtlas back = read_gsfa(tmp.file("a.gsfa"));
  REQUIRE(back.entries.size() == 3);
  CHECK(back.rows == 5);
  CHECK(back.cols == 6);
  for (int k = 0; k < 3; ++k) {
    CHECK(back.entries[k].source.row == atlas.entries[k].source.row);
    CHECK(back.entries[k].outscatter ==
          doctest::Approx(atlas.entries[k].outscatter));
    // Values survive the f32 encoding bit-exactly.
    for (std::size_t i = 0; i < back.entries[k].map.size(); ++i)
      CHECK(static_cast<float>(back.entries[k].map[i]) ==
            static_cast<float>(atlas.entries[k].map[i]));
  }
}

TEST_CASE("PLUT round trip is bit exact") {
  TempDir tmp;
  pileup::PileupLuts L;
  L.alpha_grid = pileup::log_spaced(1e-3, 50.0, 7);
  L.beta_grid = pileup::lin_spaced(0.0, 4.0, 3);
  L.window = 14;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(0.0, 2.0);
  const std::size_t n = 7 * 3;
  for (std::size_t i = 0; i < n; ++i) {
    L.gamma.push_back(uni(rng));
    L.mu.push_back(uni(rng));
    L.var.push_back(uni(rng));
  }
  write_plut(tmp.file("t.plut"), L);
  pileup::PileupLuts back = read_plut(tmp.file("t.plut"));
  CHECK(back.alpha_grid == L.alpha_grid);
  CHECK(back.beta_grid == L.beta_grid);
  CHECK(back.window == L.window);
  CHECK(back.gamma == L.gamma);
  CHECK(back.mu == L.mu);
  CHECK(back.var == L.var);
}

TEST_CASE("DPTH and CONF round trips preserve NaN no-return") {
  TempDir tmp;
  Grid2<float> map(3, 3, 1.5f);
  map(1, 1) = depth_no_return();
  write_depth(tmp.file("d.dpth"), map, false);
  Grid2<float> back = read_depth(tmp.file("d.dpth"), false);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (std::isnan(map[i]))
      CHECK(std::isnan(back[i]));
    else
      CHECK(back[i] == map[i]);
  }
  // Magic mismatch between the two layouts is caught.
  CHECK_THROWS_AS(read_depth(tmp.file("d.dpth"), true), FormatError);
  write_depth(tmp.file("c.conf"), map, true);
  CHECK_THROWS_AS(read_depth(tmp.file("c.conf"), false), FormatError);
}

TEST_CASE("echo CSV round trip") {
  TempDir tmp;
  std::vector<EchoRow> rows;
  EchoRow a;
  a.row = 1;
  a.col = 2;
  a.echo = 0;
  a.counts = 123.0;
  a.mean_bin = 45.678901234567891;
  a.var_bin2 = 2.25;
  a.background = 0.09514285714285714;
  a.alpha_hat = 17.25;
  a.mean_corr_bin = 46.5;
  a.glare_pred = 88.125;
  a.g_expected = 77.0;
  a.confidence = 1e6;
  a.source_tag = "deglared";
  rows.push_back(a);
  EchoRow b;
  b.row = 3;
  b.source_tag = "-";
  rows.push_back(b);

  write_echo_csv(tmp.file("e.csv"), rows);
  auto back = read_echo_csv(tmp.file("e.csv"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].mean_bin == a.mean_bin);
  CHECK(back[0].background == a.background);
  CHECK(back[0].source_tag == "deglared");
  CHECK(back[1].row == 3);
}

TEST_CASE("config parsing") {
  auto cm = ConfigMap::from_string(
      "# comment\n"
      "rows = 10\n"
      "decay_w = 0.01  # trailing comment\n"
      "name = hello\n"
      "flag = true\n",
      "<test>");
  CHECK(cm.take_long("rows", 0) == 10);
  CHECK(cm.take_double("decay_w", 0.0) == doctest::Approx(0.01));
  CHECK(cm.take_string("name", "") == "hello");
  CHECK(cm.take_bool("flag", false));
  CHECK_NOTHROW(cm.finish());

  auto bad = ConfigMap::from_string("rows = 10\nmystery = 3\n", "<test>");
  bad.take_long("rows", 0);
  CHECK_THROWS_AS(bad.finish(), ConfigError);

  CHECK_THROWS_AS(ConfigMap::from_string("rows 10\n", "<t>"), ConfigError);
  CHECK_THROWS_AS(ConfigMap::from_string("a = 1\na = 2\n", "<t>"), ConfigError);

  auto typo = ConfigMap::from_string("rows = ten\n", "<t>");
  CHECK_THROWS_AS(typo.take_long("rows", 0), ConfigError);
}

TEST_CASE("waveform text reader") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("wf.txt"));
    out << "# pulse\n0 1 4 6 4 1 0\n";
  }
  Waveform wf = read_waveform_text(tmp.file("wf.txt"), 32);
  CHECK(wf.bins() == 32);
  double sum = 0.0;
  for (double v : wf.shape()) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(wf.mean() == doctest::Approx(3.0));
}
