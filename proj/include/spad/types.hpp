// Core value types shared across the toolkit: sensor geometry, transient
// containers, waveform model, scene description, and echo records.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace spad {

// ---------------------------------------------------------------------------
// Error classes
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric-model violation (e.g. detection probability outside [0,1]).
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Lookup-table build left the invertible regime.
struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateGsfError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File parse/serialize failure with the byte offset where it was detected.
struct FormatError : std::runtime_error {
  FormatError(std::string path_, std::uint64_t offset_, const std::string& msg)
      : std::runtime_error(path_ + " @ byte " + std::to_string(offset_) + ": " + msg),
        path(std::move(path_)),
        offset(offset_) {}
  std::string path;
  std::uint64_t offset;
};

// ---------------------------------------------------------------------------
// Dense containers
// ---------------------------------------------------------------------------

template <typename T>
class Grid2 {
 public:
  Grid2() = default;
  Grid2(int rows, int cols, T init = T{})
      : rows_(rows), cols_(cols), v_(static_cast<std::size_t>(rows) * cols, init) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return v_.empty(); }
  std::size_t size() const { return v_.size(); }

  T& operator()(int r, int c) { return v_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const {
    return v_[static_cast<std::size_t>(r) * cols_ + c];
  }
  T& operator[](std::size_t i) { return v_[i]; }
  const T& operator[](std::size_t i) const { return v_[i]; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }

  void fill(T x) { std::fill(v_.begin(), v_.end(), x); }

  bool operator==(const Grid2& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> v_;
};

// rows x cols x bins volume, per-pixel time vector contiguous.
template <typename T>
class Cube {
 public:
  Cube() = default;
  Cube(int rows, int cols, int bins, T init = T{})
      : rows_(rows),
        cols_(cols),
        bins_(bins),
        v_(static_cast<std::size_t>(rows) * cols * bins, init) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int bins() const { return bins_; }
  std::size_t size() const { return v_.size(); }

  T* pixel(int r, int c) {
    return v_.data() + (static_cast<std::size_t>(r) * cols_ + c) * bins_;
  }
  const T* pixel(int r, int c) const {
    return v_.data() + (static_cast<std::size_t>(r) * cols_ + c) * bins_;
  }
  T& at(int r, int c, int t) { return pixel(r, c)[t]; }
  const T& at(int r, int c, int t) const { return pixel(r, c)[t]; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }

  bool operator==(const Cube& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && bins_ == o.bins_ && v_ == o.v_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  int bins_ = 0;
  std::vector<T> v_;
};

// ---------------------------------------------------------------------------
// Sensor
// ---------------------------------------------------------------------------

struct SensorConfig {
  int rows = 192;
  int cols = 256;
  int bins = 672;
  double bin_width_s = 2e-10;
  int dead_time_bins = 48;
  int pulses_per_frame = 1000;
  std::uint32_t clip_limit = 4096;
  double range_per_bin_m = 0.03;

  void validate() const {
    if (rows < 1 || cols < 1 || bins < 1)
      throw ConfigError("sensor dimensions must be >= 1");
    if (pulses_per_frame < 1) throw ConfigError("pulses_per_frame must be >= 1");
    if (dead_time_bins < 0) throw ConfigError("dead_time_bins must be >= 0");
    if (clip_limit < 1) throw ConfigError("clip_limit must be >= 1");
    if (bin_width_s <= 0 || range_per_bin_m <= 0)
      throw ConfigError("bin width and range per bin must be positive");
  }
};

// ---------------------------------------------------------------------------
// Waveform
// ---------------------------------------------------------------------------

// Transmitted pulse shape sampled on the sensor's time grid. Entries are
// nonnegative and sum to 1; the first moment and support are cached.
class Waveform {
 public:
  Waveform() = default;

  static Waveform from_samples(std::vector<double> s);
  static Waveform gaussian(int bins, double sigma_bins);

  int bins() const { return static_cast<int>(shape_.size()); }
  const std::vector<double>& shape() const { return shape_; }
  double mean() const { return mean_; }
  int support_lo() const { return support_lo_; }
  int support_hi() const { return support_hi_; }  // inclusive
  double fwhm_bins() const { return fwhm_; }
  std::uint64_t id_hash() const { return id_hash_; }

 private:
  void finalize();

  std::vector<double> shape_;
  double mean_ = 0.0;
  int support_lo_ = 0;
  int support_hi_ = 0;
  double fwhm_ = 1.0;
  std::uint64_t id_hash_ = 0;
};

// ---------------------------------------------------------------------------
// Scene
// ---------------------------------------------------------------------------

// Half-open pixel rectangle painted with one depth and per-pulse intensity.
struct SceneRect {
  int r0 = 0, c0 = 0, r1 = 0, c1 = 0;
  double depth_bin = 0.0;
  double alpha = 0.0;
};

struct SceneSpec {
  int rows = 0;
  int cols = 0;
  Grid2<double> depth_bin;     // fractional bins
  Grid2<double> signal_alpha;  // photons/pulse
  Grid2<double> beta;          // photons/pulse summed over all bins
  std::vector<SceneRect> retro_regions;

  static SceneSpec flat(int rows, int cols, double depth, double alpha, double beta);
  void paint(const SceneRect& r, bool retro = false);
  void validate(const SensorConfig& cfg) const;
};

// ---------------------------------------------------------------------------
// Transients and histograms
// ---------------------------------------------------------------------------

// Expected photons/pulse per bin. Same container before and after glare.
struct IdealTransient {
  Cube<float> flux;
};

struct HistogramCube {
  Cube<std::uint32_t> counts;
  int pulses_per_frame = 0;

  bool operator==(const HistogramCube& o) const {
    return pulses_per_frame == o.pulses_per_frame && counts == o.counts;
  }
};

// ---------------------------------------------------------------------------
// Echoes
// ---------------------------------------------------------------------------

struct PixelCoord {
  int row = 0;
  int col = 0;
};

struct Echo {
  PixelCoord pixel;
  int peak_bin = 0;
  double counts = 0.0;      // photons in the fitting window, per frame
  double mean_tof = 0.0;    // bins
  double var_tof = 0.0;     // bins^2
  double background = 0.0;  // photons per bin per frame
  bool degenerate = false;
};

// Per-pixel echo lists stored flat; echoes of pixel i live in
// [offsets[i], offsets[i+1]), sorted by descending filtered peak height.
struct EchoSet {
  int rows = 0;
  int cols = 0;
  std::vector<Echo> echoes;
  std::vector<std::uint32_t> offsets;  // rows*cols + 1 entries

  std::size_t pixel_index(int r, int c) const {
    return static_cast<std::size_t>(r) * cols + c;
  }
  std::uint32_t begin(int r, int c) const { return offsets[pixel_index(r, c)]; }
  std::uint32_t end(int r, int c) const { return offsets[pixel_index(r, c) + 1]; }
};

struct CorrectedEcho {
  Echo base;
  double alpha_hat = 0.0;       // photons/pulse
  double mean_corrected = 0.0;  // bins
  double total_energy = 0.0;    // alpha_hat * pulses_per_frame
  double gamma_prime = 0.0;     // expected detected counts/pulse
  bool pileup_applied = false;
  bool saturated = false;
  bool mean_clamped = false;
};

struct CorrectedEchoSet {
  int rows = 0;
  int cols = 0;
  std::vector<CorrectedEcho> echoes;
  std::vector<std::uint32_t> offsets;

  std::size_t pixel_index(int r, int c) const {
    return static_cast<std::size_t>(r) * cols + c;
  }
  std::uint32_t begin(int r, int c) const { return offsets[pixel_index(r, c)]; }
  std::uint32_t end(int r, int c) const { return offsets[pixel_index(r, c) + 1]; }
};

// ---------------------------------------------------------------------------
// Depth / confidence outputs
// ---------------------------------------------------------------------------

enum class DepthSource : std::uint8_t {
  no_return = 0,
  clean = 1,
  deglared = 2,
  fallback = 3,
};

inline const char* to_string(DepthSource s) {
  switch (s) {
    case DepthSource::no_return: return "no-return";
    case DepthSource::clean: return "clean";
    case DepthSource::deglared: return "deglared";
    case DepthSource::fallback: return "fallback";
  }
  return "?";
}

inline float depth_no_return() { return std::numeric_limits<float>::quiet_NaN(); }

struct DepthMap {
  Grid2<float> depth_m;         // quiet NaN where no return
  Grid2<std::uint8_t> source;   // DepthSource values
};

struct ConfidenceMap {
  Grid2<float> c;               // winning echo confidence, NaN where no return
  Grid2<std::int8_t> chosen;    // winning echo index, -1 where none
};

}  // namespace spad
