#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace holab::tracegen {

struct Point
{
    double x = 0.0;
    double y = 0.0;
};

double distance(Point a, Point b);

struct BoundingBox
{
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 1000.0;
    double max_y = 1000.0;

    bool contains(Point p) const;
};

/// Base-station layout and propagation parameters of the synthetic radio model.
///
/// RSRP_b = tx_power_b - (reference_loss + 10 n log10(d / 1 m)) - shadow_b,
/// with d clamped to at least 1 m.
struct RadioMap
{
    std::vector<Point> bs_positions;
    std::vector<double> tx_power_dbm;
    double pathloss_exponent = 3.5;
    double reference_loss_db = 38.0;
    double shadow_sigma_db = 4.0;
    double shadow_corr_distance_m = 50.0;
    double noise_floor_dbm = -110.0;
    BoundingBox bounds;

    std::size_t n_bs() const { return bs_positions.size(); }
    void validate() const;
};

/// Five base stations on a perturbed pentagon over a 1 km x 1 km area.
RadioMap default_map();

struct RouteSpec
{
    std::vector<Point> waypoints;
    double speed_kmh = 50.0;
    double duration_s = 180.0;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Split
{
    Train,
    Test,
};

const char* to_string(Split split);
Split parse_split(const std::string& text);

/// Dense row-major sample matrix: one row per time step, one column per BS.
class SampleMatrix
{
  public:
    SampleMatrix() = default;
    SampleMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double> column(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> values);

    const std::vector<double>& data() const { return data_; }

    bool operator==(const SampleMatrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Per-BS RSRP (dBm) and SINR (dB) time series for one UE route.
struct RadioTrace
{
    std::string id;
    double dt_s = 0.12;
    double speed_kmh = 0.0;
    Split split = Split::Train;
    SampleMatrix rsrp_dbm;
    SampleMatrix sinr_db;

    std::size_t n_samples() const { return rsrp_dbm.rows(); }
    std::size_t n_bs() const { return rsrp_dbm.cols(); }
    double duration_s() const { return static_cast<double>(n_samples()) * dt_s; }
    void validate() const;

    bool operator==(const RadioTrace&) const = default;
};

inline constexpr double kRawSampleInterval = 0.12;

/// Samples the route every `dt_s` seconds. Throws std::invalid_argument when
/// the route leaves the map bounds.
RadioTrace generate_trace(const RadioMap& map, const RouteSpec& route, double dt_s = kRawSampleInterval);

/// SINR_b = P_b / (sum_{i != b} P_i + N), powers in linear mW, result in dB.
std::vector<double> compute_sinr(std::span<const double> rsrp_dbm, double noise_floor_dbm);

/// Band-limited (zero-padded spectrum) resampling to `factor` times the
/// sample rate. Output sample k * factor equals input sample k.
std::vector<double> fourier_resample(std::span<const double> signal, std::size_t factor);

/// Centered moving average; the window is truncated and renormalized at the
/// signal boundaries so the output keeps the input length.
std::vector<double> moving_average(std::span<const double> signal, std::size_t window_samples);

struct DatasetOptions
{
    std::size_t n_train = 10;
    std::size_t upsample_factor = 12;
    double smoothing_window_s = 2.0;
    double raw_dt_s = kRawSampleInterval;
};

/// Resample every column by `factor` and smooth with a `window_s` moving average.
RadioTrace resample_trace(const RadioTrace& raw, std::size_t factor, double window_s);

/// Generates, resamples and smooths one trace per route. The first
/// `n_train` routes are tagged train, the rest test.
std::vector<RadioTrace> build_dataset(const RadioMap& map, const std::vector<RouteSpec>& routes,
                                      const DatasetOptions& options = {});

/// Leading `seconds` of a trace (whole trace when shorter).
RadioTrace prefix(const RadioTrace& trace, double seconds);

/// Column j of the result is column `mapping[j]` of the input.
RadioTrace permute_columns(const RadioTrace& trace, std::span<const std::size_t> mapping);

/// Random street walk on a Manhattan grid with `block_m` spacing. Returns
/// waypoints whose polyline length is at least `min_length_m`.
std::vector<Point> random_grid_route(const BoundingBox& bounds, double block_m, double min_length_m,
                                     std::uint64_t seed);

struct RouteSetOptions
{
    std::size_t n_routes = 15;
    double duration_s = 180.0;
    double block_m = 100.0;
    double max_speed_kmh = 50.0;
};

/// Deterministic route set; the same `seed` yields the same street walks at
/// every speed so traces at different speeds cover the same streets.
std::vector<RouteSpec> make_routes(const RadioMap& map, double speed_kmh, std::uint64_t seed,
                                   const RouteSetOptions& options = {});

std::string trace_id(std::size_t route_index, double speed_kmh);

/// CSV with header `t,rsrp_0..,sinr_0..` plus a JSON sidecar
/// {id, dt, speed_kmh, n_bs, split} next to it.
void write_trace(const std::filesystem::path& csv_path, const RadioTrace& trace);
RadioTrace read_trace(const std::filesystem::path& csv_path);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

} // namespace holab::tracegen
