#include "holab/tracegen.hpp"

#include "holab/error.hpp"
#include "holab/numfmt.hpp"
#include "holab/seeding.hpp"

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace holab::tracegen {

namespace {

double dbm_to_mw(double dbm)
{
    return std::pow(10.0, dbm / 10.0);
}

double mw_to_dbm(double mw)
{
    return 10.0 * std::log10(mw);
}

// Position at arc length s along the polyline; the UE turns around at the
// ends so any route length covers any duration.
Point position_along(const std::vector<Point>& waypoints, const std::vector<double>& cumulative, double s)
{
    const double total = cumulative.back();
    if (total <= 0.0)
        return waypoints.front();
    double u = std::fmod(s, 2.0 * total);
    if (u > total)
        u = 2.0 * total - u;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t seg = it == cumulative.begin() ? 0 : static_cast<std::size_t>(it - cumulative.begin()) - 1;
    seg = std::min(seg, waypoints.size() - 2);
    const double seg_len = cumulative[seg + 1] - cumulative[seg];
    const double frac = seg_len > 0.0 ? (u - cumulative[seg]) / seg_len : 0.0;
    const Point& a = waypoints[seg];
    const Point& b = waypoints[seg + 1];
    return {a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)};
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

} // namespace

double distance(Point a, Point b)
{
    return std::hypot(a.x - b.x, a.y - b.y);
}

bool BoundingBox::contains(Point p) const
{
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
}

void RadioMap::validate() const
{
    if (bs_positions.size() < 2)
        throw std::invalid_argument("radio map needs at least 2 base stations");
    if (tx_power_dbm.size() != bs_positions.size())
        throw std::invalid_argument("radio map: one tx power per base station required");
    for (double p : tx_power_dbm)
        if (!std::isfinite(p))
            throw std::invalid_argument("radio map: tx power must be finite");
    if (!(pathloss_exponent > 0.0))
        throw std::invalid_argument("radio map: pathloss exponent must be positive");
    if (!(shadow_corr_distance_m > 0.0))
        throw std::invalid_argument("radio map: shadow correlation distance must be positive");
    if (!(shadow_sigma_db >= 0.0))
        throw std::invalid_argument("radio map: shadow sigma must be non-negative");
    if (!std::isfinite(noise_floor_dbm) || !std::isfinite(reference_loss_db))
        throw std::invalid_argument("radio map: noise floor and reference loss must be finite");
    if (!(bounds.max_x > bounds.min_x && bounds.max_y > bounds.min_y))
        throw std::invalid_argument("radio map: empty bounding box");
}

RadioMap default_map()
{
    RadioMap map;
    constexpr double kRadius = 320.0;
    constexpr Point kCenter{500.0, 500.0};
    // Fixed perturbation so the layout is not perfectly symmetric.
    constexpr std::array<Point, 5> kJitter{{{23.0, -17.0}, {-31.0, 12.0}, {14.0, 29.0}, {-8.0, -34.0}, {27.0, 6.0}}};
    for (std::size_t k = 0; k < 5; ++k)
    {
        const double angle = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * static_cast<double>(k) / 5.0;
        map.bs_positions.push_back({kCenter.x + kRadius * std::cos(angle) + kJitter[k].x,
                                    kCenter.y + kRadius * std::sin(angle) + kJitter[k].y});
        map.tx_power_dbm.push_back(15.0);
    }
    map.reference_loss_db = 20.0;
    return map;
}

void RouteSpec::validate() const
{
    if (!(speed_kmh > 0.0))
        throw std::invalid_argument("route: speed must be positive");
    if (!(duration_s > 0.0))
        throw std::invalid_argument("route: duration must be positive");
    if (waypoints.size() < 2)
        throw std::invalid_argument("route: at least 2 waypoints required");
}

const char* to_string(Split split)
{
    return split == Split::Train ? "train" : "test";
}

Split parse_split(const std::string& text)
{
    if (text == "train")
        return Split::Train;
    if (text == "test")
        return Split::Test;
    throw ParseError("unknown split '" + text + "'");
}

SampleMatrix::SampleMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

std::vector<double> SampleMatrix::column(std::size_t c) const
{
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        out[r] = (*this)(r, c);
    return out;
}

void SampleMatrix::set_column(std::size_t c, std::span<const double> values)
{
    if (values.size() != rows_)
        throw std::invalid_argument("set_column: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r)
        (*this)(r, c) = values[r];
}

void RadioTrace::validate() const
{
    if (!(dt_s > 0.0))
        throw std::invalid_argument("trace " + id + ": dt must be positive");
    if (rsrp_dbm.rows() != sinr_db.rows() || rsrp_dbm.cols() != sinr_db.cols())
        throw std::invalid_argument("trace " + id + ": rsrp and sinr dimensions differ");
    for (double v : rsrp_dbm.data())
        if (!std::isfinite(v))
            throw std::invalid_argument("trace " + id + ": non-finite rsrp");
    for (double v : sinr_db.data())
        if (!std::isfinite(v))
            throw std::invalid_argument("trace " + id + ": non-finite sinr");
}

std::vector<double> compute_sinr(std::span<const double> rsrp_dbm, double noise_floor_dbm)
{
    std::vector<double> linear(rsrp_dbm.size());
    std::transform(rsrp_dbm.begin(), rsrp_dbm.end(), linear.begin(), dbm_to_mw);
    double total = 0.0;
    for (double p : linear)
        total += p;
    const double noise = dbm_to_mw(noise_floor_dbm);
    std::vector<double> sinr(rsrp_dbm.size());
    for (std::size_t b = 0; b < linear.size(); ++b)
    {
        // Sum the interferers directly; total - P_b cancels badly when P_b dominates.
        double interference = 0.0;
        for (std::size_t i = 0; i < linear.size(); ++i)
            if (i != b)
                interference += linear[i];
        sinr[b] = mw_to_dbm(linear[b] / (interference + noise));
    }
    return sinr;
}

RadioTrace generate_trace(const RadioMap& map, const RouteSpec& route, double dt_s)
{
    map.validate();
    route.validate();
    if (!(dt_s > 0.0))
        throw std::invalid_argument("generate_trace: dt must be positive");
    for (const Point& p : route.waypoints)
        if (!map.bounds.contains(p))
            throw std::invalid_argument("route leaves the map bounding box");

    std::vector<double> cumulative{0.0};
    for (std::size_t i = 1; i < route.waypoints.size(); ++i)
        cumulative.push_back(cumulative.back() + distance(route.waypoints[i - 1], route.waypoints[i]));

    const auto n = static_cast<std::size_t>(std::llround(route.duration_s / dt_s));
    const std::size_t n_bs = map.n_bs();
    const double speed_ms = route.speed_kmh / 3.6;
    const double step_m = speed_ms * dt_s;

    // Gudmundson model: exponential autocorrelation in travelled distance,
    // realised as an AR(1) process per base station.
    std::mt19937_64 rng(derive_seed(route.seed, kStreamShadowing));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double rho = std::exp(-step_m / map.shadow_corr_distance_m);
    const double innovation = std::sqrt(1.0 - rho * rho);
    std::vector<double> shadow(n_bs);
    for (double& s : shadow)
        s = map.shadow_sigma_db * normal(rng);

    RadioTrace trace;
    trace.dt_s = dt_s;
    trace.speed_kmh = route.speed_kmh;
    trace.rsrp_dbm = SampleMatrix(n, n_bs);
    trace.sinr_db = SampleMatrix(n, n_bs);
    for (std::size_t i = 0; i < n; ++i)
    {
        if (i > 0)
            for (double& s : shadow)
                s = rho * s + innovation * map.shadow_sigma_db * normal(rng);
        const Point ue = position_along(route.waypoints, cumulative, speed_ms * dt_s * static_cast<double>(i));
        auto rsrp = trace.rsrp_dbm.row(i);
        for (std::size_t b = 0; b < n_bs; ++b)
        {
            const double d = std::max(1.0, distance(ue, map.bs_positions[b]));
            const double pathloss = map.reference_loss_db + 10.0 * map.pathloss_exponent * std::log10(d);
            rsrp[b] = map.tx_power_dbm[b] - pathloss - shadow[b];
        }
        const auto sinr = compute_sinr(rsrp, map.noise_floor_dbm);
        std::copy(sinr.begin(), sinr.end(), trace.sinr_db.row(i).begin());
    }
    return trace;
}

std::vector<double> fourier_resample(std::span<const double> signal, std::size_t factor)
{
    if (factor == 0)
        throw std::invalid_argument("fourier_resample: factor must be at least 1");
    if (signal.size() < 2)
        throw std::invalid_argument("fourier_resample: need at least 2 samples");
    if (factor == 1)
        return {signal.begin(), signal.end()};

    const std::size_t n_in = signal.size();
    const std::size_t n_out = n_in * factor;

    Eigen::FFT<double> fft;
    std::vector<double> input(signal.begin(), signal.end());
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, input);

    std::vector<std::complex<double>> padded(n_out, {0.0, 0.0});
    const std::size_t half = n_in / 2;
    if (n_in % 2 == 1)
    {
        for (std::size_t k = 0; k <= half; ++k)
            padded[k] = spectrum[k];
        for (std::size_t k = 1; k <= half; ++k)
            padded[n_out - k] = spectrum[n_in - k];
    }
    else
    {
        for (std::size_t k = 0; k < half; ++k)
            padded[k] = spectrum[k];
        for (std::size_t k = 1; k < half; ++k)
            padded[n_out - k] = spectrum[n_in - k];
        // The Nyquist bin is shared between the positive and negative halves.
        padded[half] = 0.5 * spectrum[half];
        padded[n_out - half] = 0.5 * spectrum[half];
    }

    std::vector<std::complex<double>> dense;
    fft.inv(dense, padded);
    std::vector<double> out(n_out);
    const double scale = static_cast<double>(factor);
    for (std::size_t i = 0; i < n_out; ++i)
        out[i] = dense[i].real() * scale;
    return out;
}

std::vector<double> moving_average(std::span<const double> signal, std::size_t window_samples)
{
    if (window_samples == 0)
        throw std::invalid_argument("moving_average: window must be at least 1");
    const std::size_t n = signal.size();
    if (n == 0 || window_samples == 1)
        return {signal.begin(), signal.end()};

    std::vector<long double> prefix_sum(n + 1, 0.0L);
    for (std::size_t i = 0; i < n; ++i)
        prefix_sum[i + 1] = prefix_sum[i] + signal[i];
    const auto [lo_it, hi_it] = std::minmax_element(signal.begin(), signal.end());
    const double lo_bound = *lo_it;
    const double hi_bound = *hi_it;

    const auto back = static_cast<std::ptrdiff_t>(window_samples / 2);
    const auto width = static_cast<std::ptrdiff_t>(window_samples);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        const std::ptrdiff_t first = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - back);
        const std::ptrdiff_t last = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1,
                                                             static_cast<std::ptrdiff_t>(i) - back + width - 1);
        const long double sum = prefix_sum[static_cast<std::size_t>(last) + 1] - prefix_sum[static_cast<std::size_t>(first)];
        const double mean = static_cast<double>(sum / static_cast<long double>(last - first + 1));
        out[i] = std::clamp(mean, lo_bound, hi_bound);
    }
    return out;
}

RadioTrace resample_trace(const RadioTrace& raw, std::size_t factor, double window_s)
{
    RadioTrace out;
    out.id = raw.id;
    out.speed_kmh = raw.speed_kmh;
    out.split = raw.split;
    out.dt_s = raw.dt_s / static_cast<double>(factor);
    const auto window = static_cast<std::size_t>(std::max<long long>(1, std::llround(window_s / out.dt_s)));
    const std::size_t n = raw.n_samples() * factor;
    out.rsrp_dbm = SampleMatrix(n, raw.n_bs());
    out.sinr_db = SampleMatrix(n, raw.n_bs());
    for (std::size_t b = 0; b < raw.n_bs(); ++b)
    {
        out.rsrp_dbm.set_column(b, moving_average(fourier_resample(raw.rsrp_dbm.column(b), factor), window));
        out.sinr_db.set_column(b, moving_average(fourier_resample(raw.sinr_db.column(b), factor), window));
    }
    return out;
}

std::vector<RadioTrace> build_dataset(const RadioMap& map, const std::vector<RouteSpec>& routes,
                                      const DatasetOptions& options)
{
    if (routes.empty())
        throw std::invalid_argument("build_dataset: at least one route required");
    std::vector<RadioTrace> out;
    out.reserve(routes.size());
    for (std::size_t i = 0; i < routes.size(); ++i)
    {
        RadioTrace raw = generate_trace(map, routes[i], options.raw_dt_s);
        raw.id = trace_id(i, routes[i].speed_kmh);
        raw.split = i < options.n_train ? Split::Train : Split::Test;
        out.push_back(resample_trace(raw, options.upsample_factor, options.smoothing_window_s));
    }
    return out;
}

RadioTrace prefix(const RadioTrace& trace, double seconds)
{
    const auto wanted = static_cast<std::size_t>(std::max<long long>(0, std::llround(seconds / trace.dt_s)));
    const std::size_t n = std::min(wanted, trace.n_samples());
    RadioTrace out = trace;
    out.rsrp_dbm = SampleMatrix(n, trace.n_bs());
    out.sinr_db = SampleMatrix(n, trace.n_bs());
    for (std::size_t i = 0; i < n; ++i)
    {
        std::copy_n(trace.rsrp_dbm.row(i).begin(), trace.n_bs(), out.rsrp_dbm.row(i).begin());
        std::copy_n(trace.sinr_db.row(i).begin(), trace.n_bs(), out.sinr_db.row(i).begin());
    }
    return out;
}

RadioTrace permute_columns(const RadioTrace& trace, std::span<const std::size_t> mapping)
{
    if (mapping.size() != trace.n_bs())
        throw std::invalid_argument("permute_columns: mapping size mismatch");
    RadioTrace out = trace;
    for (std::size_t i = 0; i < trace.n_samples(); ++i)
        for (std::size_t j = 0; j < mapping.size(); ++j)
        {
            out.rsrp_dbm(i, j) = trace.rsrp_dbm(i, mapping[j]);
            out.sinr_db(i, j) = trace.sinr_db(i, mapping[j]);
        }
    return out;
}

std::vector<Point> random_grid_route(const BoundingBox& bounds, double block_m, double min_length_m,
                                     std::uint64_t seed)
{
    if (!(block_m > 0.0))
        throw std::invalid_argument("random_grid_route: block size must be positive");
    const auto nx = static_cast<int>(std::floor((bounds.max_x - bounds.min_x) / block_m));
    const auto ny = static_cast<int>(std::floor((bounds.max_y - bounds.min_y) / block_m));
    if (nx < 2 || ny < 2)
        throw std::invalid_argument("random_grid_route: map too small for the street grid");

    std::mt19937_64 rng(seed);
    // Streets run on interior grid lines only.
    std::uniform_int_distribution<int> pick_x(1, nx - 1);
    std::uniform_int_distribution<int> pick_y(1, ny - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    int gx = pick_x(rng);
    int gy = pick_y(rng);
    constexpr std::array<std::array<int, 2>, 4> kDirs{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
    int dir = std::uniform_int_distribution<int>(0, 3)(rng);

    auto inside = [&](int x, int y) { return x >= 1 && x <= nx - 1 && y >= 1 && y <= ny - 1; };
    auto to_point = [&](int x, int y) {
        return Point{bounds.min_x + block_m * x, bounds.min_y + block_m * y};
    };

    std::vector<Point> waypoints{to_point(gx, gy)};
    double length = 0.0;
    while (length < min_length_m)
    {
        // Prefer going straight, then turning; U-turns only at dead ends.
        const double u = unit(rng);
        std::array<int, 3> order = u < 0.5 ? std::array<int, 3>{0, 1, 3}
                                   : u < 0.75 ? std::array<int, 3>{1, 3, 0}
                                              : std::array<int, 3>{3, 1, 0};
        int next = (dir + 2) % 4;
        for (int turn : order)
        {
            const int cand = (dir + turn) % 4;
            if (inside(gx + kDirs[cand][0], gy + kDirs[cand][1]))
            {
                next = cand;
                break;
            }
        }
        dir = next;
        gx += kDirs[dir][0];
        gy += kDirs[dir][1];
        waypoints.push_back(to_point(gx, gy));
        length += block_m;
    }
    return waypoints;
}

std::vector<RouteSpec> make_routes(const RadioMap& map, double speed_kmh, std::uint64_t seed,
                                   const RouteSetOptions& options)
{
    std::vector<RouteSpec> routes;
    const double needed_m = options.max_speed_kmh / 3.6 * options.duration_s;
    for (std::size_t r = 0; r < options.n_routes; ++r)
    {
        const std::uint64_t route_seed = derive_seed(derive_seed(seed, kStreamRoutes), r);
        RouteSpec spec;
        spec.waypoints = random_grid_route(map.bounds, options.block_m, needed_m, route_seed);
        spec.speed_kmh = speed_kmh;
        spec.duration_s = options.duration_s;
        spec.seed = route_seed;
        routes.push_back(std::move(spec));
    }
    return routes;
}

std::string trace_id(std::size_t route_index, double speed_kmh)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "route_%02zu_", route_index);
    return std::string(buf) + format_double(speed_kmh) + "kmh";
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path)
{
    auto p = csv_path;
    p.replace_extension(".json");
    return p;
}

void write_trace(const std::filesystem::path& csv_path, const RadioTrace& trace)
{
    trace.validate();
    std::ofstream csv(csv_path);
    if (!csv)
        throw std::runtime_error("cannot write " + csv_path.string());
    const std::size_t n_bs = trace.n_bs();
    csv << "t";
    for (std::size_t b = 0; b < n_bs; ++b)
        csv << ",rsrp_" << b;
    for (std::size_t b = 0; b < n_bs; ++b)
        csv << ",sinr_" << b;
    csv << '\n';
    for (std::size_t i = 0; i < trace.n_samples(); ++i)
    {
        csv << format_double(static_cast<double>(i) * trace.dt_s);
        for (double v : trace.rsrp_dbm.row(i))
            csv << ',' << format_double(v);
        for (double v : trace.sinr_db.row(i))
            csv << ',' << format_double(v);
        csv << '\n';
    }
    if (!csv)
        throw std::runtime_error("write failed for " + csv_path.string());

    nlohmann::json meta = {{"id", trace.id},
                           {"dt", trace.dt_s},
                           {"speed_kmh", trace.speed_kmh},
                           {"n_bs", n_bs},
                           {"split", to_string(trace.split)}};
    std::ofstream side(sidecar_path(csv_path));
    if (!side)
        throw std::runtime_error("cannot write " + sidecar_path(csv_path).string());
    side << meta.dump(2) << '\n';
}

RadioTrace read_trace(const std::filesystem::path& csv_path)
{
    const auto meta_path = sidecar_path(csv_path);
    std::ifstream side(meta_path);
    if (!side)
        throw std::runtime_error("cannot open " + meta_path.string());
    RadioTrace trace;
    std::size_t n_bs = 0;
    try
    {
        const auto meta = nlohmann::json::parse(side);
        trace.id = meta.at("id").get<std::string>();
        trace.dt_s = meta.at("dt").get<double>();
        trace.speed_kmh = meta.at("speed_kmh").get<double>();
        n_bs = meta.at("n_bs").get<std::size_t>();
        trace.split = parse_split(meta.at("split").get<std::string>());
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ParseError(meta_path.string() + ": " + e.what());
    }

    std::ifstream csv(csv_path);
    if (!csv)
        throw std::runtime_error("cannot open " + csv_path.string());
    const std::string where = csv_path.string() + ":";
    std::string line;
    if (!std::getline(csv, line))
        throw ParseError(where + "1: missing header");
    const auto header = split_csv(line);
    if (header.size() != 1 + 2 * n_bs)
        throw ParseError(where + "1: column count mismatch (expected " + std::to_string(1 + 2 * n_bs) + ", got " +
                         std::to_string(header.size()) + ")");
    std::vector<std::string> expected{"t"};
    for (std::size_t b = 0; b < n_bs; ++b)
        expected.push_back("rsrp_" + std::to_string(b));
    for (std::size_t b = 0; b < n_bs; ++b)
        expected.push_back("sinr_" + std::to_string(b));
    for (std::size_t c = 0; c < header.size(); ++c)
    {
        std::string name = header[c];
        if (!name.empty() && name.back() == '\r')
            name.pop_back();
        if (name != expected[c])
            throw ParseError(where + "1: malformed header, expected '" + expected[c] + "' got '" + name + "'");
    }

    std::vector<double> rsrp;
    std::vector<double> sinr;
    std::size_t line_no = 1;
    std::size_t row = 0;
    while (std::getline(csv, line))
    {
        ++line_no;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw ParseError(where + std::to_string(line_no) + ": column count mismatch");
        std::vector<double> values(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
        {
            const auto v = parse_double(cells[c]);
            if (!v || !std::isfinite(*v))
                throw ParseError(where + std::to_string(line_no) + ": non-numeric cell '" + cells[c] + "'");
            values[c] = *v;
        }
        const double expected_t = static_cast<double>(row) * trace.dt_s;
        if (std::abs(values[0] - expected_t) > 1e-9 * std::max(1.0, std::abs(expected_t)))
            throw ParseError(where + std::to_string(line_no) + ": dt mismatch between time column and metadata");
        rsrp.insert(rsrp.end(), values.begin() + 1, values.begin() + 1 + static_cast<std::ptrdiff_t>(n_bs));
        sinr.insert(sinr.end(), values.begin() + 1 + static_cast<std::ptrdiff_t>(n_bs), values.end());
        ++row;
    }
    trace.rsrp_dbm = SampleMatrix(row, n_bs);
    trace.sinr_db = SampleMatrix(row, n_bs);
    for (std::size_t i = 0; i < row; ++i)
        for (std::size_t b = 0; b < n_bs; ++b)
        {
            trace.rsrp_dbm(i, b) = rsrp[i * n_bs + b];
            trace.sinr_db(i, b) = sinr[i * n_bs + b];
        }
    return trace;
}

} // namespace holab::tracegen
