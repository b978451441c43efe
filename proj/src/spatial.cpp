#include "geochem/spatial.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>

#include "geochem/csv.hpp"
#include "geochem/error.hpp"

namespace geochem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double coord(const Point& p, int axis) { return axis == 0 ? p.x : p.y; }

inline double squared_distance(const Point& a, const Point& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

/// Bounded max-heap keyed by (squared distance, index).
class KnnCollector {
public:
    KnnCollector(std::size_t k, std::optional<std::size_t> exclude) : k_(k), exclude_(exclude) {}

    double bound() const { return heap_.size() < k_ ? kInf : heap_.top().first; }

    void offer(std::size_t idx, double d2) {
        if (exclude_ && *exclude_ == idx) return;
        const Entry e{d2, idx};
        if (heap_.size() < k_) {
            heap_.push(e);
        } else if (e < heap_.top()) {
            heap_.pop();
            heap_.push(e);
        }
    }

    std::vector<Neighbor> take() {
        std::vector<Neighbor> out(heap_.size());
        for (std::size_t i = out.size(); i-- > 0;) {
            out[i] = {heap_.top().second, std::sqrt(heap_.top().first)};
            heap_.pop();
        }
        return out;
    }

private:
    using Entry = std::pair<double, std::size_t>;
    std::size_t k_;
    std::optional<std::size_t> exclude_;
    std::priority_queue<Entry> heap_;
};

class RadiusCollector {
public:
    explicit RadiusCollector(double radius) : r2_(radius * radius) {}
    double bound() const { return r2_; }
    void offer(std::size_t idx, double d2) {
        if (d2 <= r2_) hits_.emplace_back(d2, idx);
    }
    std::vector<Neighbor> take() {
        std::sort(hits_.begin(), hits_.end());
        std::vector<Neighbor> out;
        out.reserve(hits_.size());
        for (const auto& [d2, idx] : hits_) out.push_back({idx, std::sqrt(d2)});
        return out;
    }

private:
    double r2_;
    std::vector<std::pair<double, std::size_t>> hits_;
};

}  // namespace

double planar_distance(const Point& a, const Point& b) { return std::sqrt(squared_distance(a, b)); }

SpatialIndex::SpatialIndex(std::vector<Point> points) : points_(std::move(points)) {
    if (points_.empty()) throw DataError("cannot build a spatial index over zero points");
    for (const auto& p : points_) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DataError("spatial index: non-finite coordinate");
    }
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    build(0, order_.size(), 0);
}

void SpatialIndex::build(std::size_t lo, std::size_t hi, int depth) {
    if (hi - lo <= 1) return;
    const int axis = depth % 2;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                         const double ca = coord(points_[a], axis);
                         const double cb = coord(points_[b], axis);
                         return ca < cb || (ca == cb && a < b);
                     });
    build(lo, mid, depth + 1);
    build(mid + 1, hi, depth + 1);
}

template <typename Visit>
void SpatialIndex::search(std::size_t lo, std::size_t hi, int depth, const Point& q, Visit& visit) const {
    if (lo >= hi) return;
    const std::size_t mid = lo + (hi - lo) / 2;
    const std::size_t idx = order_[mid];
    visit.offer(idx, squared_distance(points_[idx], q));
    if (hi - lo == 1) return;
    const int axis = depth % 2;
    const double diff = coord(q, axis) - coord(points_[idx], axis);
    const bool left_first = diff <= 0.0;
    if (left_first) search(lo, mid, depth + 1, q, visit);
    else search(mid + 1, hi, depth + 1, q, visit);
    // Inclusive test keeps equidistant candidates reachable for the index tie-break.
    if (diff * diff <= visit.bound()) {
        if (left_first) search(mid + 1, hi, depth + 1, q, visit);
        else search(lo, mid, depth + 1, q, visit);
    }
}

std::vector<Neighbor> SpatialIndex::knn(const Point& query, std::size_t k, std::optional<std::size_t> exclude) const {
    if (k == 0) throw ConfigError("knn: k must be at least 1");
    if (exclude && *exclude >= points_.size()) throw ConfigError("knn: excluded index out of range");
    KnnCollector collector(k, exclude);
    search(0, order_.size(), 0, query, collector);
    return collector.take();
}

Neighbor SpatialIndex::nearest(const Point& query, std::optional<std::size_t> exclude) const {
    auto hits = knn(query, 1, exclude);
    if (hits.empty()) throw DataError("nearest: no candidate points");
    return hits.front();
}

std::vector<Neighbor> SpatialIndex::within(const Point& query, double radius) const {
    RadiusCollector collector(radius);
    search(0, order_.size(), 0, query, collector);
    return collector.take();
}

SpatialIndex build_index(std::vector<Point> points) { return SpatialIndex(std::move(points)); }

std::vector<Neighbor> knn_query(const SpatialIndex& index, const Point& query, std::size_t k,
                                std::optional<std::size_t> exclude) {
    return index.knn(query, k, exclude);
}

double average_sampling_distance(const SpatialIndex& index) {
    if (index.size() < 2) throw DataError("average sampling distance needs at least two points");
    double total = 0.0;
    for (std::size_t i = 0; i < index.size(); ++i) total += index.nearest(index.point(i), i).distance;
    return total / static_cast<double>(index.size());
}

double idw_interpolate(const SpatialIndex& index, std::span<const double> values, const Point& query, double power,
                       std::size_t k_max) {
    if (!(power > 0.0)) throw ConfigError("IDW power must be positive");
    if (values.size() != index.size()) throw DataError("IDW: values are not aligned with the index");
    const auto hits = index.knn(query, std::max<std::size_t>(k_max, 1));
    if (hits.front().distance < 1e-12) return values[hits.front().index];
    double num = 0.0;
    double den = 0.0;
    for (const auto& h : hits) {
        const double w = std::pow(h.distance, -power);
        num += w * values[h.index];
        den += w;
    }
    return num / den;
}

const char* to_string(VariogramKind kind) {
    return kind == VariogramKind::Spherical ? "spherical" : "exponential";
}

VariogramKind variogram_kind_from_string(const std::string& name) {
    if (name == "spherical") return VariogramKind::Spherical;
    if (name == "exponential") return VariogramKind::Exponential;
    throw ConfigError("unknown variogram model '" + name + "'");
}

double VariogramModel::gamma(double lag) const {
    if (lag < 1e-12) return 0.0;
    const double partial = sill - nugget;
    const double h = lag / range;
    double shape;
    if (kind == VariogramKind::Spherical) {
        shape = h >= 1.0 ? 1.0 : 1.5 * h - 0.5 * h * h * h;
    } else {
        // Practical-range convention: 95% of the partial sill at lag = range.
        shape = 1.0 - std::exp(-3.0 * h);
    }
    return nugget + partial * shape;
}

void VariogramModel::validate() const {
    if (!(nugget >= 0.0) || !(sill > 0.0) || !(range > 0.0) || sill < nugget) {
        throw ConfigError("variogram: require nugget >= 0, sill > 0, sill >= nugget, range > 0");
    }
}

EmpiricalVariogram empirical_variogram(const SpatialIndex& index, std::span<const double> values, std::size_t n_lags,
                                       std::size_t max_points) {
    if (values.size() != index.size()) throw DataError("variogram: values are not aligned with the index");
    if (n_lags == 0) throw ConfigError("variogram: need at least one lag bin");
    std::vector<std::size_t> use;
    const std::size_t n = index.size();
    const std::size_t stride = n > max_points ? (n + max_points - 1) / max_points : 1;
    for (std::size_t i = 0; i < n; i += stride) use.push_back(i);

    double max_d2 = 0.0;
    for (std::size_t a = 0; a < use.size(); ++a) {
        for (std::size_t b = a + 1; b < use.size(); ++b) {
            max_d2 = std::max(max_d2, squared_distance(index.point(use[a]), index.point(use[b])));
        }
    }
    const double cutoff = 0.5 * std::sqrt(max_d2);
    EmpiricalVariogram ev;
    if (!(cutoff > 0.0)) return ev;
    const double width = cutoff / static_cast<double>(n_lags);
    std::vector<double> lag_sum(n_lags, 0.0), gamma_sum(n_lags, 0.0);
    std::vector<std::size_t> count(n_lags, 0);
    for (std::size_t a = 0; a < use.size(); ++a) {
        for (std::size_t b = a + 1; b < use.size(); ++b) {
            const double d = planar_distance(index.point(use[a]), index.point(use[b]));
            if (d > cutoff || d <= 0.0) continue;
            const std::size_t bin = std::min(n_lags - 1, static_cast<std::size_t>(d / width));
            const double diff = values[use[a]] - values[use[b]];
            lag_sum[bin] += d;
            gamma_sum[bin] += 0.5 * diff * diff;
            ++count[bin];
        }
    }
    for (std::size_t k = 0; k < n_lags; ++k) {
        if (count[k] == 0) continue;
        ev.lag.push_back(lag_sum[k] / static_cast<double>(count[k]));
        ev.semivariance.push_back(gamma_sum[k] / static_cast<double>(count[k]));
        ev.pairs.push_back(count[k]);
    }
    return ev;
}

namespace {

struct LinearFit {
    double nugget = 0.0;
    double partial = 0.0;
    double sse = kInf;
};

/// Non-negative least squares of gamma ~ nugget + partial * shape over the
/// bins, each bin weighted by its pair count.
LinearFit fit_linear(const std::vector<double>& shape, const std::vector<double>& target,
                     const std::vector<double>& weight) {
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const double w = weight[i];
        n += w;
        sx += w * shape[i];
        sy += w * target[i];
        sxx += w * shape[i] * shape[i];
        sxy += w * shape[i] * target[i];
    }
    auto sse_of = [&](double a, double b) {
        double s = 0.0;
        for (std::size_t i = 0; i < shape.size(); ++i) {
            const double r = a + b * shape[i] - target[i];
            s += weight[i] * r * r;
        }
        return s;
    };
    LinearFit best;
    const double det = n * sxx - sx * sx;
    if (std::abs(det) > 1e-14 * std::max(1.0, n * sxx)) {
        const double b = (n * sxy - sx * sy) / det;
        const double a = (sy - b * sx) / n;
        if (a >= 0.0 && b >= 0.0) return {a, b, sse_of(a, b)};
    }
    // Boundary candidates: nugget only, or partial sill only.
    const double a_only = std::max(0.0, sy / n);
    best = {a_only, 0.0, sse_of(a_only, 0.0)};
    if (sxx > 0.0) {
        const double b_only = std::max(0.0, sxy / sxx);
        const double s = sse_of(0.0, b_only);
        if (s < best.sse) best = {0.0, b_only, s};
    }
    return best;
}

}  // namespace

VariogramModel fit_variogram(const SpatialIndex& index, std::span<const double> values, VariogramKind kind,
                             std::size_t n_lags) {
    if (index.size() < 10) throw DataError("variogram fit needs at least 10 samples");
    const EmpiricalVariogram ev = empirical_variogram(index, values, n_lags);
    if (ev.lag.size() < 3) throw NumericError("variogram fit: fewer than 3 non-empty lag bins");

    VariogramModel model;
    model.kind = kind;
    const double max_gamma = *std::max_element(ev.semivariance.begin(), ev.semivariance.end());
    if (max_gamma <= 1e-18) {
        model.nugget = 0.0;
        model.sill = 1e-12;
        model.range = ev.lag.front();
        model.degenerate = true;
        return model;
    }

    const double range_lo = 0.5 * ev.lag.front();
    const double range_hi = 2.0 * ev.lag.back();
    const int steps = 200;
    VariogramModel probe = model;
    probe.nugget = 0.0;
    probe.sill = 1.0;

    // Pure-nugget reference: constant semivariance.
    const std::vector<double> weight(ev.pairs.begin(), ev.pairs.end());
    const LinearFit flat = fit_linear(std::vector<double>(ev.lag.size(), 1.0), ev.semivariance, weight);
    LinearFit best;
    double best_range = range_lo;
    for (int s = 0; s <= steps; ++s) {
        const double r = range_lo * std::pow(range_hi / range_lo, static_cast<double>(s) / steps);
        probe.range = r;
        std::vector<double> shape(ev.lag.size());
        for (std::size_t i = 0; i < shape.size(); ++i) shape[i] = probe.gamma(ev.lag[i]);
        const LinearFit f = fit_linear(shape, ev.semivariance, weight);
        if (f.sse < best.sse) {
            best = f;
            best_range = r;
        }
    }
    if (best.sse <= 0.5 * flat.sse && best.partial > 0.0) {
        model.nugget = best.nugget;
        model.sill = best.nugget + best.partial;
        model.range = best_range;
    } else {
        model.nugget = flat.nugget + flat.partial;
        model.sill = model.nugget;
        model.range = range_lo;
    }
    if (model.sill <= 0.0) {
        model.sill = 1e-12;
        model.degenerate = true;
    }
    return model;
}

KrigingEstimate kriging_interpolate(const SpatialIndex& index, std::span<const double> values,
                                    const VariogramModel& model, const Point& query, std::size_t k_max) {
    model.validate();
    if (values.size() != index.size()) throw DataError("kriging: values are not aligned with the index");
    KrigingEstimate out;
    out.neighbours = index.knn(query, std::max<std::size_t>(k_max, 1));
    const auto m = static_cast<Eigen::Index>(out.neighbours.size());

    Eigen::MatrixXd a(m + 1, m + 1);
    Eigen::VectorXd rhs(m + 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Point& pi = index.point(out.neighbours[static_cast<std::size_t>(i)].index);
        for (Eigen::Index j = 0; j < m; ++j) {
            const Point& pj = index.point(out.neighbours[static_cast<std::size_t>(j)].index);
            a(i, j) = model.gamma(planar_distance(pi, pj));
        }
        a(i, m) = 1.0;
        a(m, i) = 1.0;
        rhs(i) = model.gamma(out.neighbours[static_cast<std::size_t>(i)].distance);
    }
    a(m, m) = 0.0;
    rhs(m) = 1.0;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    lu.setThreshold(1e-12);
    Eigen::VectorXd sol;
    bool ok = lu.isInvertible();
    if (ok) {
        sol = lu.solve(rhs);
        ok = sol.allFinite() && (a * sol - rhs).norm() <= 1e-8 * std::max(1.0, rhs.norm());
    }
    if (!ok) {
        std::vector<double> vals(values.begin(), values.end());
        out.estimate = idw_interpolate(index, vals, query, 2.0, k_max);
        out.variance = -1.0;
        out.fallback = true;
        return out;
    }
    out.weights.resize(static_cast<std::size_t>(m));
    double estimate = 0.0;
    double variance = sol(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        out.weights[static_cast<std::size_t>(i)] = sol(i);
        estimate += sol(i) * values[out.neighbours[static_cast<std::size_t>(i)].index];
        variance += sol(i) * rhs(i);
    }
    out.estimate = estimate;
    out.variance = std::max(0.0, variance);
    return out;
}

void GridSpec::validate() const {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ConfigError("grid cell size must be positive");
    if (nx < 1 || ny < 1) throw ConfigError("grid needs at least one cell in each direction");
    if (!std::isfinite(origin.x) || !std::isfinite(origin.y)) throw ConfigError("grid origin must be finite");
}

Point GridSpec::cell_center(std::size_t row, std::size_t col) const {
    return {origin.x + (static_cast<double>(col) + 0.5) * cell_size,
            origin.y + (static_cast<double>(ny - row) - 0.5) * cell_size};
}

GridSpec grid_covering(std::span<const Point> points, double cell_size) {
    if (points.empty()) throw DataError("grid_covering: no points");
    double x0 = kInf, y0 = kInf, x1 = -kInf, y1 = -kInf;
    for (const auto& p : points) {
        x0 = std::min(x0, p.x);
        y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x);
        y1 = std::max(y1, p.y);
    }
    GridSpec g;
    g.origin = {x0, y0};
    g.cell_size = cell_size;
    g.nx = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((x1 - x0) / cell_size)));
    g.ny = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((y1 - y0) / cell_size)));
    g.validate();
    return g;
}

InterpolationMethod interpolation_method_from_string(const std::string& name) {
    if (name == "idw") return InterpolationMethod::Idw;
    if (name == "kriging") return InterpolationMethod::Kriging;
    throw ConfigError("unknown interpolation method '" + name + "' (expected idw or kriging)");
}

RasterLayer rasterize(const SpatialIndex& index, std::span<const double> values, const GridSpec& grid,
                      InterpolationMethod method, const InterpolationParams& params) {
    grid.validate();
    if (values.size() != index.size()) throw DataError("rasterize: values are not aligned with the index");
    RasterLayer raster;
    raster.grid = grid;
    raster.values.assign(grid.nx * grid.ny, std::numeric_limits<double>::quiet_NaN());
    std::optional<VariogramModel> model = params.variogram;
    if (method == InterpolationMethod::Kriging && !model) {
        model = fit_variogram(index, values, params.variogram_kind, params.n_lags);
    }
    for (std::size_t r = 0; r < grid.ny; ++r) {
        for (std::size_t c = 0; c < grid.nx; ++c) {
            const Point center = grid.cell_center(r, c);
            try {
                raster.values[r * grid.nx + c] =
                    method == InterpolationMethod::Idw
                        ? idw_interpolate(index, values, center, params.idw_power, params.k_max)
                        : kriging_interpolate(index, values, *model, center, params.k_max).estimate;
            } catch (const NumericError&) {
                // Leave the cell masked.
            }
        }
    }
    return raster;
}

void write_ascii_grid(const RasterLayer& raster, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    const auto& g = raster.grid;
    out << "ncols " << g.nx << '\n'
        << "nrows " << g.ny << '\n'
        << "xllcorner " << csv::format_exact(g.origin.x) << '\n'
        << "yllcorner " << csv::format_exact(g.origin.y) << '\n'
        << "cellsize " << csv::format_exact(g.cell_size) << '\n'
        << "NODATA_value " << kNoData << '\n';
    for (std::size_t r = 0; r < g.ny; ++r) {
        for (std::size_t c = 0; c < g.nx; ++c) {
            const double v = raster.at(r, c);
            if (c) out << ' ';
            out << (std::isfinite(v) ? csv::format_significant(v, 10) : std::string("-9999"));
        }
        out << '\n';
    }
}

}  // namespace geochem
