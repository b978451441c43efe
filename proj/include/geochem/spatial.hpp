#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geochem/geodata.hpp"

namespace geochem {

struct Neighbor {
    std::size_t index = 0;
    double distance = 0.0;
};

/// Static 2-D KD-tree (median split, alternating axes) over survey positions.
/// Distances are planar Euclidean in the raw coordinate units.
class SpatialIndex {
public:
    explicit SpatialIndex(std::vector<Point> points);

    std::size_t size() const { return points_.size(); }
    const std::vector<Point>& points() const { return points_; }
    const Point& point(std::size_t i) const { return points_[i]; }

    /// Exact k nearest points sorted by (distance, index). `exclude` removes one
    /// point index from consideration.
    std::vector<Neighbor> knn(const Point& query, std::size_t k,
                              std::optional<std::size_t> exclude = std::nullopt) const;

    Neighbor nearest(const Point& query, std::optional<std::size_t> exclude = std::nullopt) const;

    /// Every point within `radius` (inclusive), sorted by (distance, index).
    std::vector<Neighbor> within(const Point& query, double radius) const;

private:
    struct Candidate;
    void build(std::size_t lo, std::size_t hi, int depth);
    template <typename Visit>
    void search(std::size_t lo, std::size_t hi, int depth, const Point& q, Visit& visit) const;

    std::vector<Point> points_;
    std::vector<std::size_t> order_;
};

/// Builds the index; throws DataError on empty or non-finite input.
SpatialIndex build_index(std::vector<Point> points);

std::vector<Neighbor> knn_query(const SpatialIndex& index, const Point& query, std::size_t k,
                                std::optional<std::size_t> exclude = std::nullopt);

/// Mean distance from each point to its nearest other point.
double average_sampling_distance(const SpatialIndex& index);

double planar_distance(const Point& a, const Point& b);

inline constexpr std::size_t kDefaultNeighbourCap = 32;

double idw_interpolate(const SpatialIndex& index, std::span<const double> values, const Point& query,
                       double power = 2.0, std::size_t k_max = kDefaultNeighbourCap);

enum class VariogramKind { Spherical, Exponential };

const char* to_string(VariogramKind kind);
VariogramKind variogram_kind_from_string(const std::string& name);

/// `sill` is the total sill (nugget included). gamma(0) = 0; any positive lag
/// jumps to at least the nugget.
struct VariogramModel {
    VariogramKind kind = VariogramKind::Spherical;
    double nugget = 0.0;
    double sill = 1.0;
    double range = 1.0;
    /// Set when the fitted structure is not identifiable (constant field).
    bool degenerate = false;

    double gamma(double lag) const;
    void validate() const;
};

struct EmpiricalVariogram {
    std::vector<double> lag;          // mean pair distance per non-empty bin
    std::vector<double> semivariance; // mean of (vi - vj)^2 / 2
    std::vector<std::size_t> pairs;
};

inline constexpr std::size_t kDefaultLagBins = 12;

/// Bins all pairs up to half the maximum pairwise distance. Surveys larger
/// than `max_points` use a deterministic stride subsample.
EmpiricalVariogram empirical_variogram(const SpatialIndex& index, std::span<const double> values,
                                       std::size_t n_lags = kDefaultLagBins, std::size_t max_points = 3000);

/// Least-squares fit of nugget, sill and range over the empirical bins. The
/// range search starts at half the first lag; a structured model is kept only
/// when it halves the residual of the pure-nugget fit.
VariogramModel fit_variogram(const SpatialIndex& index, std::span<const double> values,
                             VariogramKind kind = VariogramKind::Spherical, std::size_t n_lags = kDefaultLagBins);

struct KrigingEstimate {
    double estimate = 0.0;
    /// Kriging variance, or -1 when the system was singular and IDW was used.
    double variance = 0.0;
    bool fallback = false;
    std::vector<Neighbor> neighbours;
    std::vector<double> weights;
};

/// Ordinary kriging over the k_max nearest samples with the weights constrained
/// to sum to one through a Lagrange multiplier.
KrigingEstimate kriging_interpolate(const SpatialIndex& index, std::span<const double> values,
                                    const VariogramModel& model, const Point& query,
                                    std::size_t k_max = kDefaultNeighbourCap);

struct GridSpec {
    Point origin;  // lower-left corner
    double cell_size = 1.0;
    std::size_t nx = 1;
    std::size_t ny = 1;

    void validate() const;
    /// Center of the cell in raster row `row` (row 0 is the northern edge).
    Point cell_center(std::size_t row, std::size_t col) const;
};

/// Grid covering the bounding box of `points` with the given cell size.
GridSpec grid_covering(std::span<const Point> points, double cell_size);

inline constexpr double kNoData = -9999.0;

/// ny x nx values, row-major from the northern row. NaN marks a masked cell.
struct RasterLayer {
    GridSpec grid;
    std::vector<double> values;

    double at(std::size_t row, std::size_t col) const { return values[row * grid.nx + col]; }
};

enum class InterpolationMethod { Idw, Kriging };

InterpolationMethod interpolation_method_from_string(const std::string& name);

struct InterpolationParams {
    double idw_power = 2.0;
    std::size_t k_max = kDefaultNeighbourCap;
    /// Kriging model; fitted from the data when absent.
    std::optional<VariogramModel> variogram;
    VariogramKind variogram_kind = VariogramKind::Spherical;
    std::size_t n_lags = kDefaultLagBins;
};

RasterLayer rasterize(const SpatialIndex& index, std::span<const double> values, const GridSpec& grid,
                      InterpolationMethod method, const InterpolationParams& params = {});

/// ESRI ASCII grid with NODATA_value -9999.
void write_ascii_grid(const RasterLayer& raster, const std::string& path);

}  // namespace geochem
