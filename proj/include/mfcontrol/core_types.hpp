#pragma once

// Shared vocabulary: time partitions, piecewise-constant controls, particle and
// grid representations of probability measures, and controlled vector fields.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mfcontrol/errors.hpp"

namespace mfc {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int N>
using Mat = Eigen::Matrix<double, N, N>;
template <int N, int M>
using Gain = Eigen::Matrix<double, N, M>;

template <int N>
bool all_finite(const Vec<N>& v) {
  return v.array().isFinite().all();
}

// ---------------------------------------------------------------------------
// TimePartition

/// Ordered nodes 0 = t_0 < t_1 < ... < t_N = T.
class TimePartition {
 public:
  explicit TimePartition(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw ConfigurationError("time partition needs at least 2 nodes");
    if (nodes_.front() != 0.0) throw ConfigurationError("time partition must start at 0");
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      if (!(nodes_[i] > nodes_[i - 1]) || !std::isfinite(nodes_[i]))
        throw ConfigurationError("time partition must be strictly increasing (node " +
                                 std::to_string(i) + ")");
    }
  }

  static TimePartition uniform(double horizon, std::size_t intervals) {
    if (intervals == 0 || !(horizon > 0.0))
      throw ConfigurationError("uniform partition needs a positive horizon and interval count");
    std::vector<double> nodes(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i)
      nodes[i] = horizon * static_cast<double>(i) / static_cast<double>(intervals);
    nodes.back() = horizon;
    return TimePartition(std::move(nodes));
  }

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  double node(std::size_t i) const { return nodes_.at(i); }
  std::size_t intervals() const noexcept { return nodes_.size() - 1; }
  double horizon() const noexcept { return nodes_.back(); }
  double length(std::size_t i) const { return nodes_.at(i + 1) - nodes_.at(i); }

  /// Index of the interval [t_i, t_{i+1}) containing t; t = T maps to the last interval.
  std::size_t interval_of(double t) const {
    if (!(t >= 0.0) || t > horizon())
      throw std::out_of_range("time " + std::to_string(t) + " outside [0, " +
                              std::to_string(horizon()) + "]");
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
    auto idx = static_cast<std::size_t>(std::distance(nodes_.begin(), it));
    return std::min(idx - 1, intervals() - 1);
  }

  bool operator==(const TimePartition&) const = default;

 private:
  std::vector<double> nodes_;
};

// ---------------------------------------------------------------------------
// ControlSet / ControlSignal

/// Box U = [lower, upper] with an optional finite candidate set used for exhaustive minimization.
template <int M>
class ControlSet {
 public:
  ControlSet(Vec<M> lower, Vec<M> upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (!all_finite<M>(lower_) || !all_finite<M>(upper_) || (lower_.array() > upper_.array()).any())
      throw ConfigurationError("control set needs finite bounds with lower <= upper");
  }

  static ControlSet scalar(double lower, double upper) {
    static_assert(M == 1);
    return ControlSet(Vec<1>::Constant(lower), Vec<1>::Constant(upper));
  }

  ControlSet with_candidates(std::vector<Vec<M>> candidates) const {
    for (const auto& c : candidates)
      if (!contains(c)) throw ConfigurationError("control candidate lies outside the control box");
    ControlSet out = *this;
    out.candidates_ = std::move(candidates);
    return out;
  }

  /// Tensor grid with `per_axis` equally spaced values on each axis (per_axis >= 2).
  ControlSet with_uniform_candidates(std::size_t per_axis) const {
    if (per_axis < 2) throw ConfigurationError("candidate grid needs at least 2 values per axis");
    std::vector<Vec<M>> grid;
    std::array<std::size_t, M> idx{};
    while (true) {
      Vec<M> v;
      for (int k = 0; k < M; ++k)
        v[k] = lower_[k] + (upper_[k] - lower_[k]) * static_cast<double>(idx[k]) /
                               static_cast<double>(per_axis - 1);
      grid.push_back(v);
      int k = 0;
      for (; k < M; ++k) {
        if (++idx[k] < per_axis) break;
        idx[k] = 0;
      }
      if (k == M) break;
    }
    return with_candidates(std::move(grid));
  }

  const Vec<M>& lower() const noexcept { return lower_; }
  const Vec<M>& upper() const noexcept { return upper_; }
  const std::vector<Vec<M>>& candidates() const noexcept { return candidates_; }

  bool contains(const Vec<M>& v, double tol = 0.0) const {
    return ((v.array() >= lower_.array() - tol) && (v.array() <= upper_.array() + tol)).all();
  }
  Vec<M> clip(const Vec<M>& v) const { return v.cwiseMax(lower_).cwiseMin(upper_); }

 private:
  Vec<M> lower_;
  Vec<M> upper_;
  std::vector<Vec<M>> candidates_;
};

/// Piecewise-constant, right-continuous control: values[i] acts on [t_i, t_{i+1}).
template <int M>
class ControlSignal {
 public:
  ControlSignal(TimePartition partition, std::vector<Vec<M>> values, ControlSet<M> bounds)
      : partition_(std::move(partition)), values_(std::move(values)), bounds_(std::move(bounds)) {
    if (values_.size() != partition_.intervals())
      throw ConfigurationError("control has " + std::to_string(values_.size()) +
                               " values for " + std::to_string(partition_.intervals()) +
                               " intervals");
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!bounds_.contains(values_[i], 1e-12))
        throw ConfigurationError("control value on interval " + std::to_string(i) +
                                 " lies outside the control set");
  }

  static ControlSignal constant(TimePartition partition, const Vec<M>& value, ControlSet<M> bounds) {
    std::vector<Vec<M>> values(partition.intervals(), value);
    return ControlSignal(std::move(partition), std::move(values), std::move(bounds));
  }

  const TimePartition& partition() const noexcept { return partition_; }
  const std::vector<Vec<M>>& values() const noexcept { return values_; }
  const Vec<M>& value(std::size_t interval) const { return values_.at(interval); }
  const ControlSet<M>& bounds() const noexcept { return bounds_; }

  /// u(t); throws std::out_of_range outside [0, T].
  const Vec<M>& sample(double t) const { return values_[partition_.interval_of(t)]; }

  bool operator==(const ControlSignal& other) const {
    return partition_ == other.partition_ && values_ == other.values_;
  }

 private:
  TimePartition partition_;
  std::vector<Vec<M>> values_;
  ControlSet<M> bounds_;
};

template <int M>
const Vec<M>& sample_control(const ControlSignal<M>& signal, double t) {
  return signal.sample(t);
}

// ---------------------------------------------------------------------------
// ParticleMeasure

/// Weighted particle cloud; a single point with weight 1 is a Dirac mass.
template <int N>
class ParticleMeasure {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  ParticleMeasure(std::vector<Vec<N>> points, std::vector<double> weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.empty()) throw ConfigurationError("particle measure needs at least one point");
    if (points_.size() != weights_.size())
      throw ConfigurationError("particle measure: points and weights differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i]))
        throw ConfigurationError("particle weight " + std::to_string(i) + " is negative or not finite");
      if (!all_finite<N>(points_[i]))
        throw ConfigurationError("particle " + std::to_string(i) + " is not finite");
      total += weights_[i];
    }
    if (std::abs(total - 1.0) > kWeightTolerance)
      throw ConfigurationError("particle weights sum to " + std::to_string(total) + ", expected 1");
  }

  static ParticleMeasure dirac(const Vec<N>& x) { return ParticleMeasure({x}, {1.0}); }

  static ParticleMeasure uniform(std::vector<Vec<N>> points) {
    const double w = 1.0 / static_cast<double>(points.size());
    std::vector<double> weights(points.size(), w);
    return normalized(std::move(points), std::move(weights));
  }

  /// Rescales nonnegative weights to unit total mass.
  static ParticleMeasure normalized(std::vector<Vec<N>> points, std::vector<double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw ConfigurationError("particle measure has no mass");
    for (double& w : weights) w /= total;
    return ParticleMeasure(std::move(points), std::move(weights));
  }

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Vec<N>>& points() const noexcept { return points_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const Vec<N>& point(std::size_t i) const { return points_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }

  /// Same weights, new support points (used for pushforwards).
  ParticleMeasure with_points(std::vector<Vec<N>> points) const {
    ParticleMeasure out = *this;
    if (points.size() != out.points_.size())
      throw ConfigurationError("particle measure: replacement support has the wrong size");
    out.points_ = std::move(points);
    return out;
  }

 private:
  std::vector<Vec<N>> points_;
  std::vector<double> weights_;
};

/// F#mu for particle measures: moves the support, keeps the weights.
template <int N, typename Map>
ParticleMeasure<N> pushforward(const ParticleMeasure<N>& measure, Map&& map) {
  std::vector<Vec<N>> moved;
  moved.reserve(measure.size());
  for (std::size_t i = 0; i < measure.size(); ++i) {
    Vec<N> y = map(measure.point(i));
    if (!all_finite<N>(y))
      throw DomainError("pushforward produced a non-finite point for particle " + std::to_string(i));
    moved.push_back(std::move(y));
  }
  return measure.with_points(std::move(moved));
}

template <int N>
struct Moments {
  Vec<N> expectation;
  double variance;  // trace of the covariance
};

template <int N>
Moments<N> moments(const ParticleMeasure<N>& measure) {
  Vec<N> mean = Vec<N>::Zero();
  double second = 0.0;
  for (std::size_t i = 0; i < measure.size(); ++i) {
    mean += measure.weight(i) * measure.point(i);
    second += measure.weight(i) * measure.point(i).squaredNorm();
  }
  return {mean, second - mean.squaredNorm()};
}

// ---------------------------------------------------------------------------
// GridMeasure

enum class Boundary { periodic, reflecting };

inline const char* to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "reflecting"; }

inline Boundary parse_boundary(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "reflecting") return Boundary::reflecting;
  throw ConfigurationError("unknown boundary kind '" + s + "'");
}

/// Uniform cell-centred axis: cells [origin + i*spacing, origin + (i+1)*spacing), i < count.
struct GridAxis {
  double origin = 0.0;
  double spacing = 1.0;
  std::size_t count = 1;

  double center(std::size_t i) const { return origin + (static_cast<double>(i) + 0.5) * spacing; }
  double upper() const { return origin + static_cast<double>(count) * spacing; }

  /// Axis covering [lo, hi] with the cell count nearest to (hi - lo) / target_spacing.
  static GridAxis covering(double lo, double hi, double target_spacing) {
    if (!(hi > lo) || !(target_spacing > 0.0)) throw ConfigurationError("invalid grid axis extent");
    const auto count =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround((hi - lo) / target_spacing)));
    return {lo, (hi - lo) / static_cast<double>(count), count};
  }
};

/// Density on a uniform rectangular grid, row-major (last axis fastest).
template <int N>
class GridMeasure {
 public:
  static constexpr double kMassTolerance = 1e-9;

  GridMeasure(std::array<GridAxis, N> axes, std::array<Boundary, N> boundaries, std::vector<double> density)
      : GridMeasure(std::move(axes), std::move(boundaries), std::move(density), kMassTolerance) {}

  /// Unvalidated mass (density still checked for sign); used for evolved snapshots.
  static GridMeasure unnormalized(std::array<GridAxis, N> axes, std::array<Boundary, N> boundaries,
                                  std::vector<double> density) {
    return GridMeasure(std::move(axes), std::move(boundaries), std::move(density),
                       std::numeric_limits<double>::infinity());
  }

  /// Rescales the density to unit mass.
  static GridMeasure normalized(std::array<GridAxis, N> axes, std::array<Boundary, N> boundaries,
                                std::vector<double> density) {
    auto tmp = unnormalized(axes, boundaries, density);
    const double mass = tmp.total_mass();
    if (!(mass > 0.0)) throw ConfigurationError("grid density has no mass");
    for (double& d : density) d /= mass;
    return GridMeasure(std::move(axes), std::move(boundaries), std::move(density));
  }

  const std::array<GridAxis, N>& axes() const noexcept { return axes_; }
  const GridAxis& axis(int k) const { return axes_[static_cast<std::size_t>(k)]; }
  const std::array<Boundary, N>& boundaries() const noexcept { return boundaries_; }
  const std::vector<double>& density() const noexcept { return density_; }
  std::size_t cell_count() const noexcept { return density_.size(); }

  double cell_volume() const {
    double v = 1.0;
    for (const auto& a : axes_) v *= a.spacing;
    return v;
  }
  double total_mass() const {
    return std::accumulate(density_.begin(), density_.end(), 0.0) * cell_volume();
  }

  std::array<std::size_t, N> unflatten(std::size_t flat) const {
    std::array<std::size_t, N> idx{};
    for (int k = N - 1; k >= 0; --k) {
      const auto c = axes_[static_cast<std::size_t>(k)].count;
      idx[static_cast<std::size_t>(k)] = flat % c;
      flat /= c;
    }
    return idx;
  }

  Vec<N> center(std::size_t flat) const {
    const auto idx = unflatten(flat);
    Vec<N> x;
    for (int k = 0; k < N; ++k) x[k] = axes_[static_cast<std::size_t>(k)].center(idx[static_cast<std::size_t>(k)]);
    return x;
  }

  GridMeasure with_density(std::vector<double> density) const {
    return unnormalized(axes_, boundaries_, std::move(density));
  }

 private:
  GridMeasure(std::array<GridAxis, N> axes, std::array<Boundary, N> boundaries, std::vector<double> density,
              double mass_tol)
      : axes_(std::move(axes)), boundaries_(std::move(boundaries)), density_(std::move(density)) {
    std::size_t cells = 1;
    for (const auto& a : axes_) {
      if (a.count == 0 || !(a.spacing > 0.0) || !std::isfinite(a.origin))
        throw ConfigurationError("grid axis needs a positive spacing and cell count");
      cells *= a.count;
    }
    if (density_.size() != cells)
      throw ConfigurationError("grid density has " + std::to_string(density_.size()) +
                               " values, expected " + std::to_string(cells));
    for (std::size_t i = 0; i < density_.size(); ++i)
      if (!(density_[i] >= 0.0) || !std::isfinite(density_[i]))
        throw ConfigurationError("grid density at cell " + std::to_string(i) + " is negative or not finite");
    if (std::isfinite(mass_tol) && std::abs(total_mass() - 1.0) > mass_tol)
      throw ConfigurationError("grid density has mass " + std::to_string(total_mass()) + ", expected 1");
  }

  std::array<GridAxis, N> axes_;
  std::array<Boundary, N> boundaries_;
  std::vector<double> density_;
};

/// Cell-centre quadrature of the density; cell masses below `mass_floor` are dropped.
template <int N>
ParticleMeasure<N> to_particles(const GridMeasure<N>& grid, double mass_floor = 1e-12) {
  std::vector<Vec<N>> points;
  std::vector<double> weights;
  const double vol = grid.cell_volume();
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    const double m = grid.density()[i] * vol;
    if (m < mass_floor) continue;
    points.push_back(grid.center(i));
    weights.push_back(m);
  }
  return ParticleMeasure<N>::normalized(std::move(points), std::move(weights));
}

/// Moments by cell-centre quadrature, normalized by the grid's own mass.
template <int N>
Moments<N> moments(const GridMeasure<N>& grid) {
  Vec<N> mean = Vec<N>::Zero();
  double second = 0.0;
  double mass = 0.0;
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    const double w = grid.density()[i];
    if (w == 0.0) continue;
    const Vec<N> x = grid.center(i);
    mean += w * x;
    second += w * x.squaredNorm();
    mass += w;
  }
  mean /= mass;
  return {mean, second / mass - mean.squaredNorm()};
}

// Text format: "axes: o h n x o h n ...; boundary: tag tag ..." then one value per line.
template <int N>
void write_grid_measure(std::ostream& os, const GridMeasure<N>& grid) {
  os << "axes:";
  for (int k = 0; k < N; ++k) {
    const auto& a = grid.axis(k);
    if (k > 0) os << " x";
    os << std::setprecision(17) << ' ' << a.origin << ' ' << a.spacing << ' ' << a.count;
  }
  os << "; boundary:";
  for (auto b : grid.boundaries()) os << ' ' << to_string(b);
  os << '\n';
  os << std::setprecision(17);
  for (double d : grid.density()) os << d << '\n';
}

template <int N>
void write_grid_measure(const std::string& path, const GridMeasure<N>& grid) {
  std::ofstream out(path);
  if (!out) throw ConfigurationError("cannot open '" + path + "' for writing");
  write_grid_measure(out, grid);
}

/// Reads the text format; the mass must be within `mass_tol` of 1 and is then renormalized.
template <int N>
GridMeasure<N> read_grid_measure(std::istream& is, double mass_tol = 1e-6) {
  std::string header;
  if (!std::getline(is, header)) throw ConfigurationError("grid file is empty");
  const auto semi = header.find(';');
  if (header.rfind("axes:", 0) != 0 || semi == std::string::npos)
    throw ConfigurationError("grid file header must start with 'axes:' and contain ';'");
  std::array<GridAxis, N> axes{};
  {
    std::string part = header.substr(5, semi - 5);
    std::replace(part.begin(), part.end(), 'x', ' ');
    std::istringstream ss(part);
    for (int k = 0; k < N; ++k) {
      auto& a = axes[static_cast<std::size_t>(k)];
      if (!(ss >> a.origin >> a.spacing >> a.count))
        throw ConfigurationError("grid file header lists fewer than " + std::to_string(N) + " axes");
    }
    std::string extra;
    if (ss >> extra) throw ConfigurationError("grid file header lists too many axes");
  }
  std::array<Boundary, N> bnd{};
  {
    std::string part = header.substr(semi + 1);
    std::istringstream ss(part);
    std::string key;
    ss >> key;
    if (key != "boundary:") throw ConfigurationError("grid file header lacks 'boundary:'");
    for (int k = 0; k < N; ++k) {
      std::string tag;
      if (!(ss >> tag)) throw ConfigurationError("grid file header lists too few boundary tags");
      bnd[static_cast<std::size_t>(k)] = parse_boundary(tag);
    }
  }
  std::vector<double> density;
  double v = 0.0;
  while (is >> v) density.push_back(v);
  if (!is.eof()) throw ConfigurationError("grid file contains a non-numeric density value");
  auto grid = GridMeasure<N>::unnormalized(axes, bnd, std::move(density));
  if (std::abs(grid.total_mass() - 1.0) > mass_tol)
    throw ConfigurationError("grid file density has mass " + std::to_string(grid.total_mass()));
  return GridMeasure<N>::normalized(grid.axes(), grid.boundaries(), grid.density());
}

template <int N>
GridMeasure<N> read_grid_measure(const std::string& path, double mass_tol = 1e-6) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open grid file '" + path + "'");
  return read_grid_measure<N>(in, mass_tol);
}

// ---------------------------------------------------------------------------
// ParametricField

/// Controlled vector field V_u(x) with its state Jacobian D_x V_u(x).
///
/// Optional extras: an affine-in-control decomposition V_u(x) = a(x) u + b(x), and a
/// projection onto an admissible state set applied after every integrator substep.
/// The projection receives the tangent matrix (may be null) and must premultiply it
/// by the projection's derivative.
template <int N, int M>
class ParametricField {
 public:
  using State = Vec<N>;
  using Control = Vec<M>;
  using Jacobian = Mat<N>;
  using EvalFn = std::function<void(const State&, const Control&, State* value, Jacobian* jacobian)>;
  using GainFn = std::function<Gain<N, M>(const State&)>;
  using DriftFn = std::function<State(const State&)>;
  using ProjectionFn = std::function<void(State&, Jacobian*)>;

  explicit ParametricField(EvalFn eval) : eval_(std::move(eval)) {}

  template <typename ValueFn, typename JacobianFn>
  static ParametricField from(ValueFn value, JacobianFn jacobian) {
    return ParametricField([value, jacobian](const State& x, const Control& u, State* v, Jacobian* j) {
      if (v) *v = value(x, u);
      if (j) *j = jacobian(x, u);
    });
  }

  ParametricField with_affine(GainFn gain, DriftFn drift) const {
    ParametricField out = *this;
    out.gain_ = std::move(gain);
    out.drift_ = std::move(drift);
    return out;
  }

  ParametricField with_projection(ProjectionFn projection) const {
    ParametricField out = *this;
    out.projection_ = std::move(projection);
    return out;
  }

  void evaluate(const State& x, const Control& u, State* value, Jacobian* jacobian) const {
    eval_(x, u, value, jacobian);
  }
  State value(const State& x, const Control& u) const {
    State v;
    eval_(x, u, &v, nullptr);
    return v;
  }
  Jacobian jacobian(const State& x, const Control& u) const {
    Jacobian j;
    eval_(x, u, nullptr, &j);
    return j;
  }

  bool has_affine() const noexcept { return static_cast<bool>(gain_); }
  Gain<N, M> gain(const State& x) const { return gain_(x); }
  State drift(const State& x) const { return drift_(x); }

  bool has_projection() const noexcept { return static_cast<bool>(projection_); }
  void project(State& x, Jacobian* tangent) const {
    if (projection_) projection_(x, tangent);
  }

 private:
  EvalFn eval_;
  GainFn gain_;
  DriftFn drift_;
  ProjectionFn projection_;
};

/// max |V_u(x) - (a(x) u + b(x))| over the samples; 0 when no decomposition is attached.
template <int N, int M>
double affine_mismatch(const ParametricField<N, M>& field,
                       const std::vector<std::pair<Vec<N>, Vec<M>>>& samples) {
  if (!field.has_affine()) return 0.0;
  double worst = 0.0;
  for (const auto& [x, u] : samples)
    worst = std::max(worst, (field.value(x, u) - (field.gain(x) * u + field.drift(x))).norm());
  return worst;
}

/// Checks |V_u(x)| <= bound * (1 + |x|) on the samples.
template <int N, int M>
bool satisfies_growth_bound(const ParametricField<N, M>& field, double bound,
                            const std::vector<std::pair<Vec<N>, Vec<M>>>& samples) {
  return std::all_of(samples.begin(), samples.end(), [&](const auto& s) {
    return field.value(s.first, s.second).norm() <= bound * (1.0 + s.first.norm());
  });
}

}  // namespace mfc
