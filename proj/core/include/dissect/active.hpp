#pragma once

#include "dissect/decouple.hpp"
#include "dissect/gp.hpp"
#include "dissect/netlist.hpp"
#include "dissect/newton.hpp"
#include "dissect/recover.hpp"
#include "dissect/simulate.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dissect {

/// Time grid T and parameter grid P. Flat index: time-major, ti * |P| + pi.
struct DesignGrid {
  std::vector<double> times;
  std::vector<Vector> parameters;
  std::vector<ParameterRange> space;

  /// `n_times` uniform points on [t0, t_end]; `points[d]` uniform points on
  /// each parameter range (bounds included), combined as a tensor grid with
  /// the first parameter varying slowest.
  static DesignGrid uniform(const std::vector<ParameterRange>& space, double t0, double t_end, std::size_t n_times,
                            const std::vector<std::size_t>& points);

  std::size_t size() const { return times.size() * parameters.size(); }
  std::size_t flat(std::size_t ti, std::size_t pi) const { return ti * parameters.size() + pi; }
  /// (t, p) of a grid point.
  Vector input(std::size_t ti, std::size_t pi) const;
  /// Every grid input as a column, in flat order.
  Matrix inputs() const;
  void validate() const;
};

enum class InitialDesign { Corners };

/// Corner combinations of the parameter bounds, each with t_min and t_max.
/// Returns (time index, parameter index) pairs.
std::vector<std::pair<std::size_t, std::size_t>> init_design(const DesignGrid& grid,
                                                             InitialDesign rule = InitialDesign::Corners);

/// ‖predictions - truth‖₂ / ‖truth‖₂; throws ZeroTruthNorm.
double relative_error(const Vector& predictions, const Vector& truth);

/// Grid point of maximum posterior variance outside the training set.
/// Ties (within 1e-12 relative) go to the smallest time, then parameter index.
std::pair<std::size_t, std::size_t> select_next(const GpModel& model, const DesignGrid& grid,
                                                const std::vector<bool>& in_design);

/// Row functional c with c·x equal to a named quantity: a layout name or
/// "v_<a>_<b>" for the potential difference of two nodes.
Vector state_functional(const StateLayout& layout, const std::string& name);

/// Everything the learning loop needs about one circuit.
struct LearnProblem {
  CircuitGraph circuit;
  DaeSystem system;
  DecouplingL1 level1;
  std::optional<DecouplingL2> level2;
  DesignGrid grid;
  double step = 1e-6;  // integration step, also the backward-difference increment
  Method method = Method::ImplicitEuler;
  NewtonConfig newton;
  std::vector<std::string> ae_only;  // parameters entering only algebraic equations

  /// Decouples (level 2 when level 1 leaves a singular Kbar_Q) and detects
  /// AE-only parameters.
  static LearnProblem create(const CircuitGraph& circuit, DesignGrid grid, double step,
                             Method method = Method::ImplicitEuler, const NewtonConfig& newton = {});

  int index() const { return level2 ? 2 : 1; }
  /// Names of the differential coordinates (xt or xtq).
  std::vector<std::string> differential_names() const;
  /// Names of all decoupled coordinates, differential first.
  std::vector<std::string> coordinate_names() const;
  /// Functional for a decoupled coordinate name or a state_functional name.
  Vector functional(const std::string& name) const;

  /// Full state at (t, p) whose differential coordinates are those of
  /// `now` (and `next`, one step later, for the index-2 derivative);
  /// algebraic coordinates are recovered at p.
  Vector reconstruct(const Vector& now, const Vector& next, double t, const Vector& p) const;

  /// Full states from differential coordinates given per time (one row
  /// each). For index 2 the rate of xtp is the difference to the next row,
  /// and to the previous row at the last one. `consistency` receives ē.
  Matrix reconstruct_series(const std::vector<double>& times, const Matrix& differential, const Vector& p,
                            std::vector<double>* consistency = nullptr) const;

  /// ê for given values of every decoupled coordinate (one row per time,
  /// columns in coordinate_names() order). For index 2 the rate of xtp is
  /// differenced as in reconstruct_series.
  std::vector<double> series_consistency(const std::vector<double>& times, const Matrix& coordinates,
                                         const Vector& p) const;
};

/// Full-DAE reference trajectories for every parameter point of the grid,
/// sampled at the grid times and one integration step later.
class GroundTruth {
 public:
  /// Runs the simulations on `threads` workers. With a cache directory,
  /// results are stored there keyed by circuit, parameters and settings.
  static GroundTruth compute(const LearnProblem& problem, unsigned threads = 1, const std::string& cache_dir = {});

  const Matrix& states(std::size_t pi) const { return states_.at(pi); }
  const Matrix& next_states(std::size_t pi) const { return next_.at(pi); }
  /// c·x over the grid in flat order.
  Vector values(const Vector& functional) const;
  std::size_t simulations() const { return simulations_; }
  std::size_t cache_hits() const { return cache_hits_; }

 private:
  std::vector<Matrix> states_;
  std::vector<Matrix> next_;
  std::size_t times_ = 0;
  std::size_t simulations_ = 0;
  std::size_t cache_hits_ = 0;
};

enum class Provenance { Simulated, Reconstructed };
std::string to_string(Provenance p);

struct SampleRecord {
  std::size_t iteration = 0;  // 0 for the initial design
  std::size_t time_index = 0;
  std::size_t parameter_index = 0;
  double t = 0.0;
  Vector p;
  double value = 0.0;
  Provenance provenance = Provenance::Simulated;
  double error = 0.0;  // relative error after training on this sample
  Hyperparameters hyper;
  std::size_t distinct_combinations = 0;   // parameter points in the training set
  std::size_t simulated_combinations = 0;  // of those, points that needed a simulation
};

struct LearnHistory {
  std::string variable;
  std::vector<SampleRecord> records;
  double final_error = 0.0;
  bool converged = false;
  bool budget_exceeded = false;
};

struct LearnConfig {
  double tolerance = 1e-3;
  std::size_t max_samples = 400;
  InitialDesign rule = InitialDesign::Corners;
  std::vector<std::string> variables;
  std::vector<std::string> comparison;
  std::uint64_t seed = 1;
  int full_refit_every = 25;  // multistart refit period; warm-started local search otherwise
  FitOptions fit;

  void validate(const DesignGrid& grid) const;
};

struct VariableModel {
  std::string variable;
  Vector functional;
  GpModel model;
  LearnHistory history;
};

/// One independent loop for a single variable.
VariableModel learn_variable(const LearnProblem& problem, const GroundTruth& truth, const LearnConfig& cfg,
                             const std::string& variable);

/// Model for `name`, or nullptr.
const VariableModel* find_model(const std::vector<VariableModel>& models, const std::string& name);

/// Consistency errors at parameter point p: ê with every decoupled
/// coordinate taken from its own model (NaN when one is missing), ē with
/// the differential coordinates predicted and the rest reconstructed.
ConsistencyReport consistency_report(const LearnProblem& problem, const std::vector<VariableModel>& models,
                                     const Vector& p, const std::vector<double>& times);

/// Runs `learn_variable` for every entry of cfg.variables, then cfg.comparison.
std::vector<VariableModel> run_active_learning(const LearnProblem& problem, const GroundTruth& truth,
                                               const LearnConfig& cfg);

}  // namespace dissect
