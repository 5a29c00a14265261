#pragma once

#include "dissect/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dissect {

/// One training point: input is (t, p...) in native units.
struct Observation {
  Vector input;
  double value = 0.0;
};

/// RBF kernel hyperparameters, stored as natural logarithms.
struct Hyperparameters {
  double log_noise = 0.0;   // σ
  double log_signal = 0.0;  // σ_k
  Vector log_length;        // ℓ per input dimension

  double noise() const;
  double signal() const;
  double length(Index d) const;
  Index dimension() const { return log_length.size(); }

  static Hyperparameters from_values(double noise, double signal, const Vector& lengths);
};

/// σ_k² exp(-Σ ((u_d - v_d) / ℓ_d)²).
double kernel_eval(const Vector& u, const Vector& v, const Hyperparameters& hyper);

/// Per-dimension affine maps to and from the standardized space.
struct Standardization {
  Vector input_shift;
  Vector input_scale;
  double output_shift = 0.0;
  double output_scale = 1.0;

  static Standardization identity(Index dim);
  /// Zero mean and unit variance per dimension; a zero spread keeps scale 1.
  static Standardization from_data(const std::vector<Observation>& data, Index dim);
  Vector input(const Vector& raw) const;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  double clamped = 0.0;  // negative variance removed by clamping at zero
};

/// Exact GP posterior with zero prior mean in standardized space.
/// Hyperparameters act on standardized inputs and outputs.
class GpModel {
 public:
  GpModel() = default;

  /// Standardizes (optionally) and factorizes K + σ²I. Jitter of
  /// 1e-10 σ_k² is added on failure and doubled up to six times.
  static GpModel condition(std::vector<Observation> observations, const Hyperparameters& hyper,
                           bool standardize = true);

  Prediction predict(const Vector& input) const;
  /// Column i of `inputs` is one query point.
  void predict_many(const Matrix& inputs, Vector& mean, Vector& variance) const;

  /// ½(yᵀK⁻¹y + log det K + N log 2π) on the standardized data; +∞ when
  /// the factorization fails.
  double negative_log_likelihood(const Hyperparameters& hyper) const;
  double negative_log_likelihood() const { return negative_log_likelihood(hyper_); }

  const std::vector<Observation>& observations() const { return observations_; }
  const Hyperparameters& hyper() const { return hyper_; }
  const Standardization& standardization() const { return standardization_; }
  bool standardized() const { return standardize_; }
  Index input_dimension() const { return dim_; }
  std::size_t size() const { return observations_.size(); }
  double jitter() const { return jitter_; }
  /// Relative Frobenius residual of the factorization.
  double factorization_residual() const;

  /// Set when fitting fell back to default hyperparameters.
  bool fallback = false;

  std::string to_json() const;
  static GpModel from_json(const std::string& text);

 private:
  std::vector<Observation> observations_;
  Hyperparameters hyper_;
  Standardization standardization_;
  bool standardize_ = true;
  Index dim_ = 0;
  Matrix inputs_;  // standardized, one column per observation
  Vector targets_;
  Matrix factor_;  // lower Cholesky factor of K + (σ² + jitter) I
  Vector alpha_;
  double jitter_ = 0.0;
};

struct FitOptions {
  int starts = 8;
  double box_lower = -6.0;  // log-space box for random starts
  double box_upper = 3.0;
  double noise_floor = 1e-8;
  double search_limit = 12.0;  // local search bound on |log hyperparameter|
  int max_evaluations = 400;
  bool standardize = true;
  /// Extra start point tried before the default and random starts; with
  /// starts == 1 it replaces the default.
  const Hyperparameters* warm_start = nullptr;
};

/// Multistart Nelder-Mead on the log-hyperparameters. Degenerate data
/// (constant outputs, or every start infeasible) gives fallback
/// hyperparameters with `fallback` set.
GpModel fit_hyperparameters(std::vector<Observation> observations, std::uint64_t seed, const FitOptions& options = {});

/// Hyperparameters used for degenerate data and as the first start.
Hyperparameters default_hyperparameters(Index dim);

}  // namespace dissect
