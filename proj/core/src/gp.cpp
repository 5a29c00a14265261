#include "dissect/gp.hpp"

#include "dissect/errors.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <json.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>

namespace dissect {

double Hyperparameters::noise() const { return std::exp(log_noise); }
double Hyperparameters::signal() const { return std::exp(log_signal); }
double Hyperparameters::length(Index d) const { return std::exp(log_length(d)); }

Hyperparameters Hyperparameters::from_values(double noise, double signal, const Vector& lengths) {
  if (!(noise > 0.0) || !(signal > 0.0) || !(lengths.array() > 0.0).all()) {
    throw Error("invalid-argument", "hyperparameters must be positive");
  }
  return {std::log(noise), std::log(signal), lengths.array().log().matrix()};
}

double kernel_eval(const Vector& u, const Vector& v, const Hyperparameters& hyper) {
  if (u.size() != v.size() || u.size() != hyper.dimension()) throw DimensionMismatch("kernel inputs differ in size");
  const double d2 = ((u - v).array() / hyper.log_length.array().exp()).square().sum();
  return std::exp(2.0 * hyper.log_signal - d2);
}

Standardization Standardization::identity(Index dim) {
  return {Vector::Zero(dim), Vector::Ones(dim), 0.0, 1.0};
}

Standardization Standardization::from_data(const std::vector<Observation>& data, Index dim) {
  Standardization s = identity(dim);
  if (data.empty()) return s;
  const double n = static_cast<double>(data.size());
  for (const auto& o : data) {
    s.input_shift += o.input;
    s.output_shift += o.value;
  }
  s.input_shift /= n;
  s.output_shift /= n;
  Vector var = Vector::Zero(dim);
  double out_var = 0.0;
  for (const auto& o : data) {
    var += (o.input - s.input_shift).array().square().matrix();
    out_var += (o.value - s.output_shift) * (o.value - s.output_shift);
  }
  for (Index d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var(d) / n);
    s.input_scale(d) = sd > 0.0 ? sd : 1.0;
  }
  const double sd = std::sqrt(out_var / n);
  s.output_scale = sd > 0.0 ? sd : 1.0;
  return s;
}

Vector Standardization::input(const Vector& raw) const {
  return ((raw - input_shift).array() / input_scale.array()).matrix();
}

namespace {

constexpr int kJitterDoublings = 6;

Matrix gram(const Matrix& x, const Hyperparameters& hyper) {
  const Index n = x.cols();
  const Vector inv_len = (-hyper.log_length.array()).exp().matrix();
  const Matrix scaled = inv_len.asDiagonal() * x;
  const double s2 = std::exp(2.0 * hyper.log_signal);
  Matrix k(n, n);
  for (Index j = 0; j < n; ++j) {
    k(j, j) = s2;
    for (Index i = j + 1; i < n; ++i) {
      k(i, j) = k(j, i) = s2 * std::exp(-(scaled.col(i) - scaled.col(j)).squaredNorm());
    }
  }
  return k;
}

/// Cholesky of K + σ²I with escalating jitter; false when every attempt fails.
bool factorize(const Matrix& k, const Hyperparameters& hyper, Matrix& factor, double& jitter) {
  const double noise2 = std::exp(2.0 * hyper.log_noise);
  const double base = 1e-10 * std::exp(2.0 * hyper.log_signal);
  jitter = 0.0;
  for (int attempt = 0; attempt <= kJitterDoublings + 1; ++attempt) {
    Matrix a = k;
    a.diagonal().array() += noise2 + jitter;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().allFinite()) {
      factor = llt.matrixL();
      return true;
    }
    jitter = jitter == 0.0 ? base : 2.0 * jitter;
  }
  return false;
}

double nll_from_factor(const Matrix& factor, const Vector& y) {
  const Vector z = factor.triangularView<Eigen::Lower>().solve(y);
  const double logdet = 2.0 * factor.diagonal().array().log().sum();
  return 0.5 * (z.squaredNorm() + logdet + static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi));
}

}  // namespace

GpModel GpModel::condition(std::vector<Observation> observations, const Hyperparameters& hyper, bool standardize) {
  GpModel m;
  m.dim_ = hyper.dimension();
  for (const auto& o : observations) {
    if (o.input.size() != m.dim_) throw DimensionMismatch("observation input does not match the hyperparameters");
    if (!o.input.allFinite() || !std::isfinite(o.value)) throw Error("non-finite", "observation is not finite");
  }
  if (!std::isfinite(hyper.log_noise) || !std::isfinite(hyper.log_signal) || !hyper.log_length.allFinite()) {
    throw Error("non-finite", "hyperparameters are not finite");
  }
  m.observations_ = std::move(observations);
  m.hyper_ = hyper;
  m.standardize_ = standardize;
  m.standardization_ =
      standardize ? Standardization::from_data(m.observations_, m.dim_) : Standardization::identity(m.dim_);
  const Index n = static_cast<Index>(m.observations_.size());
  m.inputs_.resize(m.dim_, n);
  m.targets_.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& o = m.observations_[static_cast<std::size_t>(i)];
    m.inputs_.col(i) = m.standardization_.input(o.input);
    m.targets_(i) = (o.value - m.standardization_.output_shift) / m.standardization_.output_scale;
  }
  if (n > 0) {
    if (!factorize(gram(m.inputs_, hyper), hyper, m.factor_, m.jitter_)) {
      throw Error("factorization-failure", "kernel matrix is not positive definite after jitter");
    }
    m.alpha_ = m.factor_.transpose().triangularView<Eigen::Upper>().solve(
        m.factor_.triangularView<Eigen::Lower>().solve(m.targets_));
  }
  return m;
}

void GpModel::predict_many(const Matrix& inputs, Vector& mean, Vector& variance) const {
  if (inputs.rows() != dim_) throw DimensionMismatch("query dimension does not match the model");
  const Index q = inputs.cols();
  const Index n = inputs_.cols();
  const double s2 = std::exp(2.0 * hyper_.log_signal);
  const Vector inv_len = (-hyper_.log_length.array()).exp().matrix();
  Matrix zq(dim_, q);
  for (Index j = 0; j < q; ++j) zq.col(j) = inv_len.asDiagonal() * standardization_.input(inputs.col(j));
  const Matrix zx = inv_len.asDiagonal() * inputs_;
  Matrix cross(n, q);
  for (Index j = 0; j < q; ++j) {
    for (Index i = 0; i < n; ++i) cross(i, j) = s2 * std::exp(-(zx.col(i) - zq.col(j)).squaredNorm());
  }
  const double scale = standardization_.output_scale;
  mean.resize(q);
  variance.resize(q);
  if (n == 0) {
    mean.setConstant(standardization_.output_shift);
    variance.setConstant(s2 * scale * scale);
    return;
  }
  mean = (cross.transpose() * alpha_).array() * scale + standardization_.output_shift;
  const Matrix v = factor_.triangularView<Eigen::Lower>().solve(cross);
  variance = ((s2 - v.colwise().squaredNorm().array()) * scale * scale).matrix().transpose();
}

Prediction GpModel::predict(const Vector& input) const {
  Vector mean, variance;
  predict_many(input, mean, variance);
  Prediction p{mean(0), variance(0), 0.0};
  if (p.variance < 0.0) {
    p.clamped = -p.variance;
    p.variance = 0.0;
  }
  return p;
}

double GpModel::negative_log_likelihood(const Hyperparameters& hyper) const {
  if (hyper.dimension() != dim_) throw DimensionMismatch("hyperparameters do not match the model");
  if (observations_.empty()) throw Error("invalid-argument", "likelihood needs at least one observation");
  Matrix factor;
  double jitter = 0.0;
  if (!factorize(gram(inputs_, hyper), hyper, factor, jitter)) return std::numeric_limits<double>::infinity();
  const double v = nll_from_factor(factor, targets_);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

double GpModel::factorization_residual() const {
  if (observations_.empty()) return 0.0;
  Matrix a = gram(inputs_, hyper_);
  a.diagonal().array() += std::exp(2.0 * hyper_.log_noise) + jitter_;
  return (factor_ * factor_.transpose() - a).norm() / a.norm();
}

std::string GpModel::to_json() const {
  nlohmann::json j;
  j["dimension"] = dim_;
  j["standardize"] = standardize_;
  j["fallback"] = fallback;
  j["hyperparameters"] = {{"log_noise", hyper_.log_noise},
                          {"log_signal", hyper_.log_signal},
                          {"log_length", std::vector<double>(hyper_.log_length.data(),
                                                             hyper_.log_length.data() + hyper_.log_length.size())}};
  const auto& s = standardization_;
  j["standardization"] = {
      {"input_shift", std::vector<double>(s.input_shift.data(), s.input_shift.data() + s.input_shift.size())},
      {"input_scale", std::vector<double>(s.input_scale.data(), s.input_scale.data() + s.input_scale.size())},
      {"output_shift", s.output_shift},
      {"output_scale", s.output_scale}};
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : observations_) {
    obs.push_back({{"input", std::vector<double>(o.input.data(), o.input.data() + o.input.size())},
                   {"value", o.value}});
  }
  j["observations"] = obs;
  return j.dump(2);
}

GpModel GpModel::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const auto to_vec = [](const nlohmann::json& a) {
      const auto v = a.get<std::vector<double>>();
      return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
    };
    Hyperparameters h;
    h.log_noise = j.at("hyperparameters").at("log_noise").get<double>();
    h.log_signal = j.at("hyperparameters").at("log_signal").get<double>();
    h.log_length = to_vec(j.at("hyperparameters").at("log_length"));
    std::vector<Observation> obs;
    for (const auto& o : j.at("observations")) obs.push_back({to_vec(o.at("input")), o.at("value").get<double>()});
    GpModel m = condition(std::move(obs), h, j.at("standardize").get<bool>());
    m.fallback = j.value("fallback", false);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid-model", std::string("cannot read GP model: ") + e.what());
  }
}

Hyperparameters default_hyperparameters(Index dim) {
  return {std::log(1e-3), 0.0, Vector::Zero(dim)};
}

namespace {

constexpr double kInfeasible = 1e300;

// The local search stays within ±limit in log space, noise above its floor.
struct Objective {
  const GpModel* model;
  Index dim;
  double log_floor;
  double lower;
  double upper;

  Hyperparameters unpack(const gsl_vector* v) const {
    Hyperparameters h;
    h.log_noise = gsl_vector_get(v, 0);
    h.log_signal = gsl_vector_get(v, 1);
    h.log_length.resize(dim);
    for (Index d = 0; d < dim; ++d) h.log_length(d) = gsl_vector_get(v, static_cast<std::size_t>(2 + d));
    return h;
  }
};

double objective(const gsl_vector* v, void* params) {
  const auto* obj = static_cast<const Objective*>(params);
  for (std::size_t i = 0; i < v->size; ++i) {
    const double x = gsl_vector_get(v, i);
    const double lo = i == 0 ? obj->log_floor : obj->lower;
    if (!std::isfinite(x) || x < lo || x > obj->upper) return kInfeasible;
  }
  const double f = obj->model->negative_log_likelihood(obj->unpack(v));
  return std::isfinite(f) ? f : kInfeasible;
}

struct LocalResult {
  Hyperparameters hyper;
  double value = kInfeasible;
};

LocalResult local_search(const Objective& obj, const Vector& start, int max_evaluations) {
  const std::size_t n = static_cast<std::size_t>(start.size());
  gsl_multimin_function fn{&objective, n, const_cast<Objective*>(&obj)};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* step = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x, i, start(static_cast<Index>(i)));
  gsl_vector_set_all(step, 1.0);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  LocalResult result;
  if (gsl_multimin_fminimizer_set(s, &fn, x, step) == GSL_SUCCESS) {
    for (int it = 0; it < max_evaluations; ++it) {
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-5) == GSL_SUCCESS) break;
    }
    result.value = gsl_multimin_fminimizer_minimum(s);
    result.hyper = obj.unpack(gsl_multimin_fminimizer_x(s));
  }
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return result;
}

Vector pack(const Hyperparameters& h) {
  Vector v(2 + h.dimension());
  v << h.log_noise, h.log_signal, h.log_length;
  return v;
}

}  // namespace

GpModel fit_hyperparameters(std::vector<Observation> observations, std::uint64_t seed, const FitOptions& options) {
  static std::once_flag gsl_quiet;
  std::call_once(gsl_quiet, [] { gsl_set_error_handler_off(); });
  if (observations.empty()) throw Error("invalid-argument", "fitting needs at least two observations");
  const Index dim = observations.front().input.size();
  const Hyperparameters fallback_hyper = default_hyperparameters(dim);
  // The likelihood only depends on the data, so the model is conditioned
  // once with the default hyperparameters and re-evaluated per candidate.
  GpModel base = GpModel::condition(observations, fallback_hyper, options.standardize);

  bool degenerate = observations.size() < 2;
  if (!degenerate) {
    double lo = observations.front().value, hi = lo;
    for (const auto& o : observations) {
      lo = std::min(lo, o.value);
      hi = std::max(hi, o.value);
    }
    degenerate = !(hi > lo);
  }
  if (degenerate) {
    base.fallback = true;
    return base;
  }

  const Objective obj{&base, dim, std::log(options.noise_floor), -options.search_limit, options.search_limit};
  std::vector<Vector> starts;
  if (options.warm_start && options.warm_start->dimension() != dim) {
    throw DimensionMismatch("warm start has the wrong dimension");
  }
  // A warm start is added to the multistart set rather than replacing the
  // default start, so a run that drifted into a noise-dominated optimum can
  // leave it at the next full refit.
  if (options.warm_start) starts.push_back(pack(*options.warm_start));
  if (!options.warm_start || options.starts > 1) starts.push_back(pack(fallback_hyper));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(options.box_lower, options.box_upper);
  for (int s = 1; s < options.starts; ++s) {
    Vector v(2 + dim);
    for (Index i = 0; i < v.size(); ++i) v(i) = box(rng);
    starts.push_back(v);
  }
  LocalResult best;
  for (const auto& start : starts) {
    LocalResult r = local_search(obj, start, options.max_evaluations);
    if (r.value < best.value) best = r;
  }
  if (!(best.value < kInfeasible)) {
    base.fallback = true;
    return base;
  }
  return GpModel::condition(std::move(observations), best.hyper, options.standardize);
}

}  // namespace dissect
