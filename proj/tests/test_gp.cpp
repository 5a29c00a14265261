#include "dissect/errors.hpp"
#include "dissect/gp.hpp"

#include <catch_amalgamated.hpp>

#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <random>

using namespace dissect;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<Observation> sample_data(std::mt19937_64& rng, Index dim, std::size_t n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<Observation> data;
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(dim);
    for (Index d = 0; d < dim; ++d) x(d) = u(rng);
    data.push_back({x, std::sin(x.sum()) + 0.3 * x(0) * x(0)});
  }
  return data;
}

Hyperparameters random_hyper(std::mt19937_64& rng, Index dim) {
  std::uniform_real_distribution<double> u(0.3, 2.0);
  Vector len(dim);
  for (Index d = 0; d < dim; ++d) len(d) = u(rng);
  return Hyperparameters::from_values(0.05 * u(rng), u(rng), len);
}

// Dense oracle in raw (unstandardized) coordinates: mean k*ᵀ(K + σ²I)⁻¹y,
// variance k(x, x) - k*ᵀ(K + σ²I)⁻¹k*, with a general LU solve.
struct DenseOracle {
  std::vector<Observation> data;
  Hyperparameters hyper;
  Matrix inverse;

  DenseOracle(std::vector<Observation> d, const Hyperparameters& h) : data(std::move(d)), hyper(h) {
    const Index n = static_cast<Index>(data.size());
    Matrix k(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        const Vector diff = data[i].input - data[j].input;
        double s = 0.0;
        for (Index q = 0; q < diff.size(); ++q) s += std::pow(diff(q) / h.length(q), 2);
        k(i, j) = h.signal() * h.signal() * std::exp(-s);
      }
      k(i, i) += h.noise() * h.noise();
    }
    inverse = k.partialPivLu().inverse();
  }

  std::pair<double, double> predict(const Vector& x) const {
    const Index n = static_cast<Index>(data.size());
    Vector ks(n), y(n);
    for (Index i = 0; i < n; ++i) {
      ks(i) = kernel_eval(x, data[i].input, hyper);
      y(i) = data[i].value;
    }
    return {ks.dot(inverse * y), hyper.signal() * hyper.signal() - ks.dot(inverse * ks)};
  }
};

}  // namespace

TEST_CASE("kernel closed form", "[gp]") {
  const Hyperparameters h = Hyperparameters::from_values(0.1, 2.0, Vector{{0.5, 3.0}});
  const Vector u{{1.0, 2.0}}, v{{0.5, -1.0}};
  const double expected = 4.0 * std::exp(-(1.0 + 1.0));
  CHECK_THAT(kernel_eval(u, v, h), WithinRel(expected, 1e-14));
  CHECK_THAT(kernel_eval(u, u, h), WithinRel(4.0, 1e-15));
  CHECK(kernel_eval(u, v, h) == kernel_eval(v, u, h));
  CHECK_THROWS_AS(kernel_eval(Vector{{1.0}}, v, h), DimensionMismatch);
  CHECK_THROWS(Hyperparameters::from_values(0.0, 1.0, Vector{{1.0}}));
}

TEST_CASE("standardization", "[gp]") {
  const std::vector<Observation> data{{Vector{{0.0, 5.0}}, 1.0}, {Vector{{2.0, 5.0}}, 3.0}};
  const Standardization s = Standardization::from_data(data, 2);
  CHECK(s.input_shift.isApprox(Vector{{1.0, 5.0}}));
  CHECK(s.input_scale(0) == 1.0);
  CHECK(s.input_scale(1) == 1.0);  // zero spread keeps scale 1
  CHECK(s.output_shift == 2.0);
  CHECK(s.output_scale == 1.0);
  CHECK(s.input(Vector{{3.0, 5.0}}).isApprox(Vector{{2.0, 0.0}}));
}

TEST_CASE("posterior matches a dense solve", "[gp][property]") {
  std::mt19937_64 rng(71);
  std::uniform_int_distribution<int> size(3, 25);
  std::uniform_int_distribution<int> dims(1, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const Index dim = dims(rng);
    const auto data = sample_data(rng, dim, static_cast<std::size_t>(size(rng)));
    const Hyperparameters h = random_hyper(rng, dim);
    const GpModel m = GpModel::condition(data, h, false);
    const DenseOracle oracle(data, h);
    for (const auto& q : sample_data(rng, dim, 10)) {
      const auto [mean, var] = oracle.predict(q.input);
      const Prediction p = m.predict(q.input);
      CHECK_THAT(p.mean, WithinAbs(mean, 1e-9 * (1.0 + std::abs(mean))));
      CHECK_THAT(p.variance, WithinAbs(std::max(var, 0.0), 1e-9 * h.signal() * h.signal()));
    }
  }
}

TEST_CASE("standardized posterior equals the raw-space oracle after the affine maps", "[gp][property]") {
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = sample_data(rng, 2, 15);
    const Hyperparameters h = random_hyper(rng, 2);
    const GpModel m = GpModel::condition(data, h, true);
    const Standardization& s = m.standardization();
    std::vector<Observation> mapped;
    for (const auto& o : data) mapped.push_back({s.input(o.input), (o.value - s.output_shift) / s.output_scale});
    const DenseOracle oracle(mapped, h);
    for (const auto& q : sample_data(rng, 2, 5)) {
      const auto [mean, var] = oracle.predict(s.input(q.input));
      const Prediction p = m.predict(q.input);
      CHECK_THAT(p.mean, WithinAbs(mean * s.output_scale + s.output_shift, 1e-9 * (1.0 + std::abs(p.mean))));
      CHECK_THAT(p.variance, WithinAbs(std::max(var, 0.0) * s.output_scale * s.output_scale, 1e-9));
    }
  }
}

TEST_CASE("noise-free interpolation at the observations", "[gp][property]") {
  std::mt19937_64 rng(79);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = sample_data(rng, 2, 12);
    const GpModel m = GpModel::condition(data, Hyperparameters::from_values(1e-8, 1.0, Vector{{0.7, 0.7}}));
    for (const auto& o : data) {
      const Prediction p = m.predict(o.input);
      CHECK_THAT(p.mean, WithinAbs(o.value, 1e-8));
      CHECK(p.variance <= 1e-8);
    }
  }
}

TEST_CASE("posterior variance lies between zero and the prior", "[gp][property]") {
  std::mt19937_64 rng(83);
  const auto data = sample_data(rng, 2, 20);
  const Hyperparameters h = Hyperparameters::from_values(1e-3, 1.3, Vector{{0.5, 1.0}});
  const GpModel m = GpModel::condition(data, h, false);
  for (const auto& q : sample_data(rng, 2, 200)) {
    const Prediction p = m.predict(q.input);
    CHECK(p.variance >= 0.0);
    CHECK(p.variance <= 1.3 * 1.3 * (1.0 + 1e-12));
  }
  // Far from the data the prior is recovered.
  CHECK_THAT(m.predict(Vector{{100.0, 100.0}}).variance, WithinRel(1.69, 1e-12));
  CHECK_THAT(m.predict(Vector{{100.0, 100.0}}).mean, WithinAbs(0.0, 1e-12));
}

TEST_CASE("negative log likelihood matches the dense formula", "[gp]") {
  std::mt19937_64 rng(89);
  const auto data = sample_data(rng, 1, 10);
  const Hyperparameters h = random_hyper(rng, 1);
  const GpModel m = GpModel::condition(data, h, false);
  const DenseOracle oracle(data, h);
  Vector y(10);
  for (Index i = 0; i < 10; ++i) y(i) = data[static_cast<std::size_t>(i)].value;
  const double logdet = std::log(oracle.inverse.inverse().determinant());
  const double expected = 0.5 * (y.dot(oracle.inverse * y) + logdet + 10.0 * std::log(2.0 * std::numbers::pi));
  CHECK_THAT(m.negative_log_likelihood(), WithinRel(expected, 1e-9));
}

TEST_CASE("duplicate inputs without noise need jitter", "[gp]") {
  const std::vector<Observation> data{{Vector{{0.0}}, 1.0}, {Vector{{0.0}}, 1.0}, {Vector{{1.0}}, 0.0}};
  const GpModel m = GpModel::condition(data, Hyperparameters::from_values(1e-300, 1.0, Vector{{1.0}}), false);
  CHECK(m.jitter() > 0.0);
  CHECK(m.factorization_residual() < 1e-8);
  CHECK_THAT(m.predict(Vector{{0.0}}).mean, WithinAbs(1.0, 1e-6));
}

TEST_CASE("hyperparameter fitting", "[gp]") {
  std::mt19937_64 rng(97);
  const auto data = sample_data(rng, 2, 30);
  const GpModel a = fit_hyperparameters(data, 5);
  const GpModel b = fit_hyperparameters(data, 5);
  CHECK(a.hyper().log_noise == b.hyper().log_noise);
  CHECK(a.hyper().log_length == b.hyper().log_length);
  CHECK_FALSE(a.fallback);
  CHECK(a.hyper().noise() >= 1e-8 * (1.0 - 1e-12));
  // The optimum is no worse than the default start.
  CHECK(a.negative_log_likelihood() <= a.negative_log_likelihood(default_hyperparameters(2)) + 1e-9);

  const std::vector<Observation> flat{{Vector{{0.0}}, 2.0}, {Vector{{1.0}}, 2.0}, {Vector{{2.0}}, 2.0}};
  const GpModel c = fit_hyperparameters(flat, 1);
  CHECK(c.fallback);
  CHECK_THAT(c.predict(Vector{{0.5}}).mean, WithinAbs(2.0, 1e-12));
}

TEST_CASE("a warm start never loses to the default start", "[gp]") {
  std::mt19937_64 rng(101);
  const auto data = sample_data(rng, 2, 25);
  const Hyperparameters poor = Hyperparameters::from_values(0.5, 0.1, Vector{{50.0, 50.0}});
  FitOptions opt;
  opt.warm_start = &poor;
  const GpModel warm = fit_hyperparameters(data, 3, opt);
  const GpModel cold = fit_hyperparameters(data, 3);
  CHECK(warm.negative_log_likelihood() <= cold.negative_log_likelihood() + 1e-9);
}

TEST_CASE("model JSON round trip", "[gp]") {
  std::mt19937_64 rng(103);
  const auto data = sample_data(rng, 3, 15);
  const GpModel m = GpModel::condition(data, random_hyper(rng, 3));
  const GpModel back = GpModel::from_json(m.to_json());
  for (const auto& q : sample_data(rng, 3, 20)) {
    CHECK(back.predict(q.input).mean == m.predict(q.input).mean);
    CHECK(back.predict(q.input).variance == m.predict(q.input).variance);
  }
  CHECK_THROWS(GpModel::from_json("{\"not\": \"a model\"}"));
}
