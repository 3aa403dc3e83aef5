#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace ergo {

/// 0-form sampled at grid nodes (one value per node).
using ScalarField = Eigen::VectorXd;

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid problem data or configuration (CLI exit code 2).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// A solve failed to converge or lost structure (CLI exit code 3).
class SolverError : public Error {
public:
  using Error::Error;
};

/// Trajectory integration failure (CLI exit code 4).
class SimulationError : public Error {
public:
  using Error::Error;
};

/// Covariant 1-form sampled at grid nodes. Components are stored stacked
/// component-major: data = [w_1(node 0..N-1); w_2(node 0..N-1)].
struct OneForm {
  Eigen::VectorXd data;
  int m = 1;

  OneForm() = default;
  OneForm(int m_, Eigen::Index nodes) : data(Eigen::VectorXd::Zero(m_ * nodes)), m(m_) {}

  Eigen::Index nodes() const { return m > 0 ? data.size() / m : 0; }

  auto comp(int k) { return data.segment(k * nodes(), nodes()); }
  auto comp(int k) const { return data.segment(k * nodes(), nodes()); }

  OneForm operator+(const OneForm& o) const { return {data + o.data, m}; }
  OneForm operator-(const OneForm& o) const { return {data - o.data, m}; }
  OneForm operator*(double s) const { return {data * s, m}; }
  OneForm& operator+=(const OneForm& o) {
    data += o.data;
    return *this;
  }

private:
  OneForm(Eigen::VectorXd d, int m_) : data(std::move(d)), m(m_) {}
};

inline OneForm operator*(double s, const OneForm& w) { return w * s; }

}  // namespace ergo
