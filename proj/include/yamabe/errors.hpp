#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace yamabe {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (e.g. k > n).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid model parameter, e.g. t >= 1 for the modified Schouten tensor.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent problem description.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// A point left the admissible cone. Carries the signed margin and, when
/// raised from a field operation, the offending node indices.
class ConeViolation : public Error {
 public:
  ConeViolation(const std::string& what, double margin,
                std::vector<std::size_t> nodes = {})
      : Error(what), margin_(margin), nodes_(std::move(nodes)) {}

  double margin() const noexcept { return margin_; }
  const std::vector<std::size_t>& nodes() const noexcept { return nodes_; }

 private:
  double margin_;
  std::vector<std::size_t> nodes_;
};

/// A metric failed to be positive definite (Cholesky breakdown).
class DefinitenessError : public Error {
 public:
  DefinitenessError(const std::string& what, std::size_t node)
      : Error(what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

/// A geodesic left the computational domain.
class OutOfDomain : public Error {
 public:
  OutOfDomain(const std::string& what, double exit_parameter)
      : Error(what), exit_parameter_(exit_parameter) {}
  double exit_parameter() const noexcept { return exit_parameter_; }

 private:
  double exit_parameter_;
};

class ChartError : public Error {
 public:
  using Error::Error;
};

class ProbeInconclusive : public Error {
 public:
  using Error::Error;
};

}  // namespace yamabe
