#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phasecycle {

using Cx = std::complex<double>;
using CxVec = std::vector<Cx>;
using RealVec = std::vector<double>;
using Shape = std::vector<std::size_t>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

/// Base of all library errors. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes or sizes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A parameter or configuration entry is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data is missing, unreadable or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// An iteration produced non-finite values or diverged.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_str(const Shape& shape);

/// Principal value of a phase in (-pi, pi].
inline double wrap_phase(double p) {
  double w = p - kTwoPi * std::ceil((p - kPi) / kTwoPi);
  return w;
}

CxVec to_complex(std::span<const double> x);
RealVec real_part(std::span<const Cx> x);

double norm2(std::span<const Cx> x);
double norm2(std::span<const double> x);
Cx dot(std::span<const Cx> x, std::span<const Cx> y);  // sum conj(x) * y

}  // namespace phasecycle
