#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stokesbie {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Thrown for invalid curves, panelizations, refinement plans, hole placement.
class GeometryError : public std::runtime_error {
public:
  explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

// Kernel evaluated at coincident source/target off the diagonal path.
class SingularEvaluationError : public std::runtime_error {
public:
  explicit SingularEvaluationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A block factorization hit a numerically singular pivot.  `where` names the
// tree node or matrix that failed.
class SingularMatrixError : public std::runtime_error {
public:
  SingularMatrixError(const std::string& msg, std::string where_)
      : std::runtime_error(msg + " at " + where_), where(std::move(where_)) {}
  std::string where;
};

// Iterative solve failed; carries the best iterate found so far.
class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& msg, Vec best, std::vector<double> history)
      : std::runtime_error(msg), best_iterate(std::move(best)),
        residual_history(std::move(history)) {}
  Vec best_iterate;
  std::vector<double> residual_history;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace stokesbie
