#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace matte {

using Scalar = double;
using Index  = Eigen::Index;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

template <class T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using VectorT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Input failed a contract or schema check. CLI maps this to exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A computation produced non-finite or otherwise unusable values. Exit code 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Latent/observation dimensions: z = [c, s] with dim(c) = d_c, dim(s) = d_s,
// observations live in R^{d_x}.
struct PartitionSpec {
  int d_c = 0;
  int d_s = 0;
  int d_x = 0;

  int d_z() const { return d_c + d_s; }

  void validate() const {
    if (d_c < 1 || d_s < 1)
      throw ValidationError("PartitionSpec: d_c and d_s must be >= 1");
    if (d_x < d_z())
      throw ValidationError("PartitionSpec: d_x must be >= d_c + d_s");
  }

  bool is_content(Index j) const { return j >= 0 && j < d_c; }
  bool is_style(Index j) const { return j >= d_c && j < d_z(); }
};

}  // namespace matte
