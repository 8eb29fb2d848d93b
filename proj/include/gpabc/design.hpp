#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gpabc/model.hpp"

namespace gpabc {

/// One row of the direction-number table.
struct SobolDirection {
  unsigned degree = 0;       // s
  unsigned coefficients = 0; // a
  std::vector<std::uint32_t> initial;  // m_1..m_s
};

/// Parses the "d s a m_1 .. m_s" table format. Comment lines start with '#';
/// a header line starting with 'd' is skipped.
std::vector<SobolDirection> parse_sobol_directions(std::string_view text);

/// Bundled table (dimensions 2..21).
const std::vector<SobolDirection>& bundled_sobol_directions();

/// Resumable base-2 Sobol stream with Gray-code ordering and 32-bit precision.
/// Index 0 is the origin; design streams start at index 1 by default.
class SobolStream {
 public:
  static constexpr unsigned kBits = 32;

  explicit SobolStream(std::size_t dims, std::uint64_t start_index = 1);

  std::size_t dims() const { return dims_; }
  std::uint64_t index() const { return index_; }
  /// Largest dimension the bundled table supports.
  static std::size_t max_dims();

  /// Next n points as rows of an n x dims matrix in [0,1)^p.
  Eigen::MatrixXd next(std::size_t n);
  Eigen::VectorXd next_point();

  /// Direction numbers v_k (k = 1..32) for dimension j, as 32-bit integers.
  const std::array<std::uint32_t, kBits>& directions(std::size_t j) const { return v_[j]; }

 private:
  void seek(std::uint64_t index);

  std::size_t dims_;
  std::uint64_t index_ = 0;
  std::vector<std::array<std::uint32_t, kBits>> v_;
  std::vector<std::uint32_t> state_;
};

/// theta_j = F_j^{-1}(u_j) under the (optionally inflated) marginals.
Eigen::VectorXd disperse(const Eigen::VectorXd& u, const ParameterSpace& space,
                         double inflation = 1.0);

/// Design points with the Sobol index each was drawn at.
struct Design {
  std::vector<Eigen::VectorXd> points;
  std::vector<std::uint64_t> sobol_index;

  std::size_t size() const { return points.size(); }
};

enum class ExtendMode {
  fixed,   ///< draw exactly n_new candidates, keep those inside the membership set
  target,  ///< draw until n_new candidates are kept
};

struct ExtendOptions {
  ExtendMode mode = ExtendMode::fixed;
  double inflation = 1.0;
  std::uint64_t max_draws = 1'000'000;
};

struct ExtendResult {
  Design kept;
  std::uint64_t draws = 0;
  /// Sobol index of each candidate drawn, and whether it was kept.
  std::vector<std::uint64_t> drawn_index;
  std::vector<bool> drawn_kept;
  std::vector<Eigen::VectorXd> drawn_points;
};

using Membership = std::function<bool(const Eigen::VectorXd&)>;

/// Draws Sobol points, disperses them into the prior support and filters by membership.
/// Target mode throws NumericalError when max_draws is reached first.
ExtendResult extend_design(Design& design, SobolStream& stream, const ParameterSpace& space,
                           std::size_t n_new, const Membership& membership,
                           const ExtendOptions& options = {});

}  // namespace gpabc
