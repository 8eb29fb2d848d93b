#include "gpabc/design.hpp"

#include <bit>
#include <cmath>
#include <sstream>
#include <string>

#include "gpabc/errors.hpp"
#include "gpabc/sobol_table.hpp"

namespace gpabc {

std::vector<SobolDirection> parse_sobol_directions(std::string_view text) {
  std::vector<SobolDirection> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  int expected_dim = 2;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#' || line[first] == 'd') continue;
    std::istringstream row(line);
    int dim = 0;
    SobolDirection dir;
    if (!(row >> dim >> dir.degree >> dir.coefficients)) {
      throw ConfigError("malformed Sobol direction row: '" + line + "'");
    }
    if (dim != expected_dim++) throw ConfigError("Sobol direction rows must be consecutive from 2");
    for (unsigned i = 0; i < dir.degree; ++i) {
      std::uint32_t m = 0;
      if (!(row >> m)) throw ConfigError("Sobol direction row has too few m values: '" + line + "'");
      if (m % 2 == 0 || m >= (1u << (i + 1))) {
        throw ConfigError("Sobol m values must be odd and below 2^i: '" + line + "'");
      }
      dir.initial.push_back(m);
    }
    rows.push_back(std::move(dir));
  }
  return rows;
}

const std::vector<SobolDirection>& bundled_sobol_directions() {
  static const std::vector<SobolDirection> table =
      parse_sobol_directions(detail::kSobolDirectionTable);
  return table;
}

std::size_t SobolStream::max_dims() { return bundled_sobol_directions().size() + 1; }

SobolStream::SobolStream(std::size_t dims, std::uint64_t start_index) : dims_(dims) {
  if (dims == 0) throw ConfigError("Sobol stream needs at least one dimension");
  if (dims > max_dims()) {
    throw ConfigError("Sobol stream supports at most " + std::to_string(max_dims()) +
                      " dimensions, got " + std::to_string(dims));
  }
  v_.resize(dims);
  for (unsigned k = 0; k < kBits; ++k) v_[0][k] = 1u << (31 - k);
  const auto& table = bundled_sobol_directions();
  for (std::size_t j = 1; j < dims; ++j) {
    const SobolDirection& dir = table[j - 1];
    const unsigned s = dir.degree;
    auto& v = v_[j];
    for (unsigned k = 0; k < s && k < kBits; ++k) v[k] = dir.initial[k] << (31 - k);
    for (unsigned k = s; k < kBits; ++k) {
      v[k] = v[k - s] ^ (v[k - s] >> s);
      for (unsigned i = 1; i < s; ++i) {
        if ((dir.coefficients >> (s - 1 - i)) & 1u) v[k] ^= v[k - i];
      }
    }
  }
  seek(start_index);
}

void SobolStream::seek(std::uint64_t index) {
  if (index >= (std::uint64_t{1} << kBits)) throw ConfigError("Sobol index out of range");
  index_ = index;
  state_.assign(dims_, 0);
  const std::uint64_t gray = index ^ (index >> 1);
  for (unsigned k = 0; k < kBits; ++k) {
    if ((gray >> k) & 1u) {
      for (std::size_t j = 0; j < dims_; ++j) state_[j] ^= v_[j][k];
    }
  }
}

Eigen::VectorXd SobolStream::next_point() {
  if (index_ + 1 >= (std::uint64_t{1} << kBits)) throw NumericalError("Sobol stream exhausted");
  Eigen::VectorXd x(static_cast<Eigen::Index>(dims_));
  for (std::size_t j = 0; j < dims_; ++j) {
    x[static_cast<Eigen::Index>(j)] = std::ldexp(static_cast<double>(state_[j]), -32);
  }
  // Gray-code step: flip the direction number of the lowest zero bit of the index.
  const unsigned c = static_cast<unsigned>(std::countr_one(index_));
  for (std::size_t j = 0; j < dims_; ++j) state_[j] ^= v_[j][c];
  ++index_;
  return x;
}

Eigen::MatrixXd SobolStream::next(std::size_t n) {
  if (n == 0) throw std::invalid_argument("SobolStream::next needs n >= 1");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims_));
  for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = next_point();
  return out;
}

Eigen::VectorXd disperse(const Eigen::VectorXd& u, const ParameterSpace& space,
                         double inflation) {
  if (static_cast<std::size_t>(u.size()) != space.dims()) {
    throw std::invalid_argument("disperse: point dimension mismatch");
  }
  Eigen::VectorXd theta(u.size());
  for (std::size_t j = 0; j < space.dims(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const Marginal& m = space.marginal(j);
    theta[jj] = inflation == 1.0 ? m.quantile(u[jj]) : m.inflated(inflation).quantile(u[jj]);
  }
  return theta;
}

ExtendResult extend_design(Design& design, SobolStream& stream, const ParameterSpace& space,
                           std::size_t n_new, const Membership& membership,
                           const ExtendOptions& options) {
  if (stream.dims() != space.dims()) throw std::invalid_argument("stream/space dimension mismatch");
  ExtendResult result;
  auto draw_one = [&] {
    const std::uint64_t index = stream.index();
    const Eigen::VectorXd theta = disperse(stream.next_point(), space, options.inflation);
    const bool keep = membership(theta);
    ++result.draws;
    result.drawn_index.push_back(index);
    result.drawn_kept.push_back(keep);
    result.drawn_points.push_back(theta);
    if (keep) {
      result.kept.points.push_back(theta);
      result.kept.sobol_index.push_back(index);
    }
  };

  if (options.mode == ExtendMode::fixed) {
    for (std::size_t i = 0; i < n_new; ++i) draw_one();
  } else {
    while (result.kept.size() < n_new) {
      if (result.draws >= options.max_draws) {
        std::ostringstream msg;
        msg << "design extension reached " << options.max_draws << " draws with only "
            << result.kept.size() << " of " << n_new << " points kept (acceptance rate "
            << static_cast<double>(result.kept.size()) / static_cast<double>(result.draws) << ")";
        throw NumericalError(msg.str());
      }
      draw_one();
    }
  }
  design.points.insert(design.points.end(), result.kept.points.begin(), result.kept.points.end());
  design.sobol_index.insert(design.sobol_index.end(), result.kept.sobol_index.begin(),
                            result.kept.sobol_index.end());
  return result;
}

}  // namespace gpabc
