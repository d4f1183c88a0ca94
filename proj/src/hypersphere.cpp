#include "protosphere/hypersphere.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "protosphere/error.hpp"
#include "text_io.hpp"

namespace protosphere {

namespace {

void check_subset(const Eigen::MatrixXd& w, std::span<const std::size_t> subset) {
  if (subset.empty()) throw InvalidArgument("uniformity: subset must not be empty");
  const auto count = static_cast<std::size_t>(w.cols());
  std::vector<bool> used(count, false);
  for (const auto i : subset) {
    if (i >= count) {
      throw InvalidArgument("uniformity: subset index " + std::to_string(i) + " out of range");
    }
    if (used[i]) throw InvalidArgument("uniformity: duplicate subset index " + std::to_string(i));
    used[i] = true;
  }
}

void check_temperature(double t) {
  if (!(t > 0.0)) throw InvalidArgument("temperature must be positive");
}

// Kernel rows for the subset: K(r, j) = exp(-t ||w_{s_r} - w_j||^2).
Eigen::MatrixXd subset_kernel(const Eigen::MatrixXd& w, std::span<const std::size_t> subset,
                              double t) {
  const auto c = w.cols();
  const auto m = static_cast<Eigen::Index>(subset.size());
  Eigen::MatrixXd k(m, c);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto wi = w.col(static_cast<Eigen::Index>(subset[static_cast<std::size_t>(r)]));
    for (Eigen::Index j = 0; j < c; ++j) {
      k(r, j) = std::exp(-t * (wi - w.col(j)).squaredNorm());
    }
  }
  return k;
}

void normalize_columns(Eigen::MatrixXd& w) {
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    const double n = w.col(j).norm();
    if (n == 0.0) throw DegenerateError("prototype column collapsed to zero");
    w.col(j) /= n;
  }
}

Eigen::MatrixXd normal_matrix(std::size_t dim, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
  }
  return w;
}

}  // namespace

PrototypeMatrix::PrototypeMatrix(Eigen::MatrixXd columns, double unit_tolerance)
    : columns_(std::move(columns)) {
  if (columns_.rows() < 2) throw InvalidArgument("prototype dimension must be at least 2");
  if (columns_.cols() < 2) throw InvalidArgument("prototype count must be at least 2");
  for (Eigen::Index j = 0; j < columns_.cols(); ++j) {
    const double n = columns_.col(j).norm();
    if (!std::isfinite(n) || std::abs(n - 1.0) > unit_tolerance) {
      throw InvalidArgument("unit-norm violation at column " + std::to_string(j));
    }
  }
}

std::uint64_t PrototypeMatrix::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(columns_.data());
  const auto n = static_cast<std::size_t>(columns_.size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void UniformityConfig::validate(std::size_t count) const {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (iterations == 0) throw InvalidArgument("iterations must be positive");
  if (subset_size > count) {
    throw InvalidArgument("subset size " + std::to_string(subset_size) + " exceeds count " +
                          std::to_string(count));
  }
}

double gaussian_potential(const Eigen::Ref<const Eigen::VectorXd>& u,
                          const Eigen::Ref<const Eigen::VectorXd>& v, double t) {
  if (u.size() != v.size()) throw InvalidArgument("gaussian_potential: dimension mismatch");
  check_temperature(t);
  return std::exp(-t * (u - v).squaredNorm());
}

double uniformity_loss(const Eigen::MatrixXd& w, std::span<const std::size_t> subset, double t) {
  check_temperature(t);
  check_subset(w, subset);
  const Eigen::MatrixXd k = subset_kernel(w, subset, t);
  return std::log(k.sum() / static_cast<double>(subset.size()));
}

Eigen::MatrixXd uniformity_gradient(const Eigen::MatrixXd& w, std::span<const std::size_t> subset,
                                    double t) {
  check_temperature(t);
  check_subset(w, subset);
  const Eigen::MatrixXd k = subset_kernel(w, subset, t);
  const double total = k.sum();
  const double scale = -2.0 * t / total;

  // d/dw_i of k(i,j) = -2t k(i,j) (w_i - w_j), and symmetrically for w_j.
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  const Eigen::VectorXd row_sums = k.rowwise().sum();
  const Eigen::VectorXd col_sums = k.colwise().sum().transpose();
  const Eigen::MatrixXd w_k = w * k.transpose();  // column r: sum_j k(r,j) w_j
  Eigen::MatrixXd w_sub(w.rows(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t r = 0; r < subset.size(); ++r) {
    w_sub.col(static_cast<Eigen::Index>(r)) = w.col(static_cast<Eigen::Index>(subset[r]));
  }
  for (std::size_t r = 0; r < subset.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(subset[r]);
    const auto rr = static_cast<Eigen::Index>(r);
    grad.col(i) += w.col(i) * row_sums(rr) - w_k.col(rr);
  }
  grad += w * col_sums.asDiagonal();
  grad -= w_sub * k;
  grad *= scale;
  return grad;
}

PrototypeMatrix estimate_prototypes(std::size_t dim, std::size_t count,
                                    const UniformityConfig& config,
                                    const EstimationObserver& observer) {
  if (dim < 2) throw InvalidArgument("prototype dimension must be at least 2");
  if (count < 2) throw InvalidArgument("prototype count must be at least 2");
  config.validate(count);

  const std::size_t subset_size = config.subset_size == 0 ? count : config.subset_size;
  Eigen::MatrixXd w = normal_matrix(dim, count, config.seed);
  normalize_columns(w);

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> all(count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> subset;
  if (subset_size == count) subset = all;

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    if (subset_size < count) {
      subset.clear();
      std::sample(all.begin(), all.end(), std::back_inserter(subset), subset_size, rng);
    }
    w -= config.learning_rate * uniformity_gradient(w, subset, config.temperature);
    normalize_columns(w);
    if (observer) observer(it, w);
  }
  return PrototypeMatrix(std::move(w));
}

PrototypeMatrix circle_prototypes(std::size_t count) {
  if (count < 2) throw InvalidArgument("circle_prototypes: count must be at least 2");
  Eigen::MatrixXd w(2, static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
    w(0, static_cast<Eigen::Index>(k)) = std::cos(angle);
    w(1, static_cast<Eigen::Index>(k)) = std::sin(angle);
  }
  return PrototypeMatrix(std::move(w));
}

PrototypeMatrix random_prototypes(std::size_t dim, std::size_t count, std::uint64_t seed) {
  Eigen::MatrixXd w = normal_matrix(dim, count, seed);
  normalize_columns(w);
  return PrototypeMatrix(std::move(w));
}

GeometryReport geometry_report(const PrototypeMatrix& w) {
  const auto c = w.count();
  const Eigen::MatrixXd gram = w.matrix().transpose() * w.matrix();
  const double etf_cos = -1.0 / static_cast<double>(c - 1);

  GeometryReport r;
  r.min_cos = std::numeric_limits<double>::infinity();
  r.max_cos = -std::numeric_limits<double>::infinity();
  double angle_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i + 1; j < c; ++j) {
      const double cos_ij = std::clamp(
          gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), -1.0, 1.0);
      angle_sum += std::acos(cos_ij);
      r.min_cos = std::min(r.min_cos, cos_ij);
      r.max_cos = std::max(r.max_cos, cos_ij);
      r.etf_gap = std::max(r.etf_gap, std::abs(cos_ij - etf_cos));
      ++pairs;
    }
  }
  r.apad = angle_sum / static_cast<double>(pairs);
  r.min_pairwise_distance = 1.0 - r.max_cos;
  return r;
}

void save_prototypes(const std::filesystem::path& path, const PrototypeMatrix& w,
                     const PrototypeFileInfo& info) {
  std::string out = "# protosphere-prototypes v1 d=" + std::to_string(w.dim()) +
                    " c=" + std::to_string(w.count()) + " t=" + text::format_double(info.temperature) +
                    " seed=" + std::to_string(info.seed) + "\n";
  for (std::size_t k = 0; k < w.count(); ++k) {
    out += text::join_doubles(w.column(k).data(), w.dim(), ',');
    out += '\n';
  }
  text::write_file(path, out);
}

PrototypeMatrix load_prototypes(const std::filesystem::path& path, PrototypeFileInfo* info) {
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw FormatError(path.string() + ": empty prototype file");
  const auto header = text::parse_header(lines[0], "protosphere-prototypes");
  const std::string where = text::line_ref(path, 1);
  for (const char* key : {"d", "c", "t", "seed"}) {
    if (!header.contains(key)) throw FormatError(where + ": header missing '" + key + "'");
  }
  const auto d = text::parse_int(header.at("d"), where);
  const auto c = text::parse_int(header.at("c"), where);
  if (d < 2 || c < 2) throw FormatError(where + ": header requires d >= 2 and c >= 2");
  if (info) {
    info->temperature = text::parse_double(header.at("t"), where);
    info->seed = static_cast<std::uint64_t>(std::stoull(header.at("seed")));
  }

  std::size_t rows = 0;
  Eigen::MatrixXd w(d, c);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const std::string at = text::line_ref(path, ln + 1);
    if (rows >= static_cast<std::size_t>(c)) throw FormatError(at + ": more than c=" + std::to_string(c) + " rows");
    const auto parts = text::split(lines[ln], ',');
    if (parts.size() != static_cast<std::size_t>(d)) {
      throw FormatError(at + ": width mismatch, expected " + std::to_string(d) + " values, got " +
                        std::to_string(parts.size()));
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(rows)) = text::parse_double(parts[i], at);
    }
    ++rows;
  }
  if (rows != static_cast<std::size_t>(c)) {
    throw FormatError(path.string() + ": expected " + std::to_string(c) + " prototype rows, got " +
                      std::to_string(rows));
  }
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    if (std::abs(w.col(j).norm() - 1.0) > 1e-6) {
      throw FormatError(path.string() + ": unit-norm violation at column " + std::to_string(j));
    }
  }
  return PrototypeMatrix(std::move(w), 1e-6);
}

}  // namespace protosphere
