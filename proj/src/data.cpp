#include "protosphere/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "protosphere/error.hpp"
#include "text_io.hpp"

namespace protosphere {

VectorDataset::VectorDataset(std::size_t class_count, Eigen::MatrixXd inputs, std::vector<std::size_t> labels)
    : class_count_(class_count), inputs_(std::move(inputs)), labels_(std::move(labels)), counts_(class_count, 0) {
  if (class_count_ == 0) throw InvalidArgument("dataset needs at least one class");
  if (inputs_.rows() == 0) throw InvalidArgument("dataset input dimension must be positive");
  if (static_cast<std::size_t>(inputs_.cols()) != labels_.size()) {
    throw InvalidArgument("dataset: sample count does not match label count");
  }
  for (const auto y : labels_) {
    if (y >= class_count_) throw InvalidArgument("dataset: label " + std::to_string(y) + " out of range");
    ++counts_[y];
  }
}

bool operator==(const VectorDataset& a, const VectorDataset& b) {
  return a.class_count_ == b.class_count_ && a.labels_ == b.labels_ && a.inputs_.rows() == b.inputs_.rows() &&
         a.inputs_.cols() == b.inputs_.cols() && a.inputs_ == b.inputs_;
}

namespace {

constexpr std::size_t kMaxRejections = 10000;

Eigen::MatrixXd draw_means(const MixtureSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto p = static_cast<Eigen::Index>(spec.input_dim);
  const double max_cos = std::cos(spec.min_angle);
  Eigen::MatrixXd means(p, static_cast<Eigen::Index>(spec.classes));
  for (std::size_t k = 0; k < spec.classes; ++k) {
    std::size_t attempts = 0;
    while (true) {
      if (++attempts > kMaxRejections) {
        throw InvalidArgument("class means too crowded: could not place mean " + std::to_string(k) +
                              " after 10000 attempts");
      }
      Eigen::VectorXd m(p);
      for (Eigen::Index i = 0; i < p; ++i) m(i) = normal(rng);
      const double n = m.norm();
      if (n == 0.0) continue;
      m /= n;
      bool ok = true;
      for (std::size_t j = 0; j < k && ok; ++j) ok = m.dot(means.col(static_cast<Eigen::Index>(j))) <= max_cos;
      if (ok) {
        means.col(static_cast<Eigen::Index>(k)) = m;
        break;
      }
    }
  }
  return means;
}

void check_mixture(const MixtureSpec& spec) {
  if (spec.classes < 2) throw InvalidArgument("mixture needs at least 2 classes");
  if (spec.per_class < 1) throw InvalidArgument("mixture needs at least 1 sample per class");
  if (spec.input_dim < 1) throw InvalidArgument("mixture input dimension must be positive");
  if (!(spec.spread >= 0.0)) throw InvalidArgument("mixture spread must be non-negative");
  if (!(spec.min_angle >= 0.0)) throw InvalidArgument("mixture min_angle must be non-negative");
}

}  // namespace

Eigen::MatrixXd mixture_means(const MixtureSpec& spec) {
  check_mixture(spec);
  std::mt19937_64 rng(spec.seed);
  return draw_means(spec, rng);
}

VectorDataset generate_gaussian_mixture(const MixtureSpec& spec) {
  check_mixture(spec);
  std::mt19937_64 rng(spec.seed);
  const Eigen::MatrixXd means = draw_means(spec, rng);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto p = static_cast<Eigen::Index>(spec.input_dim);
  const std::size_t n = spec.classes * spec.per_class;
  Eigen::MatrixXd inputs(p, static_cast<Eigen::Index>(n));
  std::vector<std::size_t> labels(n);
  std::size_t i = 0;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    for (std::size_t s = 0; s < spec.per_class; ++s, ++i) {
      auto col = inputs.col(static_cast<Eigen::Index>(i));
      for (Eigen::Index r = 0; r < p; ++r) col(r) = means(r, static_cast<Eigen::Index>(k)) + spec.spread * normal(rng);
      labels[i] = k;
    }
  }
  return VectorDataset(spec.classes, std::move(inputs), std::move(labels));
}

std::vector<std::size_t> long_tail_counts(std::size_t classes, const LongTailSpec& spec) {
  if (classes < 2) throw InvalidArgument("long tail needs at least 2 classes");
  if (!(spec.imbalance_factor > 0.0 && spec.imbalance_factor <= 1.0)) {
    throw InvalidArgument("imbalance factor must lie in (0, 1]");
  }
  if (spec.max_per_class == 0) throw InvalidArgument("max_per_class must be positive");
  std::vector<std::size_t> counts(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    const double exponent = static_cast<double>(k) / static_cast<double>(classes - 1);
    counts[k] = static_cast<std::size_t>(
        std::llround(static_cast<double>(spec.max_per_class) * std::pow(spec.imbalance_factor, exponent)));
  }
  return counts;
}

VectorDataset apply_long_tail(const VectorDataset& dataset, const LongTailSpec& spec, std::uint64_t seed) {
  const auto c = dataset.class_count();
  const auto targets = long_tail_counts(c, spec);
  std::vector<std::vector<std::size_t>> by_class(c);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.label(i)].push_back(i);
  for (std::size_t k = 0; k < c; ++k) {
    if (by_class[k].size() < spec.max_per_class) {
      throw InvalidArgument("class " + std::to_string(k) + " has " + std::to_string(by_class[k].size()) +
                            " samples, fewer than max_per_class=" + std::to_string(spec.max_per_class));
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < c; ++k) {
    std::sample(by_class[k].begin(), by_class[k].end(), std::back_inserter(keep), targets[k], rng);
  }
  std::sort(keep.begin(), keep.end());

  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(dataset.input_dim()), static_cast<Eigen::Index>(keep.size()));
  std::vector<std::size_t> labels(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    inputs.col(static_cast<Eigen::Index>(i)) = dataset.input(keep[i]);
    labels[i] = dataset.label(keep[i]);
  }
  return VectorDataset(c, std::move(inputs), std::move(labels));
}

void save_dataset(const std::filesystem::path& path, const VectorDataset& dataset) {
  std::string out = "# protosphere-dataset v1 n=" + std::to_string(dataset.size()) +
                    " p=" + std::to_string(dataset.input_dim()) + " c=" + std::to_string(dataset.class_count()) + "\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out += text::join_doubles(dataset.input(i).data(), dataset.input_dim(), ',');
    out += ',';
    out += std::to_string(dataset.label(i));
    out += '\n';
  }
  text::write_file(path, out);
}

VectorDataset load_dataset(const std::filesystem::path& path) {
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw FormatError(path.string() + ": empty dataset file");
  const auto header = text::parse_header(lines[0], "protosphere-dataset");
  const std::string hwhere = text::line_ref(path, 1);
  for (const char* key : {"n", "p", "c"}) {
    if (!header.contains(key)) throw FormatError(hwhere + ": malformed header, missing '" + key + "'");
  }
  const auto n = text::parse_int(header.at("n"), hwhere);
  const auto p = text::parse_int(header.at("p"), hwhere);
  const auto c = text::parse_int(header.at("c"), hwhere);
  if (n < 0 || p < 1 || c < 1) throw FormatError(hwhere + ": malformed header values");

  Eigen::MatrixXd inputs(p, n);
  std::vector<std::size_t> labels;
  labels.reserve(static_cast<std::size_t>(n));
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const std::string at = text::line_ref(path, ln + 1);
    if (labels.size() >= static_cast<std::size_t>(n)) throw FormatError(at + ": more rows than n=" + std::to_string(n));
    const auto parts = text::split(lines[ln], ',');
    if (parts.size() != static_cast<std::size_t>(p) + 1) {
      throw FormatError(at + ": width mismatch, expected " + std::to_string(p) + " values and a label, got " +
                        std::to_string(parts.size()) + " fields");
    }
    const auto col = static_cast<Eigen::Index>(labels.size());
    for (Eigen::Index r = 0; r < p; ++r) inputs(r, col) = text::parse_double(parts[static_cast<std::size_t>(r)], at);
    const auto y = text::parse_int(parts.back(), at);
    if (y < 0 || y >= c) {
      throw FormatError(at + ": label " + std::to_string(y) + " out of range [0, " + std::to_string(c) + ")");
    }
    labels.push_back(static_cast<std::size_t>(y));
  }
  if (labels.size() != static_cast<std::size_t>(n)) {
    throw FormatError(path.string() + ": expected " + std::to_string(n) + " rows, got " + std::to_string(labels.size()));
  }
  return VectorDataset(static_cast<std::size_t>(c), std::move(inputs), std::move(labels));
}

}  // namespace protosphere
