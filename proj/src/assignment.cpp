#include "protosphere/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "protosphere/error.hpp"
#include "text_io.hpp"

namespace protosphere {

namespace {

// Returns an empty string when `mapping` is a permutation, else the reason.
std::string permutation_violation(std::span<const std::size_t> mapping) {
  std::vector<bool> used(mapping.size(), false);
  for (std::size_t j = 0; j < mapping.size(); ++j) {
    const auto k = mapping[j];
    if (k >= mapping.size()) {
      return "prototype index " + std::to_string(k) + " out of range at label " + std::to_string(j);
    }
    if (used[k]) return "duplicate prototype index " + std::to_string(k);
    used[k] = true;
  }
  return {};
}

}  // namespace

AssignmentMapping::AssignmentMapping(std::vector<std::size_t> mapping) : mapping_(std::move(mapping)) {
  if (mapping_.empty()) throw InvalidArgument("assignment must not be empty");
  if (auto why = permutation_violation(mapping_); !why.empty()) throw InvalidArgument(why);
}

AssignmentMapping AssignmentMapping::identity(std::size_t count) {
  std::vector<std::size_t> m(count);
  std::iota(m.begin(), m.end(), std::size_t{0});
  return AssignmentMapping(std::move(m));
}

AssignmentMapping AssignmentMapping::random(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> m(count);
  std::iota(m.begin(), m.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(m.begin(), m.end(), rng);
  return AssignmentMapping(std::move(m));
}

std::size_t AssignmentMapping::label_of(std::size_t prototype) const {
  const auto it = std::find(mapping_.begin(), mapping_.end(), prototype);
  if (it == mapping_.end()) throw InvalidArgument("prototype index out of range");
  return static_cast<std::size_t>(it - mapping_.begin());
}

ClassRepresentatives::ClassRepresentatives(std::size_t dim, std::size_t count)
    : columns_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count))),
      seen_(count, false) {
  if (dim == 0 || count == 0) throw InvalidArgument("representatives need positive dim and count");
}

bool ClassRepresentatives::all_seen() const {
  return std::all_of(seen_.begin(), seen_.end(), [](bool s) { return s; });
}

void ClassRepresentatives::update(std::size_t label, const Eigen::Ref<const Eigen::VectorXd>& z,
                                  double alpha) {
  if (label >= count()) throw InvalidArgument("representative label out of range");
  if (static_cast<std::size_t>(z.size()) != dim()) throw InvalidArgument("feature dimension mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (std::abs(z.norm() - 1.0) > 1e-6) throw InvalidArgument("feature must be unit-norm");

  auto col = columns_.col(static_cast<Eigen::Index>(label));
  if (!seen_[label]) {
    col = z;
    seen_[label] = true;
    return;
  }
  const Eigen::VectorXd blended = alpha * col + (1.0 - alpha) * z;
  const double n = blended.norm();
  if (n <= 1e-12) throw DegenerateError("degenerate representative update for label " + std::to_string(label));
  col = blended / n;
}

ClassRepresentatives ClassRepresentatives::from_columns(const Eigen::MatrixXd& columns) {
  ClassRepresentatives q(static_cast<std::size_t>(columns.rows()), static_cast<std::size_t>(columns.cols()));
  for (Eigen::Index j = 0; j < columns.cols(); ++j) q.update(static_cast<std::size_t>(j), columns.col(j), 0.0);
  return q;
}

ClassRepresentatives update_representative(ClassRepresentatives q, std::size_t label,
                                           const Eigen::Ref<const Eigen::VectorXd>& z,
                                           double alpha) {
  q.update(label, z, alpha);
  return q;
}

CostMatrix::CostMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols()) throw InvalidArgument("cost matrix must be square");
  if (entries_.rows() == 0) throw InvalidArgument("cost matrix must not be empty");
  if (!entries_.allFinite()) throw InvalidArgument("cost matrix has non-finite entries");
}

double CostMatrix::total(const AssignmentMapping& a) const {
  if (a.size() != size()) throw InvalidArgument("assignment size does not match cost matrix");
  double sum = 0.0;
  for (std::size_t j = 0; j < size(); ++j) sum += (*this)(j, a[j]);
  return sum;
}

CostMatrix build_cost_matrix(const ClassRepresentatives& q, const PrototypeMatrix& w) {
  if (q.dim() != w.dim()) throw InvalidArgument("representatives and prototypes differ in dimension");
  if (q.count() != w.count()) throw InvalidArgument("representatives and prototypes differ in count");
  for (std::size_t j = 0; j < q.count(); ++j) {
    if (!q.seen(j)) {
      throw InvalidArgument("class " + std::to_string(j) + " has no representative yet");
    }
  }
  return CostMatrix(-(q.matrix().transpose() * w.matrix()));
}

AssignmentMapping reassign(const ClassRepresentatives& q, const PrototypeMatrix& w) {
  return hungarian_solve(build_cost_matrix(q, w));
}

double assignment_churn(const AssignmentMapping& prev, const AssignmentMapping& next) {
  if (prev.size() != next.size()) throw InvalidArgument("assignment_churn: length mismatch");
  std::size_t changed = 0;
  for (std::size_t j = 0; j < prev.size(); ++j) changed += prev[j] != next[j] ? 1 : 0;
  return static_cast<double>(changed) / static_cast<double>(prev.size());
}

PermutationSummary summarize_permutation(const AssignmentMapping& a) {
  PermutationSummary s;
  std::vector<bool> visited(a.size(), false);
  for (std::size_t start = 0; start < a.size(); ++start) {
    if (visited[start]) continue;
    std::size_t len = 0;
    for (auto j = start; !visited[j]; j = a[j]) {
      visited[j] = true;
      ++len;
    }
    if (len == 1) {
      ++s.fixed_points;
    } else {
      s.cycle_lengths.push_back(len);
    }
  }
  std::sort(s.cycle_lengths.rbegin(), s.cycle_lengths.rend());
  return s;
}

void save_assignment(const std::filesystem::path& path, const AssignmentMapping& a) {
  std::string out = "# protosphere-assignment v1 c=" + std::to_string(a.size()) + "\n";
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (j > 0) out += ' ';
    out += std::to_string(a[j]);
  }
  out += '\n';
  text::write_file(path, out);
}

AssignmentMapping load_assignment(const std::filesystem::path& path) {
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw FormatError(path.string() + ": empty assignment file");
  const auto header = text::parse_header(lines[0], "protosphere-assignment");
  const std::string where = text::line_ref(path, 1);
  if (!header.contains("c")) throw FormatError(where + ": header missing 'c'");
  const auto c = text::parse_int(header.at("c"), where);
  if (c < 1) throw FormatError(where + ": c must be positive");

  std::vector<std::size_t> mapping;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string at = text::line_ref(path, ln + 1);
    for (const auto tok : text::split(text::trim(lines[ln]), ' ')) {
      if (tok.empty()) continue;
      const auto v = text::parse_int(tok, at);
      if (v < 0) throw FormatError(at + ": negative prototype index");
      mapping.push_back(static_cast<std::size_t>(v));
    }
  }
  if (mapping.size() != static_cast<std::size_t>(c)) {
    throw FormatError(path.string() + ": expected " + std::to_string(c) + " entries, got " +
                      std::to_string(mapping.size()));
  }
  if (auto why = permutation_violation(mapping); !why.empty()) {
    throw FormatError(path.string() + ": " + why);
  }
  return AssignmentMapping(std::move(mapping));
}

}  // namespace protosphere
