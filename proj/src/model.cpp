#include "protosphere/model.hpp"

#include <cmath>
#include <map>
#include <random>
#include <string>

#include "protosphere/error.hpp"
#include "text_io.hpp"

namespace protosphere {

BackboneParams::BackboneParams(std::vector<AffineLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("backbone needs at least one affine layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
      throw InvalidArgument("layer " + std::to_string(l) + " has an empty weight");
    }
    if (layer.bias.size() != layer.weight.rows()) {
      throw InvalidArgument("layer " + std::to_string(l) + " bias does not match weight rows");
    }
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw InvalidArgument("layer " + std::to_string(l) + " input width does not match previous layer");
    }
  }
}

BackboneParams BackboneParams::initialize(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw InvalidArgument("layer_dims needs input and output widths");
  for (const auto w : layer_dims) {
    if (w == 0) throw InvalidArgument("layer widths must be positive");
  }
  std::mt19937_64 rng(seed);
  std::vector<AffineLayer> layers;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(layer_dims[l]);
    const auto out = static_cast<Eigen::Index>(layer_dims[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    AffineLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = dist(rng);
    }
    layers.push_back(std::move(layer));
  }
  return BackboneParams(std::move(layers));
}

std::vector<std::size_t> BackboneParams::layer_dims() const {
  std::vector<std::size_t> dims;
  if (layers_.empty()) return dims;
  dims.push_back(static_cast<std::size_t>(layers_.front().weight.cols()));
  for (const auto& layer : layers_) dims.push_back(static_cast<std::size_t>(layer.weight.rows()));
  return dims;
}

bool operator==(const BackboneParams& a, const BackboneParams& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    const auto& la = a.layers_[l];
    const auto& lb = b.layers_[l];
    if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols()) return false;
    if (la.weight != lb.weight || la.bias != lb.bias) return false;
  }
  return true;
}

ForwardTrace trace_forward(const BackboneParams& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto& layers = params.layers();
  if (layers.empty()) throw InvalidArgument("forward: empty backbone");
  if (x.size() != layers.front().weight.cols()) {
    throw InvalidArgument("forward: input width " + std::to_string(x.size()) + " does not match " +
                          std::to_string(layers.front().weight.cols()));
  }
  ForwardTrace trace;
  trace.inputs.reserve(layers.size());
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    trace.inputs.push_back(h);
    Eigen::VectorXd a = layers[l].weight * h + layers[l].bias;
    if (l + 1 < layers.size()) {
      h = a.array().tanh().matrix();
    } else {
      trace.raw_output = std::move(a);
    }
  }
  const double n = trace.raw_output.norm();
  if (n == 0.0) throw DegenerateError("forward: zero feature before normalization");
  trace.feature = trace.raw_output / n;
  return trace;
}

Eigen::VectorXd forward(const BackboneParams& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return trace_forward(params, x).feature;
}

BackboneGradients backward(const BackboneParams& params, const ForwardTrace& trace,
                           const Eigen::Ref<const Eigen::VectorXd>& upstream) {
  const auto& layers = params.layers();
  const auto& z = trace.feature;
  if (upstream.size() != z.size()) throw InvalidArgument("backward: upstream gradient has wrong size");

  BackboneGradients grads;
  grads.layers.resize(layers.size());
  // Normalization Jacobian: (I - z z^T) / ||v||.
  Eigen::VectorXd delta = (upstream - z * z.dot(upstream)) / trace.raw_output.norm();
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& in = trace.inputs[l];
    grads.layers[l].weight = delta * in.transpose();
    grads.layers[l].bias = delta;
    Eigen::VectorXd d_in = layers[l].weight.transpose() * delta;
    if (l > 0) {
      delta = (d_in.array() * (1.0 - in.array().square())).matrix();
    } else {
      grads.input = std::move(d_in);
    }
  }
  return grads;
}

BackboneGradients backward(const BackboneParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& upstream) {
  return backward(params, trace_forward(params, x), upstream);
}

double lipm_loss(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (z.size() != w.size()) throw InvalidArgument("lipm_loss: dimension mismatch");
  const double r = z.dot(w) - 1.0;
  return 0.5 * r * r;
}

Eigen::VectorXd lipm_grad(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (z.size() != w.size()) throw InvalidArgument("lipm_grad: dimension mismatch");
  return (z.dot(w) - 1.0) * w;
}

void FeatureBatch::validate(std::size_t dim, std::size_t classes) const {
  if (static_cast<std::size_t>(features.cols()) != labels.size()) {
    throw InvalidArgument("feature batch: column count does not match label count");
  }
  if (static_cast<std::size_t>(features.rows()) != dim) {
    throw InvalidArgument("feature batch: dimension mismatch");
  }
  for (const auto y : labels) {
    if (y >= classes) throw InvalidArgument("feature batch: label out of range");
  }
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

namespace {

void check_ce_shapes(const Eigen::MatrixXd& prototypes, const AssignmentMapping& a, Eigen::Index dim) {
  if (static_cast<std::size_t>(prototypes.cols()) != a.size()) {
    throw InvalidArgument("cross-entropy: assignment size does not match prototype count");
  }
  if (prototypes.rows() != dim) throw InvalidArgument("cross-entropy: dimension mismatch");
}

double sample_ce(const Eigen::Ref<const Eigen::VectorXd>& logits, std::size_t label) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(static_cast<Eigen::Index>(label));
}

struct ColumnSource {
  const Eigen::MatrixXd& m;
  auto column(std::size_t k) const { return m.col(static_cast<Eigen::Index>(k)); }
};

}  // namespace

double psc_ce_loss(const FeatureBatch& batch, const Eigen::MatrixXd& prototypes, const AssignmentMapping& a) {
  check_ce_shapes(prototypes, a, batch.features.rows());
  batch.validate(static_cast<std::size_t>(prototypes.rows()), a.size());
  if (batch.size() == 0) throw InvalidArgument("cross-entropy: empty batch");
  double total = 0.0;
  const ColumnSource src{prototypes};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto z = batch.features.col(static_cast<Eigen::Index>(i));
    total += sample_ce(class_logits(z, src, a), batch.labels[i]);
  }
  return total / static_cast<double>(batch.size());
}

PullPush psc_ce_feature_grad(const Eigen::Ref<const Eigen::VectorXd>& z, std::size_t label,
                             const Eigen::MatrixXd& prototypes, const AssignmentMapping& a) {
  check_ce_shapes(prototypes, a, z.size());
  if (label >= a.size()) throw InvalidArgument("cross-entropy: label out of range");
  const Eigen::VectorXd p = softmax(class_logits(z, ColumnSource{prototypes}, a));
  PullPush g{Eigen::VectorXd::Zero(z.size()), Eigen::VectorXd::Zero(z.size())};
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto w = prototypes.col(static_cast<Eigen::Index>(a[k]));
    const double pk = p(static_cast<Eigen::Index>(k));
    if (k == label) {
      g.pull = -(1.0 - pk) * w;
    } else {
      g.push += pk * w;
    }
  }
  return g;
}

Eigen::MatrixXd batch_probabilities(const FeatureBatch& batch, const Eigen::MatrixXd& prototypes,
                                    const AssignmentMapping& a) {
  check_ce_shapes(prototypes, a, batch.features.rows());
  Eigen::MatrixXd probs(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto z = batch.features.col(static_cast<Eigen::Index>(i));
    probs.row(static_cast<Eigen::Index>(i)) = softmax(class_logits(z, ColumnSource{prototypes}, a)).transpose();
  }
  return probs;
}

AttractRepel psc_prototype_grad(const FeatureBatch& batch, const Eigen::MatrixXd& probs, std::size_t j) {
  if (static_cast<std::size_t>(probs.rows()) != batch.size()) {
    throw InvalidArgument("prototype gradient: probability rows do not match batch size");
  }
  if (j >= static_cast<std::size_t>(probs.cols())) throw InvalidArgument("prototype gradient: class out of range");
  batch.validate(static_cast<std::size_t>(batch.features.rows()), static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double s = probs.row(i).sum();
    if (!std::isfinite(s) || std::abs(s - 1.0) > 1e-9 || (probs.row(i).array() < 0.0).any()) {
      throw InvalidArgument("prototype gradient: malformed probability row " + std::to_string(i));
    }
  }
  const auto d = batch.features.rows();
  AttractRepel g{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto z = batch.features.col(static_cast<Eigen::Index>(i));
    const double p = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (batch.labels[i] == j) {
      g.attract -= (1.0 - p) * z;
    } else {
      g.repel += p * z;
    }
  }
  return g;
}

namespace {

std::string tensor_line(const std::string& name, const Eigen::MatrixXd& m) {
  // Row-major values.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  return name + " " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " " +
         text::join_doubles(rm.data(), static_cast<std::size_t>(rm.size()), ',') + "\n";
}

std::string vector_line(const std::string& name, const Eigen::VectorXd& v) {
  return name + " " + std::to_string(v.size()) + " " +
         text::join_doubles(v.data(), static_cast<std::size_t>(v.size()), ',') + "\n";
}

struct RawTensor {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool is_vector = false;
  std::vector<double> values;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const BackboneParams& params,
                     const std::optional<Eigen::MatrixXd>& classifier) {
  std::string out = "# protosphere-checkpoint v1 dims=";
  const auto dims = params.layer_dims();
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(dims[i]);
  }
  out += '\n';
  for (std::size_t l = 0; l < params.layers().size(); ++l) {
    const auto& layer = params.layers()[l];
    out += tensor_line("layer" + std::to_string(l) + ".weight", layer.weight);
    out += vector_line("layer" + std::to_string(l) + ".bias", layer.bias);
  }
  if (classifier) out += tensor_line("classifier.weight", *classifier);
  text::write_file(path, out);
}

BackboneParams load_checkpoint(const std::filesystem::path& path, std::optional<Eigen::MatrixXd>* classifier) {
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw FormatError(path.string() + ": empty checkpoint");
  const auto header = text::parse_header(lines[0], "protosphere-checkpoint");
  const std::string hwhere = text::line_ref(path, 1);
  if (!header.contains("dims")) throw FormatError(hwhere + ": header missing 'dims'");
  std::vector<std::size_t> dims;
  for (const auto tok : text::split(header.at("dims"), ',')) {
    const auto v = text::parse_int(tok, hwhere);
    if (v <= 0) throw FormatError(hwhere + ": layer widths must be positive");
    dims.push_back(static_cast<std::size_t>(v));
  }
  if (dims.size() < 2) throw FormatError(hwhere + ": dims needs at least two widths");

  std::map<std::string, RawTensor> tensors;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const std::string at = text::line_ref(path, ln + 1);
    const auto fields = text::split(lines[ln], ' ');
    if (fields.size() != 3) throw FormatError(at + ": expected 'name shape values'");
    RawTensor t;
    const auto shape = text::split(fields[1], 'x');
    if (shape.size() == 1) {
      t.rows = text::parse_int(shape[0], at);
      t.cols = 1;
      t.is_vector = true;
    } else if (shape.size() == 2) {
      t.rows = text::parse_int(shape[0], at);
      t.cols = text::parse_int(shape[1], at);
    } else {
      throw FormatError(at + ": malformed shape '" + std::string(fields[1]) + "'");
    }
    for (const auto tok : text::split(fields[2], ',')) t.values.push_back(text::parse_double(tok, at));
    if (t.rows <= 0 || t.cols <= 0 || t.values.size() != static_cast<std::size_t>(t.rows * t.cols)) {
      throw FormatError(at + ": value count does not match shape");
    }
    tensors[std::string(fields[0])] = std::move(t);
  }

  auto take = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError(path.string() + ": missing tensor " + name);
    const auto& t = it->second;
    if (t.rows != rows || t.cols != cols) throw FormatError(path.string() + ": tensor " + name + " has wrong shape");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = t.values[static_cast<std::size_t>(r * cols + c)];
    }
    return m;
  };

  std::vector<AffineLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    AffineLayer layer;
    layer.weight = take("layer" + std::to_string(l) + ".weight", out, in);
    layer.bias = take("layer" + std::to_string(l) + ".bias", out, 1).col(0);
    layers.push_back(std::move(layer));
  }
  if (classifier) {
    classifier->reset();
    if (const auto it = tensors.find("classifier.weight"); it != tensors.end()) {
      *classifier = take("classifier.weight", it->second.rows, it->second.cols);
    }
  }
  return BackboneParams(std::move(layers));
}

}  // namespace protosphere
