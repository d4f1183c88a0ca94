#include "protosphere/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "protosphere/error.hpp"
#include "text_io.hpp"

namespace protosphere {

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::lipm: return "lipm";
    case LossMode::psc_ce: return "psc_ce";
    case LossMode::fixed_ce: return "fixed_ce";
  }
  return "lipm";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "lipm") return LossMode::lipm;
  if (s == "psc_ce") return LossMode::psc_ce;
  if (s == "fixed_ce") return LossMode::fixed_ce;
  throw InvalidArgument("unknown loss mode '" + s + "'");
}

std::string to_string(ClassWeighting w) {
  return w == ClassWeighting::none ? "none" : "inverse-frequency";
}

ClassWeighting parse_class_weighting(const std::string& s) {
  if (s == "none") return ClassWeighting::none;
  if (s == "inverse-frequency" || s == "inverse_frequency") return ClassWeighting::inverse_frequency;
  throw InvalidArgument("unknown class weighting '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw InvalidArgument("epochs must be positive");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) throw InvalidArgument("sgd momentum must lie in [0, 1)");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (!(tau_prime > 0.0)) throw InvalidArgument("tau_prime must be positive");
  for (const auto h : hidden_dims) {
    if (h == 0) throw InvalidArgument("hidden widths must be positive");
  }
}

std::size_t reassignment_interval(std::size_t steps_per_epoch, double tau_prime) {
  if (!(tau_prime > 0.0)) throw InvalidArgument("tau_prime must be positive");
  const double tau = std::floor(static_cast<double>(steps_per_epoch) / tau_prime);
  return std::max<std::size_t>(1, static_cast<std::size_t>(tau));
}

std::vector<double> class_weights(const std::vector<std::size_t>& counts) {
  if (counts.empty()) throw InvalidArgument("class_weights: no classes");
  double total = 0.0;
  for (const auto n : counts) {
    if (n == 0) throw InvalidArgument("class_weights: zero count");
    total += static_cast<double>(n);
  }
  const double mean = total / static_cast<double>(counts.size());
  std::vector<double> w(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) w[k] = mean / static_cast<double>(counts[k]);
  return w;
}

namespace {

struct ParamBuffers {
  std::vector<AffineLayer> layers;

  static ParamBuffers zeros_like(const BackboneParams& p) {
    ParamBuffers b;
    for (const auto& l : p.layers()) {
      b.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    }
    return b;
  }

  void set_zero() {
    for (auto& l : layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }

  void add(const BackboneGradients& g) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += g.layers[i].weight;
      layers[i].bias += g.layers[i].bias;
    }
  }
};

// PyTorch-style heavy ball: v = mu v + g; p -= lr v.
void sgd_step(BackboneParams& params, ParamBuffers& velocity, const ParamBuffers& grad, double lr, double mu) {
  for (std::size_t i = 0; i < grad.layers.size(); ++i) {
    auto& v = velocity.layers[i];
    v.weight = mu * v.weight + grad.layers[i].weight;
    v.bias = mu * v.bias + grad.layers[i].bias;
    params.layers()[i].weight -= lr * v.weight;
    params.layers()[i].bias -= lr * v.bias;
  }
}

struct ColumnSource {
  const Eigen::MatrixXd& m;
  auto column(std::size_t k) const { return m.col(static_cast<Eigen::Index>(k)); }
};

double sample_ce(const Eigen::VectorXd& logits, std::size_t label) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits(static_cast<Eigen::Index>(label));
}

std::size_t predict(const Eigen::VectorXd& z, const Eigen::MatrixXd& classifier, const AssignmentMapping& a) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double s = z.dot(classifier.col(static_cast<Eigen::Index>(a[k])));
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

}  // namespace

TrainState train(const VectorDataset& dataset, const PrototypeMatrix& w, const TrainConfig& config,
                 const VectorDataset* eval, const BackboneParams* initial_params) {
  config.validate();
  const auto c = w.count();
  const auto d = w.dim();
  if (dataset.class_count() != c) {
    throw InvalidArgument("dataset has " + std::to_string(dataset.class_count()) + " classes but there are " +
                          std::to_string(c) + " prototypes");
  }
  for (std::size_t k = 0; k < c; ++k) {
    if (dataset.per_class_counts()[k] == 0) throw InvalidArgument("class " + std::to_string(k) + " has no samples");
  }
  const VectorDataset& eval_set = eval ? *eval : dataset;
  if (eval_set.class_count() != c || eval_set.input_dim() != dataset.input_dim()) {
    throw InvalidArgument("evaluation set is incompatible with the training set");
  }

  std::vector<std::size_t> dims{dataset.input_dim()};
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(d);

  BackboneParams params = initial_params ? *initial_params : BackboneParams::initialize(dims, config.seed);
  if (params.layer_dims().front() != dataset.input_dim() || params.output_dim() != d) {
    throw InvalidArgument("initial backbone does not match dataset width and prototype dimension");
  }

  const bool learn_classifier = config.loss_mode == LossMode::psc_ce;
  AssignmentMapping initial = config.initial_assignment == InitialAssignment::random && !learn_classifier
                                  ? AssignmentMapping::random(c, config.seed + 2)
                                  : AssignmentMapping::identity(c);
  TrainState state{std::move(params), std::move(initial), ClassRepresentatives(d, c), 0, {}, std::nullopt};
  if (learn_classifier) state.classifier = w.matrix();
  const bool dynamic = !config.freeze_assignment && !learn_classifier;

  std::vector<double> weights(c, 1.0);
  if (config.class_weighting == ClassWeighting::inverse_frequency) weights = class_weights(dataset.per_class_counts());

  const std::size_t n = dataset.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t tau = reassignment_interval(steps_per_epoch, config.tau_prime);

  ParamBuffers grad = ParamBuffers::zeros_like(state.params);
  ParamBuffers velocity = ParamBuffers::zeros_like(state.params);
  Eigen::MatrixXd classifier_velocity;
  if (learn_classifier) classifier_velocity = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c));

  std::mt19937_64 rng(config.seed + 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const AssignmentMapping at_start = state.assignment;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;

    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - begin);
      grad.set_zero();

      const Eigen::MatrixXd& targets = learn_classifier ? *state.classifier : w.matrix();
      FeatureBatch scaled;  // weight_i * z_i / B, for the classifier gradient
      std::vector<std::size_t> batch_labels;
      Eigen::MatrixXd batch_probs;
      if (learn_classifier) {
        scaled.features.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(end - begin));
        batch_probs.resize(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(c));
      }

      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t i = order[b];
        const std::size_t y = dataset.label(i);
        const double weight = weights[y];
        const ForwardTrace trace = trace_forward(state.params, dataset.input(i));
        const Eigen::VectorXd& z = trace.feature;
        state.representatives.update(y, z, config.alpha);

        Eigen::VectorXd upstream;
        if (config.loss_mode == LossMode::lipm) {
          loss_sum += weight * lipm_sample_loss(z, y, w, state.assignment);
          upstream = lipm_grad(z, w.column(state.assignment[y]));
        } else {
          const Eigen::VectorXd logits = class_logits(z, ColumnSource{targets}, state.assignment);
          loss_sum += weight * sample_ce(logits, y);
          const PullPush pp = psc_ce_feature_grad(z, y, targets, state.assignment);
          upstream = pp.pull + pp.push;
          if (learn_classifier) {
            const auto col = static_cast<Eigen::Index>(b - begin);
            scaled.features.col(col) = weight * inv_b * z;
            scaled.labels.push_back(y);
            batch_probs.row(col) = softmax(logits).transpose();
          }
        }
        grad.add(backward(state.params, trace, weight * inv_b * upstream));
      }

      sgd_step(state.params, velocity, grad, config.learning_rate, config.sgd_momentum);
      if (learn_classifier) {
        Eigen::MatrixXd classifier_grad(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c));
        for (std::size_t j = 0; j < c; ++j) {
          const AttractRepel g = psc_prototype_grad(scaled, batch_probs, j);
          classifier_grad.col(static_cast<Eigen::Index>(j)) = g.attract + g.repel;
        }
        classifier_velocity = config.sgd_momentum * classifier_velocity + classifier_grad;
        *state.classifier -= config.learning_rate * classifier_velocity;
      }

      ++global_step;
      if (dynamic && global_step % tau == 0 && state.representatives.all_seen()) {
        state.assignment = reassign(state.representatives, w);
      }
    }

    state.epoch = epoch;
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.eval_accuracy = learn_classifier ? evaluate_classifier(state.params, *state.classifier, state.assignment, eval_set)
                                         : evaluate(state.params, w, state.assignment, eval_set);
    rec.assignment_churn = assignment_churn(at_start, state.assignment);
    rec.wall_time_ms = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count());
    state.history.push_back(rec);
  }
  return state;
}

double evaluate_classifier(const BackboneParams& params, const Eigen::MatrixXd& classifier,
                           const AssignmentMapping& a, const VectorDataset& dataset) {
  if (dataset.size() == 0) throw InvalidArgument("evaluate: empty dataset");
  if (static_cast<std::size_t>(classifier.cols()) != a.size()) {
    throw InvalidArgument("evaluate: assignment size does not match classifier");
  }
  if (params.output_dim() != static_cast<std::size_t>(classifier.rows())) {
    throw InvalidArgument("evaluate: feature dimension does not match classifier");
  }
  if (dataset.class_count() != a.size()) throw InvalidArgument("evaluate: class count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Eigen::VectorXd z = forward(params, dataset.input(i));
    correct += predict(z, classifier, a) == dataset.label(i) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

double evaluate(const BackboneParams& params, const PrototypeMatrix& w, const AssignmentMapping& a,
                const VectorDataset& dataset) {
  return evaluate_classifier(params, w.matrix(), a, dataset);
}

std::string metrics_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["eval_accuracy"] = r.eval_accuracy;
  j["assignment_churn"] = r.assignment_churn;
  j["wall_time_ms"] = r.wall_time_ms;
  return j.dump();
}

void write_metrics_log(const std::filesystem::path& path, const std::vector<MetricsRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    out += metrics_line(r);
    out += '\n';
  }
  text::write_file(path, out);
}

std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path) {
  std::vector<MetricsRecord> out;
  const auto lines = text::read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(lines[ln]);
      MetricsRecord r;
      r.epoch = j.at("epoch").get<std::size_t>();
      r.train_loss = j.at("train_loss").get<double>();
      r.eval_accuracy = j.at("eval_accuracy").get<double>();
      r.assignment_churn = j.at("assignment_churn").get<double>();
      r.wall_time_ms = j.at("wall_time_ms").get<std::uint64_t>();
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(text::line_ref(path, ln + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace protosphere
