#include "spanrule/end_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "spanrule/error.hpp"

namespace spanrule {
namespace {

void check_shapes(std::span<const double> w, int k, std::size_t width,
                  std::span<const SparseVector> features, const ProbabilityRows& probs) {
  if (k < 2) fail(ErrorCode::kInvalidArgument, "need at least two classes");
  if (width == 0) fail(ErrorCode::kInvalidArgument, "feature width must include the bias");
  if (w.size() != static_cast<std::size_t>(k) * width)
    fail(ErrorCode::kInvalidArgument, "weight size mismatch");
  if (features.size() != probs.size())
    fail(ErrorCode::kInvalidArgument, "features and probabilities differ in length");
  for (const auto& row : probs)
    if (row.size() != static_cast<std::size_t>(k))
      fail(ErrorCode::kInvalidArgument, "probability row has the wrong width");
  for (const auto& x : features)
    for (const auto& [f, v] : x)
      if (f >= width) fail(ErrorCode::kInvalidArgument, "feature index out of range");
}

// Scores W x, then turns them into log-softmax in place; returns nothing.
void log_softmax(std::span<const double> w, std::size_t width, const SparseVector& x,
                 std::vector<double>& out) {
  for (std::size_t y = 0; y < out.size(); ++y) {
    double z = 0.0;
    const double* row = w.data() + y * width;
    for (const auto& [f, v] : x) z += row[f] * v;
    out[y] = z;
  }
  double mx = *std::max_element(out.begin(), out.end());
  double s = 0.0;
  for (double z : out) s += std::exp(z - mx);
  double lse = mx + std::log(s);
  for (double& z : out) z -= lse;
}

double l2_term(std::span<const double> w, int k, std::size_t width, double l2) {
  double s = 0.0;
  for (std::size_t y = 0; y < static_cast<std::size_t>(k); ++y)
    for (std::size_t f = 0; f + 1 < width; ++f) s += w[y * width + f] * w[y * width + f];
  return l2 * s;
}

ProbabilityRows hardened(const ProbabilityRows& probs) {
  ProbabilityRows out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i].assign(probs[i].size(), 0.0);
    out[i][static_cast<std::size_t>(argmax(probs[i]))] = 1.0;
  }
  return out;
}

}  // namespace

BowVocabulary build_vocabulary(std::span<const Document> docs, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& d : docs)
    for (const auto& t : d.tokens) ++counts[t.normalized];
  BowVocabulary v;
  v.min_count = min_count;
  for (const auto& [term, n] : counts) {
    if (n < min_count) continue;
    v.index.emplace(term, v.terms.size());
    v.terms.push_back(term);
  }
  return v;
}

SparseVector featurize(const Document& doc, const BowVocabulary& vocab) {
  std::map<std::size_t, double> counts;
  for (const auto& t : doc.tokens) {
    auto it = vocab.index.find(t.normalized);
    if (it != vocab.index.end()) counts[it->second] += 1.0;
  }
  SparseVector x(counts.begin(), counts.end());
  x.emplace_back(vocab.size(), 1.0);
  return x;
}

double expected_cross_entropy(std::span<const double> weights, int n_classes, std::size_t width,
                              std::span<const SparseVector> features, const ProbabilityRows& probs,
                              double l2) {
  check_shapes(weights, n_classes, width, features, probs);
  if (features.empty()) fail(ErrorCode::kInvalidArgument, "empty training set");
  std::vector<double> ls(static_cast<std::size_t>(n_classes));
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    log_softmax(weights, width, features[i], ls);
    for (std::size_t y = 0; y < ls.size(); ++y)
      if (probs[i][y] != 0.0) total -= probs[i][y] * ls[y];
  }
  return total / static_cast<double>(features.size()) + l2_term(weights, n_classes, width, l2);
}

std::vector<double> expected_cross_entropy_gradient(std::span<const double> weights,
                                                    int n_classes, std::size_t width,
                                                    std::span<const SparseVector> features,
                                                    const ProbabilityRows& probs, double l2) {
  check_shapes(weights, n_classes, width, features, probs);
  if (features.empty()) fail(ErrorCode::kInvalidArgument, "empty training set");
  const auto k = static_cast<std::size_t>(n_classes);
  std::vector<double> g(weights.size(), 0.0);
  std::vector<double> ls(k);
  const double inv_n = 1.0 / static_cast<double>(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    log_softmax(weights, width, features[i], ls);
    double mass = 0.0;
    for (double q : probs[i]) mass += q;
    for (std::size_t y = 0; y < k; ++y) {
      double coef = (mass * std::exp(ls[y]) - probs[i][y]) * inv_n;
      for (const auto& [f, v] : features[i]) g[y * width + f] += coef * v;
    }
  }
  for (std::size_t y = 0; y < k; ++y)
    for (std::size_t f = 0; f + 1 < width; ++f) g[y * width + f] += 2.0 * l2 * weights[y * width + f];
  return g;
}

EndModel train_noise_aware(std::span<const SparseVector> features, const ProbabilityRows& input,
                           int n_classes, std::size_t width, const EndModelConfig& config) {
  if (features.empty()) fail(ErrorCode::kInvalidArgument, "empty training set");
  if (config.epochs < 0) fail(ErrorCode::kInvalidArgument, "epochs must be non-negative");
  EndModel m;
  m.n_classes = n_classes;
  m.width = width;
  m.config = config;
  m.weights.assign(static_cast<std::size_t>(std::max(n_classes, 0)) * width, 0.0);
  check_shapes(m.weights, n_classes, width, features, input);

  std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
  for (const auto& row : input) seen[static_cast<std::size_t>(argmax(row))] = true;
  for (std::size_t y = 0; y < seen.size(); ++y)
    if (!seen[y])
      fail(ErrorCode::kInvalidArgument,
           "no training document has class " + std::to_string(y) + " as its most likely label");

  const ProbabilityRows probs = config.hard_labels ? hardened(input) : input;
  if (config.init_scale > 0.0) {
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, config.init_scale);
    for (double& w : m.weights) w = normal(rng);
  }

  double loss = expected_cross_entropy(m.weights, n_classes, width, features, probs, config.l2);
  m.loss_trace.push_back(loss);
  std::vector<double> trial(m.weights.size());
  for (int t = 1; t <= config.epochs; ++t) {
    auto g = expected_cross_entropy_gradient(m.weights, n_classes, width, features, probs, config.l2);
    double step = config.learning_rate / std::sqrt(static_cast<double>(t));
    for (int halvings = 0; halvings < 40; ++halvings, step *= 0.5) {
      for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = m.weights[i] - step * g[i];
      double next = expected_cross_entropy(trial, n_classes, width, features, probs, config.l2);
      if (std::isfinite(next) && next <= loss) {
        m.weights.swap(trial);
        trial.resize(m.weights.size());
        loss = next;
        break;
      }
    }
    m.loss_trace.push_back(loss);
  }
  return m;
}

std::vector<double> predict_proba(const EndModel& model, const SparseVector& x) {
  std::vector<double> ls(static_cast<std::size_t>(model.n_classes));
  log_softmax(model.weights, model.width, x, ls);
  for (double& v : ls) v = std::exp(v);
  return ls;
}

int predict(const EndModel& model, const SparseVector& x) { return argmax(predict_proba(model, x)); }

ClassificationMetrics evaluate(const EndModel& model, const BowVocabulary& vocab,
                               const Corpus& test) {
  if (test.documents.empty()) fail(ErrorCode::kInvalidArgument, "empty test set");
  if (vocab.width() != model.width)
    fail(ErrorCode::kInvalidArgument, "vocabulary does not match the model");
  std::vector<int> pred;
  std::vector<int> gold;
  for (const auto& d : test.documents) {
    if (!d.gold_label) fail(ErrorCode::kInvalidArgument, "test document '" + d.uid + "' has no label");
    pred.push_back(predict(model, featurize(d, vocab)));
    gold.push_back(*d.gold_label);
  }
  return classification_metrics(pred, gold, model.n_classes);
}

nlohmann::json to_json(const EndModelConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"l2", c.l2},
          {"epochs", c.epochs},               {"seed", c.seed},
          {"init_scale", c.init_scale},       {"hard_labels", c.hard_labels},
          {"min_count", c.min_count}};
}

EndModelConfig end_model_config_from_json(const nlohmann::json& j) {
  EndModelConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.l2 = j.value("l2", c.l2);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.hard_labels = j.value("hard_labels", c.hard_labels);
  c.min_count = j.value("min_count", c.min_count);
  if (c.epochs < 0 || !(c.learning_rate > 0.0) || c.l2 < 0.0 || c.init_scale < 0.0)
    fail(ErrorCode::kInvalidArgument, "invalid end-model config");
  return c;
}

nlohmann::json to_json(const EndModelReport& r) {
  return {{"split", r.split},
          {"accuracy", r.metrics.accuracy},
          {"precision", r.metrics.precision},
          {"recall", r.metrics.recall},
          {"f1", r.metrics.f1},
          {"n_train_covered", r.n_train_covered},
          {"n_test", r.n_test},
          {"config", to_json(r.config)},
          {"seed", r.config.seed}};
}

}  // namespace spanrule
