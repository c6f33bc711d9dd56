#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spanrule/corpus.hpp"
#include "spanrule/label_model.hpp"
#include "spanrule/metrics.hpp"

namespace spanrule {

/// Term index built from training documents only.
struct BowVocabulary {
  std::map<std::string, std::size_t> index;
  std::vector<std::string> terms;  // terms[index[t]] == t
  std::size_t min_count = 2;

  std::size_t size() const { return terms.size(); }
  /// Feature width including the trailing bias column.
  std::size_t width() const { return terms.size() + 1; }
};

/// Terms with at least `min_count` occurrences across `docs`, indexed in
/// lexicographic order.
BowVocabulary build_vocabulary(std::span<const Document> docs, std::size_t min_count = 2);

/// Sorted (column, value) pairs.
using SparseVector = std::vector<std::pair<std::size_t, double>>;

/// Token counts over the vocabulary followed by the bias column (value 1 at
/// index vocab.size()). Out-of-vocabulary tokens are dropped.
SparseVector featurize(const Document& doc, const BowVocabulary& vocab);

struct EndModelConfig {
  double learning_rate = 0.1;  // step t uses learning_rate / sqrt(t)
  double l2 = 1e-4;            // not applied to the bias column
  int epochs = 100;
  std::uint64_t seed = 42;
  double init_scale = 0.0;     // > 0: Gaussian init with this std-dev
  bool hard_labels = false;    // train on argmax of the probabilities
  std::size_t min_count = 2;
};

struct EndModel {
  int n_classes = 2;
  std::size_t width = 0;        // features per class, bias last
  std::vector<double> weights;  // row-major n_classes x width
  EndModelConfig config;
  std::vector<double> loss_trace;  // objective before the first and after every epoch

  double weight(int y, std::size_t f) const {
    return weights[static_cast<std::size_t>(y) * width + f];
  }
};

/// mean_i sum_y probs[i][y] * -log softmax(W x_i)[y] + l2 * |W without bias|^2
double expected_cross_entropy(std::span<const double> weights, int n_classes, std::size_t width,
                              std::span<const SparseVector> features, const ProbabilityRows& probs,
                              double l2);

/// Analytic gradient of expected_cross_entropy, same layout as the weights.
std::vector<double> expected_cross_entropy_gradient(std::span<const double> weights,
                                                    int n_classes, std::size_t width,
                                                    std::span<const SparseVector> features,
                                                    const ProbabilityRows& probs, double l2);

/// Full-batch gradient descent. A step that would raise the objective is
/// halved until it does not, so loss_trace is non-increasing. Throws on an
/// empty training set or when some class is nobody's argmax.
EndModel train_noise_aware(std::span<const SparseVector> features, const ProbabilityRows& probs,
                           int n_classes, std::size_t width, const EndModelConfig& config = {});

std::vector<double> predict_proba(const EndModel& model, const SparseVector& x);
int predict(const EndModel& model, const SparseVector& x);

/// Metrics against gold labels. Throws on an empty or unlabeled test corpus.
ClassificationMetrics evaluate(const EndModel& model, const BowVocabulary& vocab,
                               const Corpus& test);

struct EndModelReport {
  std::string split = "test";
  ClassificationMetrics metrics;
  std::size_t n_train_covered = 0;
  std::size_t n_test = 0;
  EndModelConfig config;
};

/// {split, accuracy, precision, recall, f1, n_train_covered, n_test, config, seed}
nlohmann::json to_json(const EndModelReport& report);
nlohmann::json to_json(const EndModelConfig& config);
EndModelConfig end_model_config_from_json(const nlohmann::json& j);

}  // namespace spanrule
