#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spanrule/metrics.hpp"
#include "spanrule/rule.hpp"

namespace spanrule {

using ProbabilityRows = std::vector<std::vector<double>>;

/// Vote shares per row; rows where every function abstains are uniform.
ProbabilityRows majority_probs(const LabelMatrix& matrix, int n_classes);

enum class SourceModel {
  /// Function j fires with probability beta[j] whatever the class; when it
  /// fires it emits the true class with probability alpha[j], otherwise a
  /// uniformly chosen wrong class.
  kSharedPropensity,
  /// Full per-class emission table P(vote | y), abstention included. Needed
  /// when functions only ever vote one class: the shared model then reaches
  /// its likelihood maximum by putting every row in one class.
  kClassConditional,
};

std::string_view to_string(SourceModel m);
SourceModel source_model_from_string(std::string_view s);

struct FitConfig {
  SourceModel source_model = SourceModel::kSharedPropensity;
  int max_iterations = 100;
  double tolerance = 1e-6;  // stop when |Δ log-likelihood| falls below
  double alpha_init = 0.7;
  double clamp_low = 0.01;
  double clamp_high = 0.99;
  /// Starting class prior; uniform when empty.
  std::vector<double> prior_init;
  /// When false the prior stays at prior_init.
  bool learn_prior = true;
  /// kClassConditional: Dirichlet pseudo-count added to every table cell.
  double smoothing = 0.01;
};

/// Conditionally independent source model. For kClassConditional, alpha and
/// beta are summaries (accuracy when firing, firing rate) derived from the
/// emission table under the prior.
struct GenerativeModel {
  SourceModel source_model = SourceModel::kSharedPropensity;
  int n_classes = 2;
  std::vector<double> prior;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<std::string> column_ids;
  /// Zero-coverage columns: not fitted, ignored by predict_proba.
  std::vector<bool> excluded;
  /// kClassConditional only: P(vote = v | y) at [(j * K + y) * (K + 1) + v + 1].
  std::vector<double> emission;
  double loglik = 0.0;
  int iterations = 0;
  /// EM objective before the first and after every M-step: the
  /// log-likelihood, plus the smoothing term for kClassConditional.
  std::vector<double> loglik_trace;
};

/// EM from alpha = alpha_init, beta = column coverage, prior = prior_init.
/// Requires at least one row and one column.
GenerativeModel fit_generative(const LabelMatrix& matrix, int n_classes,
                               const FitConfig& config = {});

/// Posterior P(Y | row). Throws when the matrix columns differ from the
/// model's.
ProbabilityRows predict_proba(const GenerativeModel& model, const LabelMatrix& matrix);

/// Marginal log-likelihood of the matrix under the model.
double log_likelihood(const GenerativeModel& model, const LabelMatrix& matrix);

struct FunctionStats {
  std::string rule_id;
  double coverage = 0.0;
  double overlap = 0.0;
  double conflict = 0.0;
  std::optional<double> accuracy;  // unset when the function never fires
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  bool excluded = false;  // zero coverage on the fitting split
};

struct LFStats {
  std::vector<FunctionStats> functions;
};

/// Per-function dev statistics. nullopt when the dev split is empty.
std::optional<LFStats> compute_lf_stats(const LabelMatrix& dev_matrix,
                                        std::span<const int> dev_labels);

struct ModelStats {
  ClassificationMetrics metrics;  // over dev rows with at least one vote
  double coverage = 0.0;          // fraction of dev rows with at least one vote
  std::optional<ClassificationMetrics> delta;
  std::optional<double> coverage_delta;
};

/// Label-model quality on the dev split, with deltas against `previous`.
/// nullopt when the dev split is empty.
std::optional<ModelStats> compute_model_stats(const GenerativeModel& model,
                                              const LabelMatrix& dev_matrix,
                                              std::span<const int> dev_labels,
                                              const std::optional<ModelStats>& previous);

nlohmann::json to_json(const GenerativeModel& model);
GenerativeModel generative_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LFStats& stats);
nlohmann::json to_json(const ModelStats& stats);

}  // namespace spanrule
