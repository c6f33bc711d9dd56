#include "spanrule/label_model.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "spanrule/error.hpp"

namespace spanrule {
namespace {

double clamp(double x, const FitConfig& c) { return std::clamp(x, c.clamp_low, c.clamp_high); }

void check_matrix(const LabelMatrix& m, int n_classes) {
  if (n_classes < 2) fail(ErrorCode::kInvalidArgument, "need at least two classes");
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (int v : m.column(j))
      if (v < kAbstain || v >= n_classes)
        fail(ErrorCode::kInvalidArgument, "label matrix cell out of range");
}

// log P(cell = v | y) for every column, class and vote; v = -1 is abstain.
class CellTable {
 public:
  explicit CellTable(const GenerativeModel& g)
      : k_(static_cast<std::size_t>(g.n_classes)), table_(g.alpha.size() * k_ * (k_ + 1)) {
    const double wrong = 1.0 / static_cast<double>(k_ - 1);
    for (std::size_t j = 0; j < g.alpha.size(); ++j) {
      for (std::size_t y = 0; y < k_; ++y) {
        for (std::size_t v = 0; v <= k_; ++v) {
          double p;
          if (g.source_model == SourceModel::kClassConditional) {
            p = g.emission[(j * k_ + y) * (k_ + 1) + v];
          } else if (v == 0) {
            p = 1.0 - g.beta[j];
          } else {
            p = g.beta[j] * (v - 1 == y ? g.alpha[j] : (1.0 - g.alpha[j]) * wrong);
          }
          table_[(j * k_ + y) * (k_ + 1) + v] = std::log(p);
        }
      }
    }
  }

  double operator()(std::size_t j, std::size_t y, int v) const {
    return table_[(j * k_ + y) * (k_ + 1) + static_cast<std::size_t>(v + 1)];
  }

 private:
  std::size_t k_;
  std::vector<double> table_;
};

// Fills `posterior` (rows x K) and returns the marginal log-likelihood.
double e_step(const GenerativeModel& g, const LabelMatrix& m, ProbabilityRows* posterior) {
  const auto k = static_cast<std::size_t>(g.n_classes);
  const CellTable cell(g);
  std::vector<double> log_prior(k);
  for (std::size_t y = 0; y < k; ++y)
    log_prior[y] = g.prior[y] > 0.0 ? std::log(g.prior[y]) : -std::numeric_limits<double>::infinity();

  double total = 0.0;
  std::vector<double> lj(k);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    lj = log_prior;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (g.excluded[j]) continue;
      int v = m.at(i, j);
      for (std::size_t y = 0; y < k; ++y) lj[y] += cell(j, y, v);
    }
    double mx = *std::max_element(lj.begin(), lj.end());
    double s = 0.0;
    for (double x : lj) s += std::exp(x - mx);
    double lse = mx + std::log(s);
    total += lse;
    if (posterior) {
      auto& row = (*posterior)[i];
      row.resize(k);
      for (std::size_t y = 0; y < k; ++y) row[y] = std::exp(lj[y] - lse);
    }
  }
  return total;
}

double smoothing_term(const GenerativeModel& g, double a) {
  if (g.source_model != SourceModel::kClassConditional || a == 0.0) return 0.0;
  const auto k = static_cast<std::size_t>(g.n_classes);
  double s = 0.0;
  for (std::size_t j = 0; j < g.excluded.size(); ++j) {
    if (g.excluded[j]) continue;
    for (std::size_t c = 0; c < k * (k + 1); ++c) s += a * std::log(g.emission[j * k * (k + 1) + c]);
  }
  return s;
}

// alpha/beta summaries of the emission table under the current prior.
void summarize_emission(GenerativeModel& g, const FitConfig& config) {
  const auto k = static_cast<std::size_t>(g.n_classes);
  for (std::size_t j = 0; j < g.alpha.size(); ++j) {
    if (g.excluded[j]) continue;
    double fire = 0.0;
    double right = 0.0;
    for (std::size_t y = 0; y < k; ++y) {
      const double* row = &g.emission[(j * k + y) * (k + 1)];
      fire += g.prior[y] * (1.0 - row[0]);
      right += g.prior[y] * row[y + 1];
    }
    g.beta[j] = clamp(fire, config);
    g.alpha[j] = clamp(fire > 0.0 ? right / fire : config.alpha_init, config);
  }
}

}  // namespace

ProbabilityRows majority_probs(const LabelMatrix& matrix, int n_classes) {
  check_matrix(matrix, n_classes);
  const auto k = static_cast<std::size_t>(n_classes);
  ProbabilityRows out(matrix.rows(), std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    std::size_t votes = 0;
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      int v = matrix.at(i, j);
      if (v == kAbstain) continue;
      out[i][static_cast<std::size_t>(v)] += 1.0;
      ++votes;
    }
    for (double& p : out[i]) p = votes ? p / static_cast<double>(votes) : 1.0 / static_cast<double>(k);
  }
  return out;
}

GenerativeModel fit_generative(const LabelMatrix& matrix, int n_classes, const FitConfig& config) {
  check_matrix(matrix, n_classes);
  if (matrix.rows() == 0) fail(ErrorCode::kInvalidArgument, "cannot fit on zero documents");
  if (matrix.cols() == 0) fail(ErrorCode::kInvalidArgument, "cannot fit without functions");
  const auto k = static_cast<std::size_t>(n_classes);
  const std::size_t n = matrix.rows();
  const std::size_t m = matrix.cols();

  GenerativeModel g;
  g.n_classes = n_classes;
  g.column_ids = matrix.column_ids();
  g.alpha.assign(m, clamp(config.alpha_init, config));
  g.beta.assign(m, config.clamp_low);
  g.excluded.assign(m, false);
  std::vector<std::size_t> fires(m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    for (int v : matrix.column(j))
      if (v != kAbstain) ++fires[j];
    g.excluded[j] = fires[j] == 0;
    g.beta[j] = clamp(static_cast<double>(fires[j]) / static_cast<double>(n), config);
  }
  if (config.prior_init.empty()) {
    g.prior.assign(k, 1.0 / static_cast<double>(k));
  } else {
    if (config.prior_init.size() != k) fail(ErrorCode::kInvalidArgument, "prior size mismatch");
    double s = 0.0;
    for (double p : config.prior_init) {
      if (!(p >= 0.0)) fail(ErrorCode::kInvalidArgument, "negative prior");
      s += p;
    }
    if (s <= 0.0) fail(ErrorCode::kInvalidArgument, "prior sums to zero");
    for (double p : config.prior_init) g.prior.push_back(p / s);
  }

  const bool conditional = config.source_model == SourceModel::kClassConditional;
  g.source_model = config.source_model;
  if (conditional) {
    if (!(config.smoothing >= 0.0)) fail(ErrorCode::kInvalidArgument, "smoothing must be non-negative");
    // Start from the shared model's table so the first E-step matches it.
    const double wrong = 1.0 / static_cast<double>(k - 1);
    g.emission.assign(m * k * (k + 1), 0.0);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t y = 0; y < k; ++y) {
        double* row = &g.emission[(j * k + y) * (k + 1)];
        row[0] = 1.0 - g.beta[j];
        for (std::size_t v = 0; v < k; ++v)
          row[v + 1] = g.beta[j] * (v == y ? g.alpha[j] : (1.0 - g.alpha[j]) * wrong);
      }
  }

  ProbabilityRows q(n);
  double ll = e_step(g, matrix, &q);
  double objective = ll + smoothing_term(g, config.smoothing);
  g.loglik_trace.push_back(objective);
  for (int it = 1; it <= config.max_iterations; ++it) {
    if (conditional) {
      // Expected vote counts per class, smoothed and normalized per (j, y).
      const double a = config.smoothing;
      for (std::size_t j = 0; j < m; ++j) {
        if (g.excluded[j]) continue;
        std::vector<double> counts(k * (k + 1), a);
        for (std::size_t i = 0; i < n; ++i) {
          auto v = static_cast<std::size_t>(matrix.at(i, j) + 1);
          for (std::size_t y = 0; y < k; ++y) counts[y * (k + 1) + v] += q[i][y];
        }
        for (std::size_t y = 0; y < k; ++y) {
          double total = 0.0;
          for (std::size_t v = 0; v <= k; ++v) total += counts[y * (k + 1) + v];
          for (std::size_t v = 0; v <= k; ++v)
            g.emission[(j * k + y) * (k + 1) + v] = counts[y * (k + 1) + v] / total;
        }
      }
    } else {
      // beta depends on the data only; alpha on q.
      for (std::size_t j = 0; j < m; ++j) {
        if (g.excluded[j]) continue;
        double agree = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          int v = matrix.at(i, j);
          if (v != kAbstain) agree += q[i][static_cast<std::size_t>(v)];
        }
        g.alpha[j] = clamp(agree / static_cast<double>(fires[j]), config);
      }
    }
    if (config.learn_prior) {
      std::vector<double> prior(k, 0.0);
      for (const auto& row : q)
        for (std::size_t y = 0; y < k; ++y) prior[y] += row[y];
      for (std::size_t y = 0; y < k; ++y) g.prior[y] = prior[y] / static_cast<double>(n);
    }

    double next_ll = e_step(g, matrix, &q);
    double next = next_ll + smoothing_term(g, config.smoothing);
    assert(next >= objective - 1e-9 * std::max(1.0, std::abs(objective)));
    g.loglik_trace.push_back(next);
    g.iterations = it;
    double change = std::abs(next - objective);
    objective = next;
    ll = next_ll;
    if (change < config.tolerance) break;
  }
  if (conditional) summarize_emission(g, config);
  g.loglik = ll;
  return g;
}

ProbabilityRows predict_proba(const GenerativeModel& model, const LabelMatrix& matrix) {
  if (model.column_ids != matrix.column_ids())
    fail(ErrorCode::kInvalidArgument, "label matrix columns do not match the fitted model");
  check_matrix(matrix, model.n_classes);
  ProbabilityRows out(matrix.rows());
  e_step(model, matrix, &out);
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < matrix.cols() && !any; ++j)
      any = !model.excluded[j] && matrix.at(i, j) != kAbstain;
    if (!any) out[i] = model.prior;
  }
  return out;
}

double log_likelihood(const GenerativeModel& model, const LabelMatrix& matrix) {
  if (model.column_ids != matrix.column_ids())
    fail(ErrorCode::kInvalidArgument, "label matrix columns do not match the fitted model");
  return e_step(model, matrix, nullptr);
}

std::optional<LFStats> compute_lf_stats(const LabelMatrix& dev, std::span<const int> labels) {
  if (dev.rows() == 0) return std::nullopt;
  if (labels.size() != dev.rows())
    fail(ErrorCode::kInvalidArgument, "dev labels do not match matrix rows");
  LFStats stats;
  const double n = static_cast<double>(dev.rows());
  for (std::size_t j = 0; j < dev.cols(); ++j) {
    FunctionStats f;
    f.rule_id = dev.column_ids()[j];
    std::size_t fired = 0, overlap = 0, conflict = 0;
    for (std::size_t i = 0; i < dev.rows(); ++i) {
      int v = dev.at(i, j);
      if (v == kAbstain) continue;
      ++fired;
      bool other = false;
      bool disagree = false;
      for (std::size_t o = 0; o < dev.cols(); ++o) {
        if (o == j) continue;
        int w = dev.at(i, o);
        if (w == kAbstain) continue;
        other = true;
        if (w != v) disagree = true;
      }
      overlap += other;
      conflict += disagree;
      if (v == labels[i]) {
        ++f.correct;
      } else {
        ++f.incorrect;
      }
    }
    f.coverage = static_cast<double>(fired) / n;
    f.overlap = static_cast<double>(overlap) / n;
    f.conflict = static_cast<double>(conflict) / n;
    if (fired > 0) f.accuracy = static_cast<double>(f.correct) / static_cast<double>(fired);
    stats.functions.push_back(std::move(f));
  }
  return stats;
}

std::optional<ModelStats> compute_model_stats(const GenerativeModel& model, const LabelMatrix& dev,
                                              std::span<const int> labels,
                                              const std::optional<ModelStats>& previous) {
  if (dev.rows() == 0) return std::nullopt;
  if (labels.size() != dev.rows())
    fail(ErrorCode::kInvalidArgument, "dev labels do not match matrix rows");
  ProbabilityRows probs = predict_proba(model, dev);
  std::vector<int> pred;
  std::vector<int> gold;
  for (std::size_t i = 0; i < dev.rows(); ++i) {
    if (dev.row_abstains(i)) continue;
    pred.push_back(argmax(probs[i]));
    gold.push_back(labels[i]);
  }
  ModelStats s;
  s.metrics = classification_metrics(pred, gold, model.n_classes);
  s.coverage = static_cast<double>(pred.size()) / static_cast<double>(dev.rows());
  if (previous) {
    ClassificationMetrics d;
    d.accuracy = s.metrics.accuracy - previous->metrics.accuracy;
    d.precision = s.metrics.precision - previous->metrics.precision;
    d.recall = s.metrics.recall - previous->metrics.recall;
    d.f1 = s.metrics.f1 - previous->metrics.f1;
    d.n = s.metrics.n;
    s.delta = d;
    s.coverage_delta = s.coverage - previous->coverage;
  }
  return s;
}

std::string_view to_string(SourceModel m) {
  return m == SourceModel::kClassConditional ? "class_conditional" : "shared_propensity";
}

SourceModel source_model_from_string(std::string_view s) {
  if (s == "shared_propensity") return SourceModel::kSharedPropensity;
  if (s == "class_conditional") return SourceModel::kClassConditional;
  fail(ErrorCode::kInvalidArgument, "unknown source model '" + std::string(s) + "'");
}

nlohmann::json to_json(const GenerativeModel& g) {
  nlohmann::json j = {{"alpha", g.alpha},           {"beta", g.beta},
                      {"prior", g.prior},           {"column_ids", g.column_ids},
                      {"loglik", g.loglik},         {"iterations", g.iterations},
                      {"n_classes", g.n_classes},   {"excluded", g.excluded},
                      {"source_model", to_string(g.source_model)}};
  if (g.source_model == SourceModel::kClassConditional) j["emission"] = g.emission;
  return j;
}

GenerativeModel generative_model_from_json(const nlohmann::json& j) {
  GenerativeModel g;
  g.alpha = j.at("alpha").get<std::vector<double>>();
  g.beta = j.at("beta").get<std::vector<double>>();
  g.prior = j.at("prior").get<std::vector<double>>();
  g.column_ids = j.at("column_ids").get<std::vector<std::string>>();
  g.loglik = j.at("loglik").get<double>();
  g.iterations = j.at("iterations").get<int>();
  g.n_classes = j.value("n_classes", static_cast<int>(g.prior.size()));
  g.excluded = j.value("excluded", std::vector<bool>(g.alpha.size(), false));
  g.source_model = source_model_from_string(j.value("source_model", std::string("shared_propensity")));
  if (g.source_model == SourceModel::kClassConditional) {
    g.emission = j.at("emission").get<std::vector<double>>();
    auto k = static_cast<std::size_t>(g.n_classes);
    if (g.emission.size() != g.alpha.size() * k * (k + 1))
      fail(ErrorCode::kInvalidArgument, "inconsistent model snapshot");
  }
  if (g.beta.size() != g.alpha.size() || g.column_ids.size() != g.alpha.size() ||
      g.excluded.size() != g.alpha.size() || g.prior.size() != static_cast<std::size_t>(g.n_classes))
    fail(ErrorCode::kInvalidArgument, "inconsistent model snapshot");
  return g;
}

nlohmann::json to_json(const LFStats& stats) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : stats.functions) {
    arr.push_back({{"rule_id", f.rule_id},
                   {"coverage", f.coverage},
                   {"overlap", f.overlap},
                   {"conflict", f.conflict},
                   {"accuracy", f.accuracy ? nlohmann::json(*f.accuracy) : nlohmann::json()},
                   {"correct", f.correct},
                   {"incorrect", f.incorrect},
                   {"excluded", f.excluded}});
  }
  return arr;
}

nlohmann::json to_json(const ModelStats& s) {
  nlohmann::json j = to_json(s.metrics);
  j["coverage"] = s.coverage;
  if (s.delta) {
    nlohmann::json d = to_json(*s.delta);
    d.erase("n");
    d["coverage"] = *s.coverage_delta;
    j["delta"] = d;
  } else {
    j["delta"] = nullptr;
  }
  return j;
}

}  // namespace spanrule
