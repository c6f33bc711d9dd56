#include "spanrule/metrics.hpp"

#include <nlohmann/json.hpp>

#include "spanrule/error.hpp"

namespace spanrule {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

int argmax(std::span<const double> p) {
  int best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

ClassificationMetrics classification_metrics(std::span<const int> predicted,
                                             std::span<const int> gold, int n_classes) {
  if (predicted.size() != gold.size())
    fail(ErrorCode::kInvalidArgument, "prediction and gold sizes differ");
  if (n_classes < 2) fail(ErrorCode::kInvalidArgument, "need at least two classes");
  ClassificationMetrics m;
  m.n = gold.size();
  if (m.n == 0) return m;

  const auto k = static_cast<std::size_t>(n_classes);
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto p = static_cast<std::size_t>(predicted[i]);
    auto g = static_cast<std::size_t>(gold[i]);
    if (p >= k || g >= k) fail(ErrorCode::kInvalidArgument, "class index out of range");
    if (p == g) {
      ++correct;
      ++tp[g];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  m.accuracy = ratio(correct, m.n);
  if (k == 2) {
    m.precision = ratio(tp[1], tp[1] + fp[1]);
    m.recall = ratio(tp[1], tp[1] + fn[1]);
    m.f1 = harmonic(m.precision, m.recall);
  } else {
    for (std::size_t c = 0; c < k; ++c) {
      double p = ratio(tp[c], tp[c] + fp[c]);
      double r = ratio(tp[c], tp[c] + fn[c]);
      m.precision += p;
      m.recall += r;
      m.f1 += harmonic(p, r);
    }
    m.precision /= static_cast<double>(k);
    m.recall /= static_cast<double>(k);
    m.f1 /= static_cast<double>(k);
  }
  return m;
}

nlohmann::json to_json(const ClassificationMetrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
          {"f1", m.f1}, {"n", m.n}};
}

}  // namespace spanrule
