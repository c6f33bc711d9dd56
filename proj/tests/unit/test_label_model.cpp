#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "spanrule/error.hpp"
#include "spanrule/label_model.hpp"
#include "testkit.hpp"

using namespace spanrule;

namespace {

LabelMatrix matrix_of(std::vector<std::vector<int>> rows) {
  std::size_t n = rows.size();
  std::size_t m = n ? rows[0].size() : 0;
  std::vector<std::vector<int>> cols(m, std::vector<int>(n));
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < m; ++j) {
    ids.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) cols[j][i] = rows[i][j];
  }
  return LabelMatrix(n, ids, cols);
}

double brute_log_likelihood(const GenerativeModel& g, const LabelMatrix& m) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<int> votes;
    std::vector<double> a, b;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (g.excluded[j]) continue;
      votes.push_back(m.at(i, j));
      a.push_back(g.alpha[j]);
      b.push_back(g.beta[j]);
    }
    double p = 0.0;
    for (std::size_t y = 0; y < g.prior.size(); ++y) {
      double q = g.prior[y];
      for (std::size_t j = 0; j < votes.size(); ++j) {
        if (votes[j] == kAbstain) q *= 1 - b[j];
        else if (votes[j] == static_cast<int>(y)) q *= b[j] * a[j];
        else q *= b[j] * (1 - a[j]) / static_cast<double>(g.prior.size() - 1);
      }
      p += q;
    }
    total += std::log(p);
  }
  return total;
}

double argmax_accuracy(const ProbabilityRows& p, const std::vector<int>& truth, const LabelMatrix& m) {
  std::size_t right = 0, n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (m.row_abstains(i)) continue;
    ++n;
    right += argmax(p[i]) == truth[i];
  }
  return static_cast<double>(right) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("majority_probs") {
  auto p = majority_probs(matrix_of({{1, 1, 0}, {kAbstain, kAbstain, kAbstain}, {0, kAbstain, kAbstain}}), 2);
  CHECK(p[0][0] == doctest::Approx(1.0 / 3));
  CHECK(p[0][1] == doctest::Approx(2.0 / 3));
  CHECK(p[1] == std::vector<double>{0.5, 0.5});
  CHECK(p[2] == std::vector<double>{1.0, 0.0});
}

TEST_CASE("predict_proba matches Bayes' rule") {
  GenerativeModel g;
  g.n_classes = 2;
  g.prior = {0.5, 0.5};
  g.alpha = {0.9, 0.6, 0.8};
  g.beta = {0.5, 0.5, 0.5};
  g.column_ids = {"f0", "f1", "f2"};
  g.excluded = {false, false, false};
  auto m = matrix_of({{1, 1, 0}, {kAbstain, kAbstain, kAbstain}, {1, 1, 1}, {0, kAbstain, 1}});
  auto p = predict_proba(g, m);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto expect = testkit::bayes_posterior(m.row(i), g.alpha, g.beta, g.prior);
    CHECK(p[i][0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(p[i][0] + p[i][1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(p[1] == std::vector<double>{0.5, 0.5});
  CHECK(argmax(p[2]) == 1);
  CHECK(log_likelihood(g, m) == doctest::Approx(brute_log_likelihood(g, m)).epsilon(1e-12));

  auto wrong = LabelMatrix(4, {"f0", "f1", "zz"}, {m.column(0), m.column(1), m.column(2)});
  CHECK_THROWS_AS(predict_proba(g, wrong), Error);
}

TEST_CASE("all-abstain rows get the class prior") {
  auto s = testkit::sample_matrix(1, 200, {0.8, 0.7}, {0.3, 0.3}, {0.7, 0.3});
  auto g = fit_generative(s.matrix, 2);
  auto p = predict_proba(g, s.matrix);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (s.matrix.row_abstains(i)) CHECK(p[i] == g.prior);
}

TEST_CASE("EM recovers accuracies of a sampled model") {
  double err = 0.0;
  int count = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.6, 0.9);
    std::vector<double> alpha(6);
    for (double& a : alpha) a = u(rng);
    auto s = testkit::sample_matrix(seed * 100, 500, alpha, std::vector<double>(6, 0.5), {0.5, 0.5});
    auto g = fit_generative(s.matrix, 2);
    for (std::size_t j = 0; j < 6; ++j) {
      err += std::abs(g.alpha[j] - alpha[j]);
      CHECK(g.beta[j] == doctest::Approx(0.5).epsilon(0.15));
      ++count;
    }
    for (std::size_t t = 1; t < g.loglik_trace.size(); ++t) CHECK(g.loglik_trace[t] >= g.loglik_trace[t - 1] - 1e-9);
    CHECK(g.loglik == doctest::Approx(log_likelihood(g, s.matrix)));
    CHECK(g.iterations <= 100);
  }
  CHECK(err / count <= 0.05);
}

TEST_CASE("two copies of a perfect function") {
  std::vector<std::vector<int>> rows;
  std::mt19937_64 rng(2);
  std::vector<int> truth;
  for (int i = 0; i < 200; ++i) {
    int y = static_cast<int>(rng() % 2);
    int v = rng() % 2 ? y : kAbstain;
    truth.push_back(y);
    rows.push_back({v, v});
  }
  auto m = matrix_of(rows);
  auto g = fit_generative(m, 2);
  CHECK(g.alpha[0] == doctest::Approx(0.99));
  CHECK(g.alpha[1] == doctest::Approx(0.99));
  auto p = predict_proba(g, m);
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i][0] != kAbstain) CHECK(argmax(p[i]) == rows[i][0]);

  // Brute-force grid over a shared alpha: the likelihood keeps rising toward the clamp.
  GenerativeModel probe = g;
  double best = -1e300, best_a = 0;
  for (double a = 0.5; a <= 0.99 + 1e-12; a += 0.01) {
    probe.alpha = {a, a};
    double ll = log_likelihood(probe, m);
    if (ll > best) best = ll, best_a = a;
  }
  CHECK(best_a == doctest::Approx(0.99));
}

TEST_CASE("single function: posterior argmax follows its vote") {
  auto m = matrix_of({{1}, {0}, {kAbstain}, {1}});
  auto g = fit_generative(m, 2);
  auto p = predict_proba(g, m);
  auto mv = majority_probs(m, 2);
  for (std::size_t i = 0; i < 4; ++i)
    if (!m.row_abstains(i)) CHECK(argmax(p[i]) == argmax(mv[i]));
}

TEST_CASE("column permutation permutes parameters and keeps posteriors") {
  auto s = testkit::sample_matrix(9, 300, {0.9, 0.65, 0.75, 0.8}, {0.6, 0.4, 0.5, 0.3}, {0.5, 0.5});
  auto g = fit_generative(s.matrix, 2);
  std::vector<std::size_t> order = {2, 0, 3, 1};
  auto pm = s.matrix.permuted(order);
  auto h = fit_generative(pm, 2);
  for (std::size_t k = 0; k < order.size(); ++k) {
    CHECK(h.alpha[k] == doctest::Approx(g.alpha[order[k]]).epsilon(1e-9));
    CHECK(h.beta[k] == doctest::Approx(g.beta[order[k]]).epsilon(1e-9));
  }
  auto p = predict_proba(g, s.matrix);
  auto q = predict_proba(h, pm);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i][1] == doctest::Approx(q[i][1]).epsilon(1e-9));
}

TEST_CASE("three classes") {
  auto s = testkit::sample_matrix(4, 600, {0.85, 0.7, 0.8, 0.75, 0.9}, std::vector<double>(5, 0.5), {0.3, 0.3, 0.4});
  auto g = fit_generative(s.matrix, 3);
  auto p = predict_proba(g, s.matrix);
  for (const auto& row : p) CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(argmax_accuracy(p, s.truth, s.matrix) >= argmax_accuracy(majority_probs(s.matrix, 3), s.truth, s.matrix));
}

TEST_CASE("zero-coverage functions are excluded") {
  auto m = matrix_of({{1, kAbstain}, {0, kAbstain}, {1, kAbstain}});
  auto g = fit_generative(m, 2);
  CHECK(g.excluded == std::vector<bool>{false, true});
  auto p = predict_proba(g, m);
  CHECK(p.size() == 3);
  CHECK_THROWS_AS(fit_generative(LabelMatrix(0, {}, {}), 2), Error);
}

TEST_CASE("fixed prior") {
  auto s = testkit::sample_matrix(5, 300, {0.8, 0.8}, {0.5, 0.5}, {0.5, 0.5});
  FitConfig c;
  c.learn_prior = false;
  c.prior_init = {3.0, 1.0};
  auto g = fit_generative(s.matrix, 2, c);
  CHECK(g.prior == std::vector<double>{0.75, 0.25});
}

TEST_CASE("class-conditional sources separate one-sided functions") {
  // Every function votes one class only, as rules written from single
  // examples usually do.
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  const std::vector<int> side = {1, 1, 1, 0, 0, 0};
  const std::vector<double> hit = {0.5, 0.4, 0.3, 0.45, 0.35, 0.3};
  const double noise = 0.05;
  std::vector<std::vector<int>> rows;
  std::vector<int> truth;
  for (int i = 0; i < 800; ++i) {
    int y = u(rng) < 0.45 ? 1 : 0;
    truth.push_back(y);
    std::vector<int> row;
    for (std::size_t j = 0; j < side.size(); ++j) {
      double p = side[j] == y ? hit[j] : noise;
      row.push_back(u(rng) < p ? side[j] : kAbstain);
    }
    rows.push_back(row);
  }
  auto m = matrix_of(rows);
  FitConfig c;
  c.source_model = SourceModel::kClassConditional;
  auto g = fit_generative(m, 2, c);
  CHECK(g.source_model == SourceModel::kClassConditional);
  for (std::size_t t = 1; t < g.loglik_trace.size(); ++t) CHECK(g.loglik_trace[t] >= g.loglik_trace[t - 1] - 1e-9);
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t y = 0; y < 2; ++y) {
      double row_sum = 0;
      for (std::size_t v = 0; v < 3; ++v) row_sum += g.emission[(j * 2 + y) * 3 + v];
      CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  auto p = predict_proba(g, m);
  double acc = argmax_accuracy(p, truth, m);
  CHECK(acc > 0.85);
  CHECK(acc >= argmax_accuracy(majority_probs(m, 2), truth, m));
  for (std::size_t j = 0; j < side.size(); ++j) CHECK(g.alpha[j] > 0.7);

  auto back = generative_model_from_json(nlohmann::json::parse(to_json(g).dump()));
  CHECK(back.emission == g.emission);
  auto q = predict_proba(back, m);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(q[i] == p[i]);
}

TEST_CASE("model JSON round-trip") {
  auto s = testkit::sample_matrix(3, 100, {0.8, 0.7, 0.6}, {0.5, 0.5, 0.5}, {0.5, 0.5});
  auto g = fit_generative(s.matrix, 2);
  auto j = to_json(g);
  for (const char* key : {"alpha", "beta", "prior", "column_ids", "loglik", "iterations"}) CHECK(j.contains(key));
  auto back = generative_model_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.alpha == g.alpha);
  CHECK(back.beta == g.beta);
  CHECK(back.prior == g.prior);
  CHECK(back.column_ids == g.column_ids);
}

TEST_CASE("LF statistics") {
  // f0 fires on 3 of 4 docs, 2 correct; f1 and f2 have disjoint coverage.
  auto m = matrix_of({{1, 1, kAbstain}, {1, kAbstain, 0}, {0, kAbstain, kAbstain}, {kAbstain, kAbstain, kAbstain}});
  std::vector<int> gold = {1, 0, 0, 1};
  auto st = compute_lf_stats(m, gold);
  REQUIRE(st);
  const auto& f0 = st->functions[0];
  CHECK(f0.coverage == 0.75);
  CHECK(*f0.accuracy == doctest::Approx(2.0 / 3));
  CHECK(f0.correct == 2);
  CHECK(f0.incorrect == 1);
  CHECK(f0.overlap == 0.5);
  CHECK(f0.conflict == 0.25);

  auto disjoint = matrix_of({{1, kAbstain}, {kAbstain, 0}});
  auto ds = compute_lf_stats(disjoint, std::vector<int>{1, 0});
  CHECK(ds->functions[0].overlap == 0.0);
  CHECK(ds->functions[0].conflict == 0.0);

  auto silent = matrix_of({{kAbstain}});
  CHECK_FALSE(compute_lf_stats(silent, std::vector<int>{1})->functions[0].accuracy.has_value());
  CHECK_FALSE(compute_lf_stats(LabelMatrix(0, {"f"}, {{}}), std::vector<int>{}).has_value());
}

TEST_CASE("LF statistics ordering invariant") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = testkit::sample_matrix(seed, 60, {0.7, 0.8, 0.6, 0.9}, {0.3, 0.6, 0.5, 0.2}, {0.5, 0.5});
    auto st = compute_lf_stats(s.matrix, s.truth);
    for (const auto& f : st->functions) {
      CHECK(f.conflict <= f.overlap);
      CHECK(f.overlap <= f.coverage);
      CHECK(f.coverage <= 1.0);
    }
  }
}

TEST_CASE("model statistics and deltas") {
  auto s = testkit::sample_matrix(6, 200, {0.8, 0.7, 0.9}, {0.4, 0.4, 0.4}, {0.5, 0.5});
  auto g = fit_generative(s.matrix, 2);
  auto first = compute_model_stats(g, s.matrix, s.truth, std::nullopt);
  REQUIRE(first);
  CHECK_FALSE(first->delta.has_value());
  std::size_t covered = 0;
  for (std::size_t i = 0; i < s.matrix.rows(); ++i) covered += !s.matrix.row_abstains(i);
  CHECK(first->coverage == static_cast<double>(covered) / 200.0);
  CHECK(first->metrics.n == covered);

  ModelStats prev;
  prev.metrics.f1 = 0.60;
  prev.metrics.accuracy = 0.5;
  prev.coverage = 0.25;
  auto next = compute_model_stats(g, s.matrix, s.truth, prev);
  CHECK(next->delta->f1 == next->metrics.f1 - 0.60);
  CHECK(next->delta->accuracy == next->metrics.accuracy - 0.5);
  CHECK(*next->coverage_delta == next->coverage - 0.25);
  CHECK_FALSE(compute_model_stats(g, LabelMatrix(0, g.column_ids, std::vector<std::vector<int>>(3)), std::vector<int>{},
                                  std::nullopt)
                  .has_value());
}
