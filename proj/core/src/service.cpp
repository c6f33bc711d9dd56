#include "spanrule/service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "spanrule/error.hpp"

namespace spanrule {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxIncorrectUids = 50;

nlohmann::json optional_json(const auto& v) {
  return v ? to_json(*v) : nlohmann::json();
}

std::vector<int> gold_labels(const Corpus& c) {
  std::vector<int> out;
  out.reserve(c.documents.size());
  for (const auto& d : c.documents) out.push_back(d.gold_label.value_or(0));
  return out;
}

std::vector<std::string> missing_concepts(const Rule& r, const ConceptStore& store) {
  std::vector<std::string> out;
  for (const auto& p : r.conditions)
    if (p.rhs_kind == RhsKind::kConcept && !store.contains(p.rhs)) out.push_back(p.rhs);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& p, const std::string& content) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kInternal, "cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, p);
}

nlohmann::json function_stats_json(const FunctionStats& f) {
  return {{"coverage", f.coverage},
          {"overlap", f.overlap},
          {"conflict", f.conflict},
          {"accuracy", f.accuracy ? nlohmann::json(*f.accuracy) : nlohmann::json()},
          {"correct", f.correct},
          {"incorrect", f.incorrect},
          {"excluded", f.excluded}};
}

}  // namespace

// ---------------------------------------------------------------- config

nlohmann::json to_json(const ProjectConfig& c) {
  return {{"name", c.name},
          {"label_names", c.label_names},
          {"synthesis",
           {{"k", c.synthesis.k},
            {"max_vars", c.synthesis.max_vars},
            {"max_candidates", c.synthesis.max_candidates},
            {"entity_factor", c.synthesis.entity_factor}}},
          {"compile", {{"positional_implies_sentence", c.compile.positional_implies_sentence}}},
          {"label_model",
           {{"max_iterations", c.fit.max_iterations},
            {"tolerance", c.fit.tolerance},
            {"alpha_init", c.fit.alpha_init},
            {"learn_prior", c.learn_prior},
            {"source_model", to_string(c.fit.source_model)},
            {"smoothing", c.fit.smoothing}}},
          {"end_model", to_json(c.end_model)},
          {"sampler",
           {{"policy", to_string(c.sampler_policy)},
            {"seed", c.sampler_seed},
            {"epsilon", c.sampler_epsilon}}},
          {"suggestion_cache", c.suggestion_cache}};
}

ProjectConfig project_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kInvalidArgument, "project config must be an object");
  try {
    ProjectConfig c;
    c.name = j.value("name", c.name);
    c.label_names = j.value("label_names", c.label_names);
    if (c.label_names.size() < 2) fail(ErrorCode::kInvalidArgument, "need at least two labels");
    if (auto s = j.find("synthesis"); s != j.end()) {
      c.synthesis.k = s->value("k", c.synthesis.k);
      c.synthesis.max_vars = s->value("max_vars", c.synthesis.max_vars);
      c.synthesis.max_candidates = s->value("max_candidates", c.synthesis.max_candidates);
      c.synthesis.entity_factor = s->value("entity_factor", c.synthesis.entity_factor);
      if (c.synthesis.k < 1) fail(ErrorCode::kInvalidArgument, "synthesis.k must be at least 1");
    }
    if (auto s = j.find("compile"); s != j.end())
      c.compile.positional_implies_sentence =
          s->value("positional_implies_sentence", c.compile.positional_implies_sentence);
    if (auto s = j.find("label_model"); s != j.end()) {
      c.fit.max_iterations = s->value("max_iterations", c.fit.max_iterations);
      c.fit.tolerance = s->value("tolerance", c.fit.tolerance);
      c.fit.alpha_init = s->value("alpha_init", c.fit.alpha_init);
      c.learn_prior = s->value("learn_prior", c.learn_prior);
      if (auto m = s->find("source_model"); m != s->end())
        c.fit.source_model = source_model_from_string(m->get<std::string>());
      c.fit.smoothing = s->value("smoothing", c.fit.smoothing);
    }
    if (auto s = j.find("end_model"); s != j.end()) c.end_model = end_model_config_from_json(*s);
    if (auto s = j.find("sampler"); s != j.end()) {
      c.sampler_policy = sampler_policy_from_string(s->value("policy", std::string("entropy")));
      c.sampler_seed = s->value("seed", c.sampler_seed);
      c.sampler_epsilon = s->value("epsilon", c.sampler_epsilon);
    }
    c.suggestion_cache = j.value("suggestion_cache", c.suggestion_cache);
    if (c.suggestion_cache < 1) fail(ErrorCode::kInvalidArgument, "suggestion_cache must be positive");
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed project config: ") + e.what());
  }
}

ProjectCorpora load_corpora(const fs::path& dir) {
  ProjectCorpora c;
  c.unlabeled = load_corpus((dir / "unlabeled.jsonl").string(), Split::kUnlabeled);
  if (fs::exists(dir / "dev.jsonl")) c.dev = load_corpus((dir / "dev.jsonl").string(), Split::kDev);
  c.dev.split = Split::kDev;
  if (fs::exists(dir / "test.jsonl"))
    c.test = load_corpus((dir / "test.jsonl").string(), Split::kTest);
  c.test.split = Split::kTest;
  return c;
}

// ---------------------------------------------------------------- events

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kInteraction: return "interaction";
    case EventKind::kAcceptFunction: return "accept_function";
    case EventKind::kRemoveFunction: return "remove_function";
    case EventKind::kConceptEdit: return "concept_edit";
    case EventKind::kRefit: return "refit";
    case EventKind::kTrain: return "train";
  }
  return "refit";
}

EventKind event_kind_from_string(std::string_view s) {
  for (EventKind k : {EventKind::kInteraction, EventKind::kAcceptFunction,
                      EventKind::kRemoveFunction, EventKind::kConceptEdit, EventKind::kRefit,
                      EventKind::kTrain})
    if (to_string(k) == s) return k;
  fail(ErrorCode::kParse, "unknown event kind '" + std::string(s) + "'");
}

nlohmann::json to_json(const Event& e) {
  return {{"revision", e.revision},
          {"timestamp", e.timestamp},
          {"kind", to_string(e.kind)},
          {"payload", e.payload}};
}

Event event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kParse, "event is not an object");
  try {
    Event e;
    e.revision = j.at("revision").get<std::uint64_t>();
    e.timestamp = j.value("timestamp", std::string());
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    e.payload = j.value("payload", nlohmann::json::object());
    return e;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kParse, std::string("malformed event: ") + ex.what());
  }
}

std::vector<Event> read_event_log(std::istream& in, std::string_view source) {
  std::vector<Event> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::kParse, std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Event> read_event_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kNotFound, "cannot open event log " + path.string());
  return read_event_log(in, path.string());
}

void write_event_log(std::ostream& out, const std::vector<Event>& events) {
  for (const auto& e : events) out << to_json(e).dump() << '\n';
}

nlohmann::json to_json(const ConceptEdit& e) {
  static constexpr const char* kOps[] = {"create", "delete", "add_element", "remove_element"};
  nlohmann::json j = {{"op", kOps[static_cast<int>(e.op)]}, {"name", e.name}};
  if (e.element) j["element"] = to_json(*e.element);
  if (e.position) j["position"] = *e.position;
  if (e.color_hint) j["color_hint"] = *e.color_hint;
  if (!e.elements.empty()) {
    auto& arr = j["elements"] = nlohmann::json::array();
    for (const auto& el : e.elements) arr.push_back(to_json(el));
  }
  return j;
}

ConceptEdit concept_edit_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kInvalidArgument, "concept edit must be an object");
  try {
    ConceptEdit e;
    std::string op = j.at("op").get<std::string>();
    if (op == "create") {
      e.op = ConceptEditOp::kCreate;
    } else if (op == "delete") {
      e.op = ConceptEditOp::kDelete;
    } else if (op == "add_element") {
      e.op = ConceptEditOp::kAddElement;
    } else if (op == "remove_element") {
      e.op = ConceptEditOp::kRemoveElement;
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown concept op '" + op + "'");
    }
    e.name = j.at("name").get<std::string>();
    if (j.contains("element") && !j["element"].is_null()) e.element = element_from_json(j["element"]);
    if (j.contains("position") && !j["position"].is_null())
      e.position = j["position"].get<std::size_t>();
    if (j.contains("color_hint") && !j["color_hint"].is_null())
      e.color_hint = j["color_hint"].get<int>();
    for (const auto& el : j.value("elements", nlohmann::json::array()))
      e.elements.push_back(element_from_json(el));
    if ((e.op == ConceptEditOp::kAddElement || e.op == ConceptEditOp::kRemoveElement) && !e.element)
      fail(ErrorCode::kInvalidArgument, "'" + op + "' needs an element");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed concept edit: ") + ex.what());
  }
}

// ---------------------------------------------------------------- project

Project::Project(ProjectConfig config, std::shared_ptr<const ProjectCorpora> corpora)
    : config_(std::move(config)), corpora_(std::move(corpora)) {
  if (!corpora_) fail(ErrorCode::kInvalidArgument, "project needs corpora");
  if (config_.n_classes() < 2) fail(ErrorCode::kInvalidArgument, "need at least two labels");
  if (corpora_->unlabeled.documents.empty())
    fail(ErrorCode::kInvalidArgument, "the unlabeled split is empty");
  for (const Corpus* c : {&corpora_->dev, &corpora_->test})
    for (const auto& d : c->documents)
      if (d.gold_label && *d.gold_label >= config_.n_classes())
        fail(ErrorCode::kInvalidArgument,
             "document '" + d.uid + "' has label " + std::to_string(*d.gold_label) +
                 " outside the project's " + std::to_string(config_.n_classes()) + " classes");
  state_.sampler.policy = config_.sampler_policy;
  state_.sampler.seed = config_.sampler_seed;
  state_.sampler.epsilon = config_.sampler_epsilon;
  refit_state(state_);
}

Project Project::replay(ProjectConfig config, std::shared_ptr<const ProjectCorpora> corpora,
                        const std::vector<Event>& events) {
  Project p(std::move(config), std::move(corpora));
  for (const auto& e : events) p.apply(e);
  return p;
}

void Project::apply(const Event& e) {
  if (e.revision != state_.revision + 1)
    fail(ErrorCode::kCorruptLog, "event revision " + std::to_string(e.revision) +
                                     " does not follow revision " +
                                     std::to_string(state_.revision));
  ProjectState next = state_;
  apply_to(next, e);
  state_ = std::move(next);
  events_.push_back(e);
}

void Project::commit(EventKind kind, nlohmann::json payload, const std::string& timestamp) {
  Event e{state_.revision + 1, timestamp, kind, std::move(payload)};
  apply(e);
}

const Suggestion& Project::submit_interaction(const Interaction& ix, const std::string& timestamp) {
  commit(EventKind::kInteraction, to_json(ix), timestamp);
  return state_.suggestions.back();
}

AcceptResult Project::accept_functions(const std::string& token,
                                       const std::vector<std::string>& rule_ids,
                                       const std::string& timestamp) {
  const Suggestion* s = suggestion(token);
  if (!s) fail(ErrorCode::kConflict, "unknown or expired suggestion token '" + token + "'");
  if (rule_ids.empty()) fail(ErrorCode::kInvalidArgument, "no rule ids given");
  AcceptResult r;
  for (const auto& id : rule_ids) {
    bool offered = std::any_of(s->set.candidates.begin(), s->set.candidates.end(),
                               [&](const Candidate& c) { return c.rule.id == id; });
    if (!offered) fail(ErrorCode::kInvalidArgument, "rule '" + id + "' was not suggested under " + token);
    bool have = std::any_of(state_.functions.begin(), state_.functions.end(),
                            [&](const LabelingFunction& f) { return f.rule.id == id; });
    bool again = std::find(r.added.begin(), r.added.end(), id) != r.added.end();
    (have || again ? r.duplicates : r.added).push_back(id);
  }
  if (r.added.empty()) return r;
  commit(EventKind::kAcceptFunction, {{"suggestion_token", token}, {"rule_ids", rule_ids}}, timestamp);
  r.logged = true;
  return r;
}

void Project::remove_function(const std::string& rule_id, const std::string& timestamp) {
  commit(EventKind::kRemoveFunction, {{"rule_id", rule_id}}, timestamp);
}

void Project::edit_concept(const ConceptEdit& edit, const std::string& timestamp) {
  commit(EventKind::kConceptEdit, to_json(edit), timestamp);
}

void Project::refit(const std::string& timestamp) {
  commit(EventKind::kRefit, nlohmann::json::object(), timestamp);
}

const EndModelReport& Project::train(const std::optional<EndModelConfig>& config,
                                     const std::string& timestamp) {
  nlohmann::json payload = nlohmann::json::object();
  if (config) payload["config"] = to_json(*config);
  commit(EventKind::kTrain, std::move(payload), timestamp);
  return *state_.end_model;
}

const Suggestion* Project::suggestion(const std::string& token) const {
  for (const auto& s : state_.suggestions)
    if (s.token == token) return &s;
  return nullptr;
}

std::vector<std::string> Project::uids() const {
  std::vector<std::string> out;
  out.reserve(corpora_->unlabeled.documents.size());
  for (const auto& d : corpora_->unlabeled.documents) out.push_back(d.uid);
  return out;
}

std::string Project::peek_next() const {
  return spanrule::peek_next(uids(), state_.posteriors, state_.sampler, state_.covered);
}

void Project::apply_to(ProjectState& s, const Event& e) const {
  const ProjectCorpora& c = *corpora_;
  s.revision = e.revision;
  try {
    switch (e.kind) {
      case EventKind::kInteraction: {
        Interaction ix = interaction_from_json(e.payload);
        const Document* doc = c.unlabeled.find(ix.doc_uid);
        if (!doc) fail(ErrorCode::kNotFound, "no unlabeled document '" + ix.doc_uid + "'");
        validate_interaction(ix, doc->tokens.size(), config_.n_classes());
        Suggestion sg;
        sg.token = "sg-" + std::to_string(e.revision);
        sg.doc_uid = ix.doc_uid;
        sg.set = synthesize(ix, *doc, s.concepts, config_.synthesis, config_.compile);
        for (const auto& cand : sg.set.candidates) {
          if (c.dev.documents.empty()) {
            sg.dev_stats.emplace_back();
            continue;
          }
          CandidateDevStats st;
          std::size_t fired = 0;
          for (const auto& d : c.dev.documents) {
            int v = evaluate_rule(cand.rule, d, s.concepts);
            if (v == kAbstain) continue;
            ++fired;
            (v == d.gold_label ? st.correct : st.incorrect)++;
          }
          st.coverage = static_cast<double>(fired) / static_cast<double>(c.dev.documents.size());
          if (fired) st.accuracy = static_cast<double>(st.correct) / static_cast<double>(fired);
          sg.dev_stats.push_back(st);
        }
        s.sampler.shown.insert(ix.doc_uid);
        s.suggestions.push_back(std::move(sg));
        while (s.suggestions.size() > config_.suggestion_cache) s.suggestions.pop_front();
        break;
      }
      case EventKind::kAcceptFunction: {
        std::string token = e.payload.at("suggestion_token").get<std::string>();
        auto ids = e.payload.at("rule_ids").get<std::vector<std::string>>();
        auto it = std::find_if(s.suggestions.begin(), s.suggestions.end(),
                               [&](const Suggestion& x) { return x.token == token; });
        if (it == s.suggestions.end())
          fail(ErrorCode::kConflict, "unknown or expired suggestion token '" + token + "'");
        for (const auto& id : ids) {
          auto cand = std::find_if(it->set.candidates.begin(), it->set.candidates.end(),
                                   [&](const Candidate& x) { return x.rule.id == id; });
          if (cand == it->set.candidates.end())
            fail(ErrorCode::kInvalidArgument, "rule '" + id + "' was not suggested under " + token);
          bool have = std::any_of(s.functions.begin(), s.functions.end(),
                                  [&](const LabelingFunction& f) { return f.rule.id == id; });
          if (!have) s.functions.push_back({cand->rule, e.revision, true, std::nullopt});
        }
        refit_state(s);
        break;
      }
      case EventKind::kRemoveFunction: {
        std::string id = e.payload.at("rule_id").get<std::string>();
        auto it = std::find_if(s.functions.begin(), s.functions.end(),
                               [&](const LabelingFunction& f) { return f.rule.id == id; });
        if (it == s.functions.end()) fail(ErrorCode::kNotFound, "no function '" + id + "'");
        s.functions.erase(it);
        s.train_cache.erase(id);
        s.dev_cache.erase(id);
        refit_state(s);
        break;
      }
      case EventKind::kConceptEdit: {
        ConceptEdit edit = concept_edit_from_json(e.payload);
        switch (edit.op) {
          case ConceptEditOp::kCreate:
            s.concepts.create(edit.name, edit.color_hint);
            for (const auto& el : edit.elements) s.concepts.add_element(edit.name, el);
            break;
          case ConceptEditOp::kDelete:
            s.concepts.remove(edit.name);
            break;
          case ConceptEditOp::kAddElement:
            s.concepts.add_element(edit.name, *edit.element, edit.position);
            break;
          case ConceptEditOp::kRemoveElement:
            s.concepts.remove_element(edit.name, *edit.element);
            break;
        }
        refit_state(s);
        break;
      }
      case EventKind::kRefit:
        refit_state(s);
        break;
      case EventKind::kTrain: {
        EndModelConfig cfg = config_.end_model;
        if (e.payload.contains("config")) cfg = end_model_config_from_json(e.payload["config"]);
        if (!s.model) fail(ErrorCode::kUnavailable, "no labeling functions to train from");
        BowVocabulary vocab = build_vocabulary(c.unlabeled.documents, cfg.min_count);
        std::vector<SparseVector> features;
        ProbabilityRows probs;
        for (std::size_t i = 0; i < c.unlabeled.documents.size(); ++i) {
          if (!s.covered[i]) continue;
          features.push_back(featurize(c.unlabeled.documents[i], vocab));
          probs.push_back(s.posteriors[i]);
        }
        if (features.empty()) fail(ErrorCode::kUnavailable, "no unlabeled document is covered");
        EndModel m = train_noise_aware(features, probs, config_.n_classes(), vocab.width(), cfg);
        EndModelReport report;
        report.metrics = evaluate(m, vocab, c.test);
        report.n_train_covered = features.size();
        report.n_test = c.test.documents.size();
        report.config = cfg;
        s.end_model = report;
        break;
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed ") + std::string(to_string(e.kind)) +
                                          " payload: " + ex.what());
  }
}

void Project::refit_state(ProjectState& s) const {
  const ProjectCorpora& c = *corpora_;
  const int k = config_.n_classes();
  const std::size_t n = c.unlabeled.documents.size();

  for (auto& f : s.functions) {
    f.enabled = true;
    f.error.reset();
    auto missing = missing_concepts(f.rule, s.concepts);
    if (!missing.empty()) {
      f.enabled = false;
      f.error = "unknown concept '" + missing.front() + "'";
    }
  }
  std::optional<ModelStats> previous = s.model_stats;
  LabelMatrix train = evaluate_all(s.functions, c.unlabeled, s.concepts, &s.train_cache);
  LabelMatrix dev = evaluate_all(s.functions, c.dev, s.concepts, &s.dev_cache);
  std::vector<int> dev_gold = gold_labels(c.dev);

  if (train.cols() == 0) {
    s.model.reset();
    s.posteriors.assign(n, std::vector<double>(static_cast<std::size_t>(k), 1.0 / k));
    s.covered.assign(n, false);
    s.lf_stats = c.dev.documents.empty() ? std::nullopt : std::optional<LFStats>(LFStats{});
    s.model_stats.reset();
    return;
  }

  FitConfig fit = config_.fit;
  if (!c.dev.documents.empty()) {
    fit.prior_init.assign(static_cast<std::size_t>(k), 1.0);
    for (int y : dev_gold) fit.prior_init[static_cast<std::size_t>(y)] += 1.0;
  }
  fit.learn_prior = config_.learn_prior;
  GenerativeModel model = fit_generative(train, k, fit);
  s.posteriors = predict_proba(model, train);
  s.covered.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) s.covered[i] = !train.row_abstains(i);

  s.lf_stats = compute_lf_stats(dev, dev_gold);
  if (s.lf_stats)
    for (std::size_t j = 0; j < s.lf_stats->functions.size(); ++j)
      s.lf_stats->functions[j].excluded = model.excluded[j];
  s.model_stats = compute_model_stats(model, dev, dev_gold, previous);
  s.model = std::move(model);
}

// ---------------------------------------------------------------- views

nlohmann::json Project::document_view(const std::string& uid) const {
  const Document* d = nullptr;
  std::string split;
  for (const Corpus* c : {&corpora_->unlabeled, &corpora_->dev, &corpora_->test}) {
    if ((d = c->find(uid))) {
      split = std::string(to_string(c->split));
      break;
    }
  }
  if (!d) fail(ErrorCode::kNotFound, "no document '" + uid + "'");
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : d->tokens) tokens.push_back({{"start", t.start}, {"end", t.end}, {"text", t.surface}});
  nlohmann::json sentences = nlohmann::json::array();
  for (const auto& r : d->sentences) sentences.push_back({r.begin, r.end});
  nlohmann::json entities = nlohmann::json::array();
  for (const auto& e : d->entities)
    entities.push_back({{"start_token", e.range.begin}, {"end_token", e.range.end}, {"type", e.type}});
  nlohmann::json matches = nlohmann::json::object();
  for (const auto& name : state_.concepts.names()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : state_.concepts.matches(name, *d)) arr.push_back({r.begin, r.end});
    matches[name] = arr;
  }
  nlohmann::json j = {{"uid", d->uid},           {"split", split},
                      {"text", d->text},         {"tokens", tokens},
                      {"sentences", sentences},  {"entities", entities},
                      {"concept_matches", matches}, {"revision", state_.revision},
                      {"label_names", config_.label_names}};
  if (split != "unlabeled" && d->gold_label) j["label"] = *d->gold_label;
  return j;
}

nlohmann::json Project::suggestion_json(const Suggestion& s) const {
  nlohmann::json cands = nlohmann::json::array();
  for (std::size_t i = 0; i < s.set.candidates.size(); ++i) {
    const Candidate& c = s.set.candidates[i];
    nlohmann::json dev;
    if (i < s.dev_stats.size() && s.dev_stats[i]) {
      const auto& d = *s.dev_stats[i];
      dev = {{"coverage", d.coverage},
             {"accuracy", d.accuracy ? nlohmann::json(*d.accuracy) : nlohmann::json()},
             {"correct", d.correct},
             {"incorrect", d.incorrect}};
    }
    cands.push_back({{"rule_id", c.rule.id},
                     {"rendering", render(c.rule, config_.label_names)},
                     {"notation", notation(c.rule, config_.label_names)},
                     {"rule", canonical_json(c.rule)},
                     {"score", c.score},
                     {"coverage", c.coverage},
                     {"dev_stats", dev}});
  }
  return {{"suggestion_token", s.token},
          {"doc_uid", s.doc_uid},
          {"seed",
           {{"rule_id", s.set.seed.id},
            {"rendering", render(s.set.seed, config_.label_names)},
            {"notation", notation(s.set.seed, config_.label_names)}}},
          {"candidates", cands},
          {"revision", state_.revision}};
}

nlohmann::json Project::functions_json() const {
  std::map<std::string, const FunctionStats*> stats;
  if (state_.lf_stats)
    for (const auto& f : state_.lf_stats->functions) stats[f.rule_id] = &f;
  const Corpus& dev = corpora_->dev;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : state_.functions) {
    nlohmann::json j = {{"rule_id", f.rule.id},
                        {"rendering", render(f.rule, config_.label_names)},
                        {"notation", notation(f.rule, config_.label_names)},
                        {"rule", canonical_json(f.rule)},
                        {"accepted_at", f.accepted_at},
                        {"enabled", f.enabled},
                        {"error", f.error ? nlohmann::json(*f.error) : nlohmann::json()}};
    auto it = stats.find(f.rule.id);
    j["stats"] = it == stats.end() ? nlohmann::json() : function_stats_json(*it->second);
    nlohmann::json wrong = nlohmann::json::array();
    if (f.enabled) {
      for (const auto& d : dev.documents) {
        if (wrong.size() >= kMaxIncorrectUids) break;
        int v = evaluate_rule(f.rule, d, state_.concepts);
        if (v != kAbstain && v != d.gold_label) wrong.push_back(d.uid);
      }
    }
    j["incorrect_dev_uids"] = wrong;
    arr.push_back(std::move(j));
  }
  return arr;
}

nlohmann::json Project::statistics_json() const {
  nlohmann::json lm;
  if (state_.model) {
    const auto& m = *state_.model;
    lm = {{"iterations", m.iterations}, {"loglik", m.loglik}, {"prior", m.prior},
          {"alpha", m.alpha},           {"beta", m.beta},     {"column_ids", m.column_ids},
          {"source_model", to_string(m.source_model)}};
  }
  std::size_t covered = std::count(state_.covered.begin(), state_.covered.end(), true);
  nlohmann::json fstats = nlohmann::json::array();
  if (state_.lf_stats) {
    for (const auto& f : state_.lf_stats->functions) {
      nlohmann::json j = function_stats_json(f);
      j["rule_id"] = f.rule_id;
      fstats.push_back(std::move(j));
    }
  }
  return {{"revision", state_.revision},
          {"n_functions", state_.functions.size()},
          {"train_coverage", static_cast<double>(covered) /
                                 static_cast<double>(corpora_->unlabeled.documents.size())},
          {"lf_stats", state_.lf_stats ? fstats : nlohmann::json()},
          {"label_model", lm},
          {"model_stats", optional_json(state_.model_stats)},
          {"end_model", optional_json(state_.end_model)}};
}

nlohmann::json Project::metrics_report() const { return statistics_json(); }

nlohmann::json Project::state_json() const {
  nlohmann::json fns = nlohmann::json::array();
  for (const auto& f : state_.functions)
    fns.push_back({{"rule", canonical_json(f.rule)},
                   {"id", f.rule.id},
                   {"accepted_at", f.accepted_at},
                   {"enabled", f.enabled},
                   {"error", f.error ? nlohmann::json(*f.error) : nlohmann::json()}});
  nlohmann::json sugg = nlohmann::json::array();
  for (const auto& s : state_.suggestions) {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& c : s.set.candidates) ids.push_back(c.rule.id);
    sugg.push_back({{"token", s.token}, {"doc_uid", s.doc_uid}, {"seed", s.set.seed.id}, {"candidates", ids}});
  }
  return {{"config", to_json(config_)},
          {"revision", state_.revision},
          {"concepts", to_json(state_.concepts)},
          {"functions", fns},
          {"model", optional_json(state_.model)},
          {"statistics", statistics_json()},
          {"sampler", to_json(state_.sampler)},
          {"suggestions", sugg}};
}

std::string Project::export_labels_jsonl() const {
  std::ostringstream out;
  const auto& docs = corpora_->unlabeled.documents;
  for (std::size_t i = 0; i < docs.size(); ++i)
    out << nlohmann::json{{"uid", docs[i].uid}, {"probs", state_.posteriors[i]},
                          {"covered", static_cast<bool>(state_.covered[i])}}
               .dump()
        << '\n';
  return out.str();
}

// ---------------------------------------------------------------- storage

ProjectRepository::ProjectRepository(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

std::vector<std::string> ProjectRepository::list() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir_))
    if (entry.is_directory() && fs::exists(entry.path() / "project.json"))
      out.push_back(entry.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

bool ProjectRepository::exists(const std::string& id) const {
  if (id.empty() || id.find_first_of("/\\.") != std::string::npos) return false;
  return fs::exists(dir_ / id / "project.json");
}

std::string ProjectRepository::create(const ProjectConfig& config,
                                      const std::map<std::string, std::string>& files) {
  std::map<std::string, std::string> named;
  for (const auto& [split, content] : files) {
    std::string key = split == "train" ? "unlabeled" : split;
    if (key != "unlabeled" && key != "dev" && key != "test")
      fail(ErrorCode::kInvalidArgument, "unknown split '" + split + "'");
    named[key] = content;
  }
  if (!named.contains("unlabeled")) fail(ErrorCode::kInvalidArgument, "an unlabeled split is required");

  std::size_t next = 1;
  for (const auto& id : list())
    if (id.size() > 1 && id[0] == 'p' && std::all_of(id.begin() + 1, id.end(), ::isdigit))
      next = std::max<std::size_t>(next, std::stoul(id.substr(1)) + 1);
  std::string id = "p" + std::to_string(next);
  fs::path p = dir_ / id;
  fs::create_directories(p);
  try {
    for (const auto& [split, content] : named) write_file_atomic(p / (split + ".jsonl"), content);
    write_file_atomic(p / "project.json", to_json(config).dump(2) + "\n");
    Project project = open_project_dir(p);
    write_file_atomic(p / "snapshot.json", project.state_json().dump() + "\n");
  } catch (...) {
    fs::remove_all(p);
    throw;
  }
  return id;
}

Project ProjectRepository::open(const std::string& id) const {
  if (!exists(id)) fail(ErrorCode::kNotFound, "no project '" + id + "'");
  return open_project_dir(dir_ / id);
}

void ProjectRepository::persist(const std::string& id, const Project& project) const {
  fs::path p = dir_ / id;
  fs::path log = p / "events.jsonl";
  std::uint64_t on_disk = 0;
  if (fs::exists(log)) {
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++on_disk;
  }
  std::ofstream out(log, std::ios::app | std::ios::binary);
  if (!out) fail(ErrorCode::kInternal, "cannot append to " + log.string());
  for (const auto& e : project.events())
    if (e.revision > on_disk) out << to_json(e).dump() << '\n';
  out.close();
  write_file_atomic(p / "snapshot.json", project.state_json().dump() + "\n");
}

Project open_project_dir(const fs::path& dir) {
  ProjectConfig config;
  if (fs::exists(dir / "project.json"))
    config = project_config_from_json(nlohmann::json::parse(read_file(dir / "project.json")));
  auto corpora = std::make_shared<const ProjectCorpora>(load_corpora(dir));
  std::vector<Event> events;
  if (fs::exists(dir / "events.jsonl")) events = read_event_log(dir / "events.jsonl");
  return Project::replay(std::move(config), std::move(corpora), events);
}

std::string utc_timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

}  // namespace spanrule
