#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spanrule/corpus.hpp"
#include "spanrule/end_model.hpp"
#include "spanrule/glm.hpp"
#include "spanrule/label_model.hpp"
#include "spanrule/rule.hpp"
#include "spanrule/sampler.hpp"
#include "spanrule/synthesizer.hpp"

namespace spanrule {

inline FitConfig class_conditional_fit() {
  FitConfig f;
  f.source_model = SourceModel::kClassConditional;
  return f;
}

struct ProjectConfig {
  std::string name = "project";
  std::vector<std::string> label_names{"negative", "positive"};
  SynthesisOptions synthesis;
  CompileOptions compile;
  /// Defaults to class-conditional sources: rules written from one example
  /// usually vote a single class, which the shared-propensity model cannot
  /// separate from its mirror image.
  FitConfig fit = class_conditional_fit();
  /// Label-model prior: learned by EM, or held at the dev class frequencies
  /// (uniform without a dev split).
  bool learn_prior = false;
  EndModelConfig end_model;
  SamplerPolicy sampler_policy = SamplerPolicy::kEntropy;
  std::uint64_t sampler_seed = 42;
  double sampler_epsilon = 0.1;
  std::size_t suggestion_cache = 16;

  int n_classes() const { return static_cast<int>(label_names.size()); }
};

nlohmann::json to_json(const ProjectConfig& c);
ProjectConfig project_config_from_json(const nlohmann::json& j);

struct ProjectCorpora {
  Corpus unlabeled;
  Corpus dev;
  Corpus test;
};

/// Reads unlabeled.jsonl (required), dev.jsonl and test.jsonl (optional)
/// from `dir`.
ProjectCorpora load_corpora(const std::filesystem::path& dir);

enum class EventKind { kInteraction, kAcceptFunction, kRemoveFunction, kConceptEdit, kRefit, kTrain };

std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

/// One line of the event log: {revision, timestamp, kind, payload}.
struct Event {
  std::uint64_t revision = 0;
  std::string timestamp;
  EventKind kind = EventKind::kRefit;
  nlohmann::json payload;

  bool operator==(const Event&) const = default;
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

/// JSONL event log. Throws Error{kParse} with the line number on malformed
/// lines; revision order is checked on replay, not here.
std::vector<Event> read_event_log(std::istream& in, std::string_view source);
std::vector<Event> read_event_log(const std::filesystem::path& path);
void write_event_log(std::ostream& out, const std::vector<Event>& events);

enum class ConceptEditOp { kCreate, kDelete, kAddElement, kRemoveElement };

struct ConceptEdit {
  ConceptEditOp op = ConceptEditOp::kCreate;
  std::string name;
  std::optional<ConceptElement> element;       // add/remove element
  std::optional<std::size_t> position;         // add element
  std::optional<int> color_hint;               // create
  std::vector<ConceptElement> elements;        // create: initial contents
};

nlohmann::json to_json(const ConceptEdit& e);
ConceptEdit concept_edit_from_json(const nlohmann::json& j);

struct CandidateDevStats {
  double coverage = 0.0;
  std::optional<double> accuracy;
  std::size_t correct = 0;
  std::size_t incorrect = 0;
};

struct Suggestion {
  std::string token;
  std::string doc_uid;
  CandidateSet set;
  std::vector<std::optional<CandidateDevStats>> dev_stats;  // parallel to candidates
};

/// Everything replay reconstructs. Column caches are derived and not part of
/// the serialized state.
struct ProjectState {
  std::uint64_t revision = 0;
  ConceptStore concepts;
  std::vector<LabelingFunction> functions;
  std::optional<GenerativeModel> model;
  ProbabilityRows posteriors;         // unlabeled split
  std::vector<bool> covered;          // unlabeled rows with at least one vote
  std::optional<LFStats> lf_stats;
  std::optional<ModelStats> model_stats;
  std::optional<EndModelReport> end_model;
  SamplerState sampler;
  std::deque<Suggestion> suggestions;  // newest last
  ColumnCache train_cache;
  ColumnCache dev_cache;
};

struct AcceptResult {
  std::vector<std::string> added;
  std::vector<std::string> duplicates;
  bool logged = false;
};

/// A labeling session over fixed corpora. Every mutation is an event: it is
/// validated and applied to a copy of the state, and only on success
/// becomes the new state and is appended to the log. Not thread-safe.
class Project {
 public:
  Project(ProjectConfig config, std::shared_ptr<const ProjectCorpora> corpora);

  /// Replays `events` from an empty project. Throws Error{kCorruptLog} on a
  /// revision gap or reordering.
  static Project replay(ProjectConfig config, std::shared_ptr<const ProjectCorpora> corpora,
                        const std::vector<Event>& events);

  const Suggestion& submit_interaction(const Interaction& ix, const std::string& timestamp);
  /// Unknown or evicted token: Error{kConflict}. Ids outside the candidate
  /// set: Error{kInvalidArgument}. Nothing new to add: no event, logged=false.
  AcceptResult accept_functions(const std::string& token, const std::vector<std::string>& rule_ids,
                                const std::string& timestamp);
  void remove_function(const std::string& rule_id, const std::string& timestamp);
  void edit_concept(const ConceptEdit& edit, const std::string& timestamp);
  void refit(const std::string& timestamp);
  const EndModelReport& train(const std::optional<EndModelConfig>& config,
                              const std::string& timestamp);

  /// Applies one logged event; its revision must be revision() + 1.
  void apply(const Event& e);

  /// Uid the sampler would serve now. Does not mark it shown.
  std::string peek_next() const;

  std::uint64_t revision() const { return state_.revision; }
  const ProjectConfig& config() const { return config_; }
  const ProjectCorpora& corpora() const { return *corpora_; }
  const ProjectState& state() const { return state_; }
  const std::vector<Event>& events() const { return events_; }
  const Suggestion* suggestion(const std::string& token) const;

  /// Payload of GET /next for `uid`.
  nlohmann::json document_view(const std::string& uid) const;
  nlohmann::json suggestion_json(const Suggestion& s) const;
  nlohmann::json functions_json() const;
  /// {revision, n_functions, train_coverage, lf_stats, label_model,
  /// model_stats, end_model}
  nlohmann::json statistics_json() const;
  /// Full deterministic state; equal projects serialize byte-identically.
  nlohmann::json state_json() const;
  /// What replay writes: the statistics view.
  nlohmann::json metrics_report() const;
  /// One {uid, probs} line per unlabeled document.
  std::string export_labels_jsonl() const;

 private:
  void commit(EventKind kind, nlohmann::json payload, const std::string& timestamp);
  void apply_to(ProjectState& s, const Event& e) const;
  void refit_state(ProjectState& s) const;
  std::vector<std::string> uids() const;

  ProjectConfig config_;
  std::shared_ptr<const ProjectCorpora> corpora_;
  ProjectState state_;
  std::vector<Event> events_;
};

/// On-disk projects under one data directory:
///   <dir>/<id>/project.json  config
///   <dir>/<id>/{unlabeled,dev,test}.jsonl
///   <dir>/<id>/events.jsonl  append-only log
///   <dir>/<id>/snapshot.json latest state_json()
class ProjectRepository {
 public:
  explicit ProjectRepository(std::filesystem::path dir);

  /// `files` maps split name to JSONL content. Returns the new id.
  std::string create(const ProjectConfig& config, const std::map<std::string, std::string>& files);
  std::vector<std::string> list() const;
  bool exists(const std::string& id) const;
  Project open(const std::string& id) const;
  /// Appends events beyond what is on disk and rewrites the snapshot.
  void persist(const std::string& id, const Project& project) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// Opens a project directory laid out as above (events.jsonl optional).
Project open_project_dir(const std::filesystem::path& dir);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace spanrule
