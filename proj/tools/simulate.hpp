#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spanrule/service.hpp"

namespace spanrule {

/// A scripted labeler. For each served document it annotates the first cue
/// phrase (in script order) found in the text, tagging it with the cue's
/// concept when that concept exists, submits the cue's label, and accepts
/// the best-ranked candidate whose dev accuracy reaches min_dev_accuracy.
struct LabelerScript {
  struct Cue {
    std::string phrase;
    int label = 0;
    std::optional<std::string> concept_name;
  };
  struct ScheduledEdit {
    std::size_t after_interaction = 0;  // 0: before the first
    ConceptEdit edit;
  };

  std::string timestamp = "2026-01-01T00:00:00Z";
  std::vector<Cue> cues;
  std::vector<ScheduledEdit> edits;
  std::size_t interactions = 20;
  double min_dev_accuracy = 0.6;
  bool train = true;
};

LabelerScript labeler_script_from_json(const nlohmann::json& j);

/// Runs the script against a fresh project; the result's event log is the
/// session. Throws when a served document contains no cue.
Project simulate_session(const ProjectConfig& config,
                         std::shared_ptr<const ProjectCorpora> corpora,
                         const LabelerScript& script);

}  // namespace spanrule
