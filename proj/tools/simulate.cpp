#include "simulate.hpp"

#include <nlohmann/json.hpp>

#include "spanrule/error.hpp"

namespace spanrule {

LabelerScript labeler_script_from_json(const nlohmann::json& j) {
  try {
    LabelerScript s;
    s.timestamp = j.value("timestamp", s.timestamp);
    s.interactions = j.value("interactions", s.interactions);
    s.min_dev_accuracy = j.value("min_dev_accuracy", s.min_dev_accuracy);
    s.train = j.value("train", s.train);
    for (const auto& c : j.value("concepts", nlohmann::json::array())) {
      nlohmann::json edit = c;
      edit["op"] = "create";
      s.edits.push_back({0, concept_edit_from_json(edit)});
    }
    for (const auto& e : j.value("edits", nlohmann::json::array()))
      s.edits.push_back({e.at("after_interaction").get<std::size_t>(), concept_edit_from_json(e.at("edit"))});
    for (const auto& c : j.at("cues")) {
      LabelerScript::Cue cue;
      cue.phrase = c.at("phrase").get<std::string>();
      cue.label = c.at("label").get<int>();
      if (c.contains("concept") && !c["concept"].is_null()) cue.concept_name = c["concept"].get<std::string>();
      s.cues.push_back(std::move(cue));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed labeler script: ") + e.what());
  }
}

namespace {

std::optional<TokenRange> find_phrase(const Document& doc, const std::vector<Token>& phrase) {
  if (phrase.empty() || phrase.size() > doc.tokens.size()) return std::nullopt;
  for (std::size_t i = 0; i + phrase.size() <= doc.tokens.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < phrase.size() && ok; ++k)
      ok = doc.tokens[i + k].normalized == phrase[k].normalized;
    if (ok) return TokenRange{i, i + phrase.size()};
  }
  return std::nullopt;
}

}  // namespace

Project simulate_session(const ProjectConfig& config, std::shared_ptr<const ProjectCorpora> corpora,
                         const LabelerScript& script) {
  Project project(config, corpora);
  std::vector<std::vector<Token>> cue_tokens;
  for (const auto& c : script.cues) cue_tokens.push_back(tokenize(c.phrase));

  auto run_edits = [&](std::size_t after) {
    for (const auto& e : script.edits)
      if (e.after_interaction == after) project.edit_concept(e.edit, script.timestamp);
  };

  run_edits(0);
  for (std::size_t i = 1; i <= script.interactions; ++i) {
    std::string uid = project.peek_next();
    const Document& doc = *project.corpora().unlabeled.find(uid);
    std::optional<TokenRange> hit;
    const LabelerScript::Cue* cue = nullptr;
    for (std::size_t c = 0; c < script.cues.size() && !hit; ++c) {
      hit = find_phrase(doc, cue_tokens[c]);
      if (hit) cue = &script.cues[c];
    }
    if (!hit) fail(ErrorCode::kNotFound, "labeler script has no cue for document '" + uid + "'");

    Interaction ix;
    ix.doc_uid = uid;
    ix.label = cue->label;
    SpanAnnotation span{1, *hit, std::nullopt};
    if (cue->concept_name && project.state().concepts.contains(*cue->concept_name))
      span.concept_name = cue->concept_name;
    ix.spans.push_back(span);

    const Suggestion& s = project.submit_interaction(ix, script.timestamp);
    std::string token = s.token;
    std::optional<std::string> pick;
    for (std::size_t k = 0; k < s.set.candidates.size() && !pick; ++k) {
      const auto& st = k < s.dev_stats.size() ? s.dev_stats[k] : std::nullopt;
      if (!st || (st->accuracy && *st->accuracy >= script.min_dev_accuracy))
        pick = s.set.candidates[k].rule.id;
    }
    if (pick) project.accept_functions(token, {*pick}, script.timestamp);
    run_edits(i);
  }
  if (script.train) project.train(std::nullopt, script.timestamp);
  return project;
}

}  // namespace spanrule
