#include "api_server.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

namespace spanrule {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, {{"code", to_string(code)}, {"message", message}}, http_status(code));
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("request body is not JSON: ") + e.what());
  }
}

// Runs `fn`, turning failures into {code, message} responses.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, ErrorCode::kInvalidArgument, e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorCode::kInternal, e.what());
    }
  };
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParse: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kUnavailable:
    case ErrorCode::kEvaluation: return 422;
    case ErrorCode::kCorruptLog:
    case ErrorCode::kInternal: return 500;
  }
  return 500;
}

ApiServer::ApiServer(fs::path data_dir, std::optional<fs::path> static_dir)
    : repo_(std::move(data_dir)), http_(std::make_unique<httplib::Server>()) {
  if (static_dir && !http_->set_mount_point("/", static_dir->string()))
    fail(ErrorCode::kNotFound, "static directory " + static_dir->string() + " does not exist");
  routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) return http_->bind_to_any_port(host);
  return http_->bind_to_port(host, port) ? port : -1;
}

bool ApiServer::serve() { return http_->listen_after_bind(); }

void ApiServer::stop() {
  if (http_ && http_->is_running()) http_->stop();
}

ApiServer::Slot& ApiServer::slot(const std::string& id) {
  std::lock_guard lock(registry_mu_);
  auto it = slots_.find(id);
  if (it != slots_.end()) return *it->second;
  if (!repo_.exists(id)) fail(ErrorCode::kNotFound, "no project '" + id + "'");
  auto s = std::make_unique<Slot>();
  s->project = std::make_unique<Project>(repo_.open(id));
  return *slots_.emplace(id, std::move(s)).first->second;
}

void ApiServer::routes() {
  auto& srv = *http_;

  // Runs fn(project) under the project lock; persists when it advanced the
  // revision.
  auto with_project = [this](const httplib::Request& req, auto&& fn) {
    std::string id = req.matches[1];
    Slot& s = slot(id);
    std::lock_guard lock(s.mu);
    std::uint64_t before = s.project->revision();
    auto result = fn(*s.project);
    if (s.project->revision() != before) repo_.persist(id, *s.project);
    return result;
  };

  srv.Post("/projects", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json body = parse_body(req);
    json cfg = body.value("config", json::object());
    if (body.contains("name")) cfg["name"] = body["name"];
    if (body.contains("label_names")) cfg["label_names"] = body["label_names"];
    ProjectConfig config = project_config_from_json(cfg);
    if (!body.contains("files") || !body["files"].is_object())
      fail(ErrorCode::kInvalidArgument, "'files' must map split names to JSONL content");
    std::map<std::string, std::string> files;
    for (const auto& [split, content] : body["files"].items()) {
      if (!content.is_string())
        fail(ErrorCode::kInvalidArgument, "file content for '" + split + "' must be a string");
      files[split] = content.get<std::string>();
    }
    std::lock_guard lock(create_mu_);
    std::string id = repo_.create(config, files);
    send_json(res, {{"project_id", id}}, 201);
  }));

  srv.Get("/projects", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"projects", repo_.list()}});
  }));

  srv.Get(R"(/projects/([^/]+))", guarded([with_project](const httplib::Request& req, httplib::Response& res) {
    send_json(res, with_project(req, [&](Project& p) {
      return json{{"project_id", req.matches[1]},
                  {"config", to_json(p.config())},
                  {"revision", p.revision()},
                  {"splits",
                   {{"unlabeled", p.corpora().unlabeled.documents.size()},
                    {"dev", p.corpora().dev.documents.size()},
                    {"test", p.corpora().test.documents.size()}}}};
    }));
  }));

  srv.Get(R"(/projects/([^/]+)/next)", guarded([with_project](const httplib::Request& req, httplib::Response& res) {
    send_json(res, with_project(req, [](Project& p) { return p.document_view(p.peek_next()); }));
  }));

  srv.Get(R"(/projects/([^/]+)/documents/([^/]+))",
          guarded([with_project](const httplib::Request& req, httplib::Response& res) {
            std::string uid = req.matches[2];
            send_json(res, with_project(req, [&](Project& p) { return p.document_view(uid); }));
          }));

  srv.Post(R"(/projects/([^/]+)/interactions)",
           guarded([this, with_project](const httplib::Request& req, httplib::Response& res) {
             Interaction ix = interaction_from_json(parse_body(req));
             send_json(res, with_project(req, [&](Project& p) {
               return p.suggestion_json(p.submit_interaction(ix, clock_()));
             }));
           }));

  srv.Post(R"(/projects/([^/]+)/functions)",
           guarded([this, with_project](const httplib::Request& req, httplib::Response& res) {
             json body = parse_body(req);
             std::string token = body.at("suggestion_token").get<std::string>();
             auto ids = body.at("rule_ids").get<std::vector<std::string>>();
             send_json(res, with_project(req, [&](Project& p) {
               AcceptResult r = p.accept_functions(token, ids, clock_());
               json stats = p.statistics_json();
               json warnings = json::array();
               for (const auto& d : r.duplicates) warnings.push_back("rule " + d + " is already accepted");
               return json{{"added", r.added},
                           {"duplicates", r.duplicates},
                           {"warnings", warnings},
                           {"revision", p.revision()},
                           {"lf_stats", stats["lf_stats"]},
                           {"model_stats", stats["model_stats"]},
                           {"statistics", stats}};
             }));
           }));

  srv.Get(R"(/projects/([^/]+)/functions)",
          guarded([with_project](const httplib::Request& req, httplib::Response& res) {
            send_json(res, with_project(req, [](Project& p) {
              return json{{"functions", p.functions_json()}, {"revision", p.revision()}};
            }));
          }));

  srv.Delete(R"(/projects/([^/]+)/functions/([^/]+))",
             guarded([this, with_project](const httplib::Request& req, httplib::Response& res) {
               std::string rule_id = req.matches[2];
               send_json(res, with_project(req, [&](Project& p) {
                 p.remove_function(rule_id, clock_());
                 return p.statistics_json();
               }));
             }));

  srv.Get(R"(/projects/([^/]+)/statistics)",
          guarded([with_project](const httplib::Request& req, httplib::Response& res) {
            send_json(res, with_project(req, [](Project& p) { return p.statistics_json(); }));
          }));

  srv.Post(R"(/projects/([^/]+)/refit)",
           guarded([this, with_project](const httplib::Request& req, httplib::Response& res) {
             send_json(res, with_project(req, [&](Project& p) {
               p.refit(clock_());
               return p.statistics_json();
             }));
           }));

  srv.Post(R"(/projects/([^/]+)/train)",
           guarded([this, with_project](const httplib::Request& req, httplib::Response& res) {
             json body = parse_body(req);
             std::optional<EndModelConfig> cfg;
             if (body.contains("config")) cfg = end_model_config_from_json(body["config"]);
             send_json(res, with_project(req, [&](Project& p) { return to_json(p.train(cfg, clock_())); }));
           }));

  srv.Get(R"(/projects/([^/]+)/export/labels)",
          guarded([with_project](const httplib::Request& req, httplib::Response& res) {
            res.set_content(with_project(req, [](Project& p) { return p.export_labels_jsonl(); }),
                            "application/x-ndjson");
          }));

  srv.Get(R"(/projects/([^/]+)/events)",
          guarded([with_project](const httplib::Request& req, httplib::Response& res) {
            res.set_content(with_project(req, [](Project& p) {
                              std::ostringstream out;
                              write_event_log(out, p.events());
                              return out.str();
                            }),
                            "application/x-ndjson");
          }));

  // Concepts.
  srv.Get(R"(/projects/([^/]+)/concepts)",
          guarded([with_project](const httplib::Request& req, httplib::Response& res) {
            send_json(res, with_project(req, [](Project& p) {
              return json{{"concepts", to_json(p.state().concepts)}, {"revision", p.revision()}};
            }));
          }));

  srv.Post(R"(/projects/([^/]+)/concepts)",
           guarded([this, with_project](const httplib::Request& req, httplib::Response& res) {
             json body = parse_body(req);
             ConceptEdit edit;
             edit.op = ConceptEditOp::kCreate;
             edit.name = body.at("name").get<std::string>();
             if (body.contains("color_hint") && !body["color_hint"].is_null())
               edit.color_hint = body["color_hint"].get<int>();
             for (const auto& el : body.value("elements", json::array()))
               edit.elements.push_back(element_from_json(el));
             send_json(res, with_project(req, [&](Project& p) {
               p.edit_concept(edit, clock_());
               return to_json(*p.state().concepts.find(edit.name));
             }), 201);
           }));

  auto get_concept = [with_project](const httplib::Request& req, bool elements_only) {
    std::string name = req.matches[2];
    return with_project(req, [&](Project& p) {
      const Concept* c = p.state().concepts.find(name);
      if (!c) fail(ErrorCode::kNotFound, "unknown concept '" + name + "'");
      json j = to_json(*c);
      return elements_only ? j["elements"] : j;
    });
  };

  srv.Get(R"(/projects/([^/]+)/concepts/([^/]+))",
          guarded([get_concept](const httplib::Request& req, httplib::Response& res) {
            send_json(res, get_concept(req, false));
          }));

  srv.Get(R"(/projects/([^/]+)/concepts/([^/]+)/elements)",
          guarded([get_concept](const httplib::Request& req, httplib::Response& res) {
            send_json(res, get_concept(req, true));
          }));

  srv.Delete(R"(/projects/([^/]+)/concepts/([^/]+))",
             guarded([this, with_project](const httplib::Request& req, httplib::Response& res) {
               ConceptEdit edit;
               edit.op = ConceptEditOp::kDelete;
               edit.name = req.matches[2];
               send_json(res, with_project(req, [&](Project& p) {
                 p.edit_concept(edit, clock_());
                 return json{{"deleted", edit.name}, {"revision", p.revision()}};
               }));
             }));

  auto element_edit = [this, with_project](ConceptEditOp op) {
    return guarded([this, with_project, op](const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req);
      ConceptEdit edit;
      edit.op = op;
      edit.name = req.matches[2];
      edit.element = element_from_json(body);
      if (body.contains("position") && !body["position"].is_null())
        edit.position = body["position"].get<std::size_t>();
      send_json(res, with_project(req, [&](Project& p) {
        p.edit_concept(edit, clock_());
        return to_json(*p.state().concepts.find(edit.name));
      }));
    });
  };
  srv.Post(R"(/projects/([^/]+)/concepts/([^/]+)/elements)", element_edit(ConceptEditOp::kAddElement));
  srv.Delete(R"(/projects/([^/]+)/concepts/([^/]+)/elements)",
             element_edit(ConceptEditOp::kRemoveElement));
}

}  // namespace spanrule
