#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "spanrule/error.hpp"
#include "spanrule/service.hpp"

namespace httplib {
class Server;
}

namespace spanrule {

/// HTTP/JSON front end over a ProjectRepository. Requests touching one
/// project are serialized on that project's mutex; every successful
/// mutation is persisted before the response is sent.
class ApiServer {
 public:
  explicit ApiServer(std::filesystem::path data_dir,
                     std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~ApiServer();

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Replaces the event timestamp source (tests use a fixed clock).
  void set_clock(std::function<std::string()> clock) { clock_ = std::move(clock); }

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool serve();
  void stop();

  httplib::Server& http() { return *http_; }

 private:
  struct Slot {
    std::mutex mu;
    std::unique_ptr<Project> project;
  };

  Slot& slot(const std::string& id);
  void routes();

  ProjectRepository repo_;
  std::unique_ptr<httplib::Server> http_;
  std::function<std::string()> clock_ = utc_timestamp;
  std::mutex registry_mu_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::mutex create_mu_;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);

}  // namespace spanrule
