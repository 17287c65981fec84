#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlens/results.hpp"

// HTTP API over a directory of run files. `Service::handle` is transport-free;
// `HttpServer` binds it to a socket.

namespace mtlens::service {

struct Request {
  std::string method;
  /// Decoded path, e.g. "/runs/abc/segments".
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  nlohmann::json body = nlohmann::json::object();
  std::map<std::string, std::string> headers;
};

struct ServiceOptions {
  std::string cors_origin = "*";
  std::size_t default_limit = 50;
  std::size_t max_limit = 1000;
};

struct LoadedRun {
  EvalRun run;
  std::vector<std::string> consistency_warnings;
};

/// Reads run files on demand; a parsed run is reused while the file's size
/// and mtime are unchanged. Thread safe.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  /// Visible `*.json` files in the directory, sorted.
  std::vector<std::string> ids() const;
  /// Null when no such file. Throws SchemaError / IoError on a bad file.
  std::shared_ptr<const LoadedRun> get(const std::string& id) const;

 private:
  struct Entry {
    std::filesystem::file_time_type mtime;
    std::uintmax_t size = 0;
    std::shared_ptr<const LoadedRun> run;
  };
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  mutable std::map<std::string, Entry> cache_;
};

class Service {
 public:
  explicit Service(std::filesystem::path runs_dir, ServiceOptions opts = {});

  Response handle(const Request& req) const;
  const RunStore& store() const { return store_; }

 private:
  Response dispatch(const Request& req) const;

  RunStore store_;
  ServiceOptions opts_;
};

/// `{"error": {"code": ..., "message": ...}}`
nlohmann::json error_body(std::string_view code, const std::string& message);

class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const Service> service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws IoError.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; a bare port binds 127.0.0.1. Throws ValidationError.
std::pair<std::string, int> parse_bind(const std::string& bind);

}  // namespace mtlens::service
