#include <httplib.h>

#include "mtlens/errors.hpp"
#include "mtlens/service.hpp"

namespace mtlens::service {

struct HttpServer::Impl {
  std::shared_ptr<const Service> service;
  httplib::Server server;
};

namespace {

void forward(const Service& svc, const httplib::Request& in, httplib::Response& out) {
  Request req;
  req.method = in.method;
  req.path = in.path;
  for (const auto& [k, v] : in.params) req.query.emplace(k, v);  // first value wins
  req.body = in.body;
  const auto res = svc.handle(req);
  out.status = res.status;
  for (const auto& [k, v] : res.headers) out.set_header(k, v);
  if (!res.body.is_null()) out.set_content(res.body.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(std::shared_ptr<const Service> service) : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  auto handler = [this](const httplib::Request& in, httplib::Response& out) { forward(*impl_->service, in, out); };
  const std::string any = R"(/.*)";
  impl_->server.Get(any, handler);
  impl_->server.Post(any, handler);
  impl_->server.Put(any, handler);
  impl_->server.Delete(any, handler);
  impl_->server.Patch(any, handler);
  impl_->server.Options(any, handler);
  impl_->server.set_payload_max_length(1 << 20);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace mtlens::service
