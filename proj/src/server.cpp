#include "guardgate/server.hpp"

#include "guardgate/errors.hpp"

#include <httplib.h>

namespace guardgate {

namespace {

void send(httplib::Response &res, const HttpReply &reply) {
  res.status = reply.status;
  for (const auto &[name, value] : reply.headers) {
    res.set_header(name, value);
  }
  if (!reply.body.empty() || reply.status != 204) {
    res.set_content(reply.body, reply.content_type);
  }
}

HeaderLookup lookup_for(const httplib::Request &req) {
  return [&req](const std::string &name) -> std::optional<std::string> {
    if (req.has_header(name)) {
      return req.get_header_value(name);
    }
    return std::nullopt;
  };
}

}  // namespace

GatewayServer::GatewayServer(std::shared_ptr<GatewayService> service, int threads)
    : service_(std::move(service)), server_(std::make_unique<httplib::Server>()) {
  const std::size_t pool = static_cast<std::size_t>(std::max(1, threads));
  server_->new_task_queue = [pool] { return new httplib::ThreadPool(pool); };
  server_->set_tcp_nodelay(true);
  server_->set_keep_alive_max_count(1000);

  auto *svc = service_.get();
  const auto guarded = [svc](auto handler) {
    return [svc, handler](const httplib::Request &req, httplib::Response &res) {
      if (!svc->authorized(lookup_for(req))) {
        send(res, {401, R"({"error":{"code":"Unauthorized","message":"missing or invalid API key"}})",
                   "application/json", {}});
        return;
      }
      handler(req, res);
    };
  };

  server_->Get("/healthz", [svc](const httplib::Request &, httplib::Response &res) { send(res, svc->handle_health()); });
  server_->Get("/metrics", guarded([svc](const httplib::Request &, httplib::Response &res) {
                 send(res, svc->handle_metrics());
               }));
  server_->Post("/v1/guard/check", guarded([svc](const httplib::Request &req, httplib::Response &res) {
                  send(res, svc->handle_check(req.body));
                }));
  server_->Post("/v1/chat/completions", guarded([svc](const httplib::Request &req, httplib::Response &res) {
                  send(res, svc->handle_proxy_chat(req.body, lookup_for(req)));
                }));
  server_->Get("/v1/policies", guarded([svc](const httplib::Request &, httplib::Response &res) {
                 send(res, svc->handle_list_policies());
               }));
  server_->Post("/v1/policies", guarded([svc](const httplib::Request &req, httplib::Response &res) {
                  send(res, svc->handle_create_policy(req.body));
                }));
  server_->Get(R"(/v1/policies/([A-Za-z0-9._-]+))", guarded([svc](const httplib::Request &req, httplib::Response &res) {
                 send(res, svc->handle_get_policy(req.matches[1]));
               }));
  server_->Put(R"(/v1/policies/([A-Za-z0-9._-]+))", guarded([svc](const httplib::Request &req, httplib::Response &res) {
                 send(res, svc->handle_put_policy(req.matches[1], req.body));
               }));
  server_->Delete(R"(/v1/policies/([A-Za-z0-9._-]+))",
                  guarded([svc](const httplib::Request &req, httplib::Response &res) {
                    send(res, svc->handle_delete_policy(req.matches[1]));
                  }));
  server_->Get("/v1/logs/recent", guarded([svc](const httplib::Request &req, httplib::Response &res) {
                 std::size_t limit = 50;
                 if (req.has_param("limit")) {
                   try {
                     limit = std::stoul(req.get_param_value("limit"));
                   } catch (const std::exception &) {
                   }
                 }
                 send(res, svc->handle_recent_logs(limit));
               }));
  server_->set_exception_handler([](const httplib::Request &, httplib::Response &res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception &e) {
      message = e.what();
    } catch (...) {
    }
    nlohmann::json body{{"error", {{"code", "Internal"}, {"message", message}}}};
    send(res, {500, body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), "application/json", {}});
  });
}

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::bind(const std::string &host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) {
      throw GuardError(ErrorCode::InvalidConfig, "cannot bind " + host);
    }
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw GuardError(ErrorCode::InvalidConfig, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void GatewayServer::listen() { server_->listen_after_bind(); }

int GatewayServer::start(const std::string &host, int port) {
  const int bound = bind(host, port);
  thread_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
  return bound;
}

void GatewayServer::stop() {
  if (server_) {
    server_->stop();
  }
  if (thread_.joinable()) {
    thread_.join();
  }
}

}  // namespace guardgate
