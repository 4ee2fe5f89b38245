#pragma once

#include "guardgate/gateway.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
struct Request;
struct Response;
}  // namespace httplib

namespace gg_test {

std::filesystem::path fixture(const std::string &name);
std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, const std::string &text);

/// Compares against tests/fixtures/<name>; GG_UPDATE_GOLDENS=1 rewrites it.
::testing::AssertionResult matches_golden(const std::string &name, const std::string &actual);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  const std::filesystem::path &path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// HTTP server on 127.0.0.1 with a free port, for exercising clients.
class FakeHttpServer {
 public:
  using Handler = std::function<void(const httplib::Request &, httplib::Response &)>;

  FakeHttpServer();
  ~FakeHttpServer();

  void on_post(const std::string &path, Handler handler);
  void start();
  int port() const { return port_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::size_t requests() const { return requests_.load(); }
  std::vector<std::string> bodies() const;

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
  mutable std::mutex mutex_;
  std::vector<std::string> bodies_;
};

/// In-process upstream LLM returning a canned chat completion.
class FakeUpstream final : public guardgate::UpstreamClient {
 public:
  explicit FakeUpstream(std::string reply_body, int status = 200) : body_(std::move(reply_body)), status_(status) {}

  guardgate::UpstreamReply send_chat(const std::string &body, const std::string &authorization) const override;

  std::size_t calls() const { return calls_.load(); }
  std::string last_request() const;
  std::string last_authorization() const;

 private:
  std::string body_;
  int status_;
  mutable std::atomic<std::size_t> calls_{0};
  mutable std::mutex mutex_;
  mutable std::string last_request_;
  mutable std::string last_authorization_;
};

/// Chat completion with a single assistant message.
std::string chat_completion(const std::string &content, const std::string &model = "upstream-model");

struct ServiceParts {
  std::shared_ptr<guardgate::GatewayService> service;
  std::shared_ptr<guardgate::CountingBackend> backend;
  std::shared_ptr<FakeUpstream> upstream;
};

/// In-memory store holding a low-sensitivity policy under `default_id`.
std::shared_ptr<guardgate::PolicyStore> seeded_store(const std::string &default_id = "default");

/// Stub-backed service with a silent log and an in-memory store seeded with a
/// low-sensitivity default policy.
ServiceParts make_service(guardgate::GatewayConfig config = {}, std::shared_ptr<FakeUpstream> upstream = nullptr,
                          guardgate::Lexicon lexicon = guardgate::default_lexicon());

/// Lexicon used across the gateway tests.
guardgate::Lexicon test_lexicon();

}  // namespace gg_test
