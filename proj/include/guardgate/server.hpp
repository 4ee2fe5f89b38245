#pragma once

#include "guardgate/gateway.hpp"

#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace guardgate {

/// HTTP front end for a GatewayService.
class GatewayServer {
 public:
  GatewayServer(std::shared_ptr<GatewayService> service, int threads = 128);
  ~GatewayServer();

  GatewayServer(const GatewayServer &) = delete;
  GatewayServer &operator=(const GatewayServer &) = delete;

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind(const std::string &host, int port);
  /// Blocks until stop().
  void listen();
  /// bind + listen on a background thread.
  int start(const std::string &host, int port);
  void stop();

 private:
  std::shared_ptr<GatewayService> service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace guardgate
