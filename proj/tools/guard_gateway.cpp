#include "guardgate/errors.hpp"
#include "guardgate/gateway.hpp"
#include "guardgate/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace {

guardgate::GatewayServer *g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Safety gateway: guard checks, policy CRUD and an OpenAI-compatible proxy"};
  std::string config_path;
  std::string listen;
  std::string backend;
  std::string log_level;
  app.add_option("--config", config_path, "JSON or YAML config file")->check(CLI::ExistingFile);
  app.add_option("--listen", listen, "host:port to bind");
  app.add_option("--backend", backend, "detector backend")->check(CLI::IsMember({"stub", "remote"}));
  app.add_option("--log-level", log_level, "debug|info|warn|error");
  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json doc = config_path.empty() ? nlohmann::json::object() : guardgate::load_document(config_path);
    guardgate::GatewayConfig config = guardgate::config_from_json(doc);
    guardgate::apply_env_overrides(config, guardgate::process_env());
    if (!listen.empty()) {
      const auto parsed = guardgate::config_from_json({{"listen", listen}});
      config.listen_host = parsed.listen_host;
      config.listen_port = parsed.listen_port;
    }
    if (!backend.empty()) config.backend = backend;
    if (!log_level.empty()) config.log_level = log_level;
    guardgate::validate_config(config);

    std::shared_ptr<guardgate::GatewayService> service = guardgate::GatewayService::from_config(config);
    for (const auto &w : service->store().load_warnings()) {
      std::cerr << "warning: " << w << '\n';
    }
    guardgate::GatewayServer server(service, config.server_threads);
    const int port = server.bind(config.listen_host, config.listen_port);
    std::cerr << "guard-gateway listening on " << config.listen_host << ':' << port << " (backend "
              << config.backend << ")\n";
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.listen();
    g_server = nullptr;
  } catch (const guardgate::ValidationError &e) {
    std::cerr << "invalid configuration:\n";
    for (const auto &v : e.violations()) {
      std::cerr << "  " << v.field << ": " << v.detail << '\n';
    }
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
