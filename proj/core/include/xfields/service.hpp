// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "xfields/render.hpp"

namespace xfields::renderd {

/// A response independent of the transport, so request handling can be
/// exercised without sockets.
struct HttpReply {
  int status = 200;
  std::string content_type;
  std::string body;
};

using QueryParams = std::multimap<std::string, std::string>;

/// Routes GET /api/meta, /api/render and /api/effect. Malformed queries get
/// 400 with a JSON body {"code", "message"}; unknown API paths get 404.
HttpReply handle_api(const Renderer& renderer, std::string_view path,
                     const QueryParams& params);

/// Shown at "/" when no viewer assets directory is configured.
std::string placeholder_page(const Model& model);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path static_dir;  // viewer assets served at "/"; optional
};

/// "host:port" or ":port" or "port". Throws ConfigError.
ServiceOptions parse_bind_address(std::string_view address);

/// HTTP front end over a Renderer. The model is never mutated, so the
/// server's worker threads share it freely.
class Service {
 public:
  Service(std::shared_ptr<const Renderer> renderer, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the socket and returns the port. Throws Error when the address is
  /// unavailable.
  int bind();
  /// Serves until stop(); bind() must have succeeded.
  void run();
  /// Blocks until run() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace xfields::renderd
