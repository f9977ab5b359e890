// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/service.hpp"

#include <charconv>
#include <cmath>
#include <optional>

#include "httplib.h"
#include "json.hpp"
#include "xfields/image_io.hpp"

namespace xfields::renderd {
namespace {

constexpr std::size_t kMaxOutputSide = 4096;
constexpr std::size_t kMaxEffectSamples = 256;

struct BadRequest {
  std::string code;
  std::string message;
};

HttpReply json_reply(int status, const nlohmann::ordered_json& body) {
  return {status, "application/json", body.dump()};
}

HttpReply error_reply(int status, const std::string& code, const std::string& message) {
  return json_reply(status, {{"code", code}, {"message", message}});
}

std::optional<std::string> single(const QueryParams& params, const std::string& key) {
  const auto range = params.equal_range(key);
  if (range.first == range.second) return std::nullopt;
  if (std::next(range.first) != range.second) {
    throw BadRequest{"duplicate_parameter", "parameter \"" + key + "\" given more than once"};
  }
  return range.first->second;
}

double parse_double(std::string_view text, const std::string& code, const std::string& what) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw BadRequest{code, what + " is not a finite number: \"" + std::string(text) + "\""};
  }
  return v;
}

std::size_t parse_count(std::string_view text, const std::string& code, const std::string& what,
                        std::size_t lo, std::size_t hi) {
  std::size_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end || v < lo || v > hi) {
    throw BadRequest{code, what + " must be an integer in [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "], got \"" + std::string(text) + "\""};
  }
  return v;
}

XFieldCoord parse_coord(const QueryParams& params, std::size_t n_d) {
  const auto raw = single(params, "c");
  if (!raw) throw BadRequest{"missing_parameter", "query parameter \"c\" is required"};
  std::vector<double> values;
  std::string_view rest = *raw;
  while (true) {
    const auto comma = rest.find(',');
    values.push_back(parse_double(rest.substr(0, comma), "bad_coordinate", "coordinate"));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (values.size() != n_d) {
    throw BadRequest{"arity_mismatch", "expected " + std::to_string(n_d) +
                                           " coordinates, got " + std::to_string(values.size())};
  }
  return XFieldCoord(std::move(values));
}

std::pair<std::size_t, std::size_t> parse_size(const QueryParams& params,
                                               const model::ModelConfig& cfg) {
  std::size_t w = cfg.width, h = cfg.height;
  if (auto v = single(params, "w")) w = parse_count(*v, "bad_size", "w", 1, kMaxOutputSide);
  if (auto v = single(params, "h")) h = parse_count(*v, "bad_size", "h", 1, kMaxOutputSide);
  return {w, h};
}

std::size_t parse_axis(const QueryParams& params, const model::ModelConfig& cfg) {
  const auto raw = single(params, "axis");
  if (!raw) throw BadRequest{"missing_parameter", "query parameter \"axis\" is required"};
  for (std::size_t i = 0; i < cfg.dims.size(); ++i) {
    if (cfg.dims[i].name == *raw) return i;
  }
  return parse_count(*raw, "bad_axis", "axis", 0, cfg.dims.size() - 1);
}

HttpReply png_reply(const Tensor<float>& image) {
  const auto bytes = data::encode_png(image);
  return {200, "image/png", std::string(bytes.begin(), bytes.end())};
}

nlohmann::ordered_json meta_json(const Model& m) {
  const auto& cfg = m.config();
  nlohmann::ordered_json dims = nlohmann::ordered_json::array();
  for (const auto& d : cfg.dims) {
    dims.push_back({{"name", d.name}, {"kind", std::string(to_string(d.kind))},
                    {"min", d.min}, {"max", d.max}});
  }
  return {{"name", m.name},
          {"dims", std::move(dims)},
          {"resolution", {{"width", cfg.width}, {"height", cfg.height}}},
          {"delight", cfg.delight},
          {"observations", m.observations.size()}};
}

}  // namespace

HttpReply handle_api(const Renderer& renderer, std::string_view path,
                     const QueryParams& params) {
  const Model& m = renderer.model();
  const auto& cfg = m.config();
  try {
    if (path == "/api/meta") return json_reply(200, meta_json(m));
    if (path == "/api/render") {
      const XFieldCoord c = parse_coord(params, cfg.dimension_count());
      const auto [w, h] = parse_size(params, cfg);
      return png_reply(renderer.render_frame(c, w, h));
    }
    if (path == "/api/effect") {
      const XFieldCoord c = parse_coord(params, cfg.dimension_count());
      const auto [w, h] = parse_size(params, cfg);
      const std::size_t axis = parse_axis(params, cfg);
      double radius = 0.0;
      if (auto v = single(params, "radius")) radius = parse_double(*v, "bad_radius", "radius");
      if (radius < 0.0) throw BadRequest{"bad_radius", "radius must be >= 0"};
      std::size_t n = 1;
      if (auto v = single(params, "n")) n = parse_count(*v, "bad_samples", "n", 1, kMaxEffectSamples);
      return png_reply(renderer.render_effect(c, axis, radius, n, w, h));
    }
    return error_reply(404, "not_found", "no endpoint at " + std::string(path));
  } catch (const BadRequest& e) {
    return error_reply(400, e.code, e.message);
  } catch (const Error& e) {
    return error_reply(500, "internal", e.what());
  }
}

std::string placeholder_page(const Model& model) {
  std::string html =
      "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>xfields</title></head>\n"
      "<body>\n<h1>xfields render service</h1>\n<p>Model: ";
  for (char ch : model.name) {
    switch (ch) {
      case '<': html += "&lt;"; break;
      case '>': html += "&gt;"; break;
      case '&': html += "&amp;"; break;
      default: html += ch;
    }
  }
  html +=
      "</p>\n<p>No viewer assets are installed. The API is available at "
      "<code>/api/meta</code>, <code>/api/render?c=...</code> and "
      "<code>/api/effect?c=...&amp;axis=...&amp;radius=...&amp;n=...</code>.</p>\n"
      "</body></html>\n";
  return html;
}

ServiceOptions parse_bind_address(std::string_view address) {
  ServiceOptions o;
  std::string_view port = address;
  if (const auto colon = address.rfind(':'); colon != std::string_view::npos) {
    if (colon > 0) o.host = std::string(address.substr(0, colon));
    port = address.substr(colon + 1);
  }
  int p = -1;
  const char* end = port.data() + port.size();
  auto [ptr, ec] = std::from_chars(port.data(), end, p);
  if (port.empty() || ec != std::errc() || ptr != end || p < 0 || p > 65535) {
    throw ConfigError("invalid bind address \"" + std::string(address) + "\"");
  }
  o.port = p;
  return o;
}

struct Service::Impl {
  std::shared_ptr<const Renderer> renderer;
  ServiceOptions options;
  httplib::Server server;
  bool bound = false;
};

Service::Service(std::shared_ptr<const Renderer> renderer, ServiceOptions options)
    : impl_(std::make_unique<Impl>()) {
  if (!renderer) throw ConfigError("no model loaded");
  impl_->renderer = std::move(renderer);
  impl_->options = std::move(options);

  auto api = [this](const httplib::Request& req, httplib::Response& res) {
    QueryParams params(req.params.begin(), req.params.end());
    const HttpReply r = handle_api(*impl_->renderer, req.path, params);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  impl_->server.Get("/api/.*", api);

  const auto& dir = impl_->options.static_dir;
  if (!dir.empty()) {
    if (!std::filesystem::is_directory(dir)) {
      throw FileNotFoundError("static assets directory not found: " + dir.string());
    }
    if (!impl_->server.set_mount_point("/", dir.string())) {
      throw FileNotFoundError("cannot serve " + dir.string());
    }
  } else {
    const std::string page = placeholder_page(impl_->renderer->model());
    impl_->server.Get("/", [page](const httplib::Request&, httplib::Response& res) {
      res.set_content(page, "text/html; charset=utf-8");
    });
  }
}

Service::~Service() { stop(); }

int Service::bind() {
  const auto& o = impl_->options;
  int port = o.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(o.host);
  } else if (!impl_->server.bind_to_port(o.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw Error("cannot bind " + o.host + ":" + std::to_string(o.port) +
                " (address in use or unavailable)");
  }
  impl_->bound = true;
  return port;
}

void Service::run() {
  if (!impl_->bound) throw GraphStateError("Service::run called before bind");
  impl_->server.listen_after_bind();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace xfields::renderd
