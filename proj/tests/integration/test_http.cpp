// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

// The render service over a real loopback socket.

#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "support/temp_dir.hpp"
#include "support/tiny_model.hpp"
#include "xfields/image_io.hpp"
#include "xfields/service.hpp"

namespace xfields {
namespace {

class RunningService {
 public:
  explicit RunningService(renderd::ServiceOptions opt)
      : service_(testing::tiny_renderer(), std::move(opt)) {
    port_ = service_.bind();
    thread_ = std::thread([this] { service_.run(); });
    service_.wait_until_ready();
  }
  ~RunningService() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  renderd::Service service_;
  int port_ = 0;
  std::thread thread_;
};

renderd::ServiceOptions any_port() {
  renderd::ServiceOptions o;
  o.port = 0;
  return o;
}

TEST_SUITE("integration.http") {
  TEST_CASE("api endpoints over a socket") {
    RunningService svc(any_port());
    auto cli = svc.client();

    auto meta = cli.Get("/api/meta");
    REQUIRE(meta);
    CHECK(meta->status == 200);
    CHECK(nlohmann::json::parse(meta->body)["dims"].size() == 1);

    auto png = cli.Get("/api/render?c=0.4&w=32&h=8");
    REQUIRE(png);
    CHECK(png->status == 200);
    CHECK(png->get_header_value("Content-Type") == "image/png");
    const std::vector<std::uint8_t> bytes(png->body.begin(), png->body.end());
    CHECK(data::decode_png(bytes).shape() == ad::Shape{8, 32, 3});

    auto again = cli.Get("/api/render?c=0.4&w=32&h=8");
    REQUIRE(again);
    CHECK(again->body == png->body);

    auto bad = cli.Get("/api/render?c=0.4,0.1");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(nlohmann::json::parse(bad->body)["code"] == "arity_mismatch");

    auto eff = cli.Get("/api/effect?c=0.5&axis=t&radius=0.2&n=3");
    REQUIRE(eff);
    CHECK(eff->status == 200);

    auto missing = cli.Get("/api/teapot");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    auto root = cli.Get("/");
    REQUIRE(root);
    CHECK(root->status == 200);
    CHECK(root->body.find("/api/render") != std::string::npos);
  }

  TEST_CASE("viewer assets are served from the static directory") {
    testing::TempDir dir;
    std::ofstream(dir / "index.html") << "<html>viewer</html>";
    auto opt = any_port();
    opt.static_dir = dir.path();
    RunningService svc(opt);
    auto cli = svc.client();
    auto root = cli.Get("/");
    REQUIRE(root);
    CHECK(root->status == 200);
    CHECK(root->body == "<html>viewer</html>");
    auto meta = cli.Get("/api/meta");
    REQUIRE(meta);
    CHECK(meta->status == 200);

    auto gone = any_port();
    gone.static_dir = dir / "missing";
    CHECK_THROWS_AS(renderd::Service(testing::tiny_renderer(), gone), FileNotFoundError);
  }

  TEST_CASE("parallel clients get the serial answers") {
    RunningService svc(any_port());
    std::vector<std::string> serial;
    for (int i = 0; i < 6; ++i) {
      auto r = svc.client().Get("/api/render?c=" + std::to_string(i / 5.0));
      REQUIRE(r);
      serial.push_back(r->body);
    }
    std::vector<std::string> parallel(6);
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) {
      threads.emplace_back([&, i] {
        auto r = svc.client().Get("/api/render?c=" + std::to_string(i / 5.0));
        if (r) parallel[i] = r->body;
      });
    }
    for (auto& t : threads) t.join();
    CHECK(parallel == serial);
  }
}

}  // namespace
}  // namespace xfields
