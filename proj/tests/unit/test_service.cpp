// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include <future>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "support/tiny_model.hpp"
#include "xfields/image_io.hpp"
#include "xfields/service.hpp"

namespace xfields {
namespace {

using renderd::handle_api;
using renderd::QueryParams;

std::string error_code(const renderd::HttpReply& r) {
  return nlohmann::json::parse(r.body).at("code").get<std::string>();
}

TEST_SUITE("service") {
  TEST_CASE("meta describes the model") {
    const auto r = testing::tiny_renderer(true);
    const auto reply = handle_api(*r, "/api/meta", {});
    CHECK(reply.status == 200);
    CHECK(reply.content_type == "application/json");
    const auto doc = nlohmann::json::parse(reply.body);
    CHECK(doc["dims"].size() == r->dimension_count());
    CHECK(doc["dims"][0]["name"] == "t");
    CHECK(doc["resolution"]["width"] == 16);
    CHECK(doc["delight"] == true);
    CHECK(doc["observations"] == 3);
  }

  TEST_CASE("render returns a deterministic PNG of the frame") {
    const auto r = testing::tiny_renderer();
    const QueryParams q{{"c", "0.3"}};
    const auto a = handle_api(*r, "/api/render", q);
    REQUIRE(a.status == 200);
    CHECK(a.content_type == "image/png");
    CHECK(handle_api(*r, "/api/render", q).body == a.body);
    const std::vector<std::uint8_t> bytes(a.body.begin(), a.body.end());
    const auto decoded = data::decode_png(bytes);
    CHECK(decoded == data::decode_png(data::encode_png(r->render_frame({0.3}))));

    const auto sized = handle_api(*r, "/api/render", {{"c", "0.3"}, {"w", "20"}, {"h", "10"}});
    const std::vector<std::uint8_t> sb(sized.body.begin(), sized.body.end());
    CHECK(data::decode_png(sb).shape() == ad::Shape{10, 20, 3});

    const auto eff = handle_api(*r, "/api/effect",
                                {{"c", "0.5"}, {"axis", "t"}, {"radius", "0.2"}, {"n", "3"}});
    REQUIRE(eff.status == 200);
    const auto by_index = handle_api(*r, "/api/effect",
                                     {{"c", "0.5"}, {"axis", "0"}, {"radius", "0.2"}, {"n", "3"}});
    CHECK(by_index.body == eff.body);
  }

  TEST_CASE("malformed requests get 400 with a code; unknown paths 404") {
    const auto r = testing::tiny_renderer();
    struct Case {
      const char* path;
      QueryParams q;
      const char* code;
    };
    const std::vector<Case> cases{
        {"/api/render", {{"c", "0.1,0.2"}}, "arity_mismatch"},
        {"/api/render", {}, "missing_parameter"},
        {"/api/render", {{"c", "0.1"}, {"c", "0.2"}}, "duplicate_parameter"},
        {"/api/render", {{"c", "abc"}}, "bad_coordinate"},
        {"/api/render", {{"c", "inf"}}, "bad_coordinate"},
        {"/api/render", {{"c", "0.1"}, {"w", "0"}}, "bad_size"},
        {"/api/render", {{"c", "0.1"}, {"h", "-4"}}, "bad_size"},
        {"/api/effect", {{"c", "0.1"}}, "missing_parameter"},
        {"/api/effect", {{"c", "0.1"}, {"axis", "7"}}, "bad_axis"},
        {"/api/effect", {{"c", "0.1"}, {"axis", "zz"}}, "bad_axis"},
        {"/api/effect", {{"c", "0.1"}, {"axis", "0"}, {"radius", "-1"}}, "bad_radius"},
        {"/api/effect", {{"c", "0.1"}, {"axis", "0"}, {"n", "0"}}, "bad_samples"},
    };
    for (const auto& c : cases) {
      CAPTURE(c.code);
      const auto reply = handle_api(*r, c.path, c.q);
      CHECK(reply.status == 400);
      CHECK(reply.content_type == "application/json");
      CHECK(error_code(reply) == c.code);
    }
    const auto missing = handle_api(*r, "/api/nope", {});
    CHECK(missing.status == 404);
    CHECK(error_code(missing) == "not_found");
  }

  TEST_CASE("bind address parsing") {
    auto o = renderd::parse_bind_address("0.0.0.0:9000");
    CHECK(o.host == "0.0.0.0");
    CHECK(o.port == 9000);
    o = renderd::parse_bind_address(":81");
    CHECK(o.host == "127.0.0.1");
    CHECK(o.port == 81);
    CHECK(renderd::parse_bind_address("0").port == 0);
    for (const char* bad : {"", "host:", "host:x", ":70000", "a:b:c"}) {
      CAPTURE(bad);
      CHECK_THROWS_AS(renderd::parse_bind_address(bad), ConfigError);
    }
  }

  TEST_CASE("placeholder page escapes the model name") {
    auto m = testing::tiny_model();
    m.name = "<b>&x";
    const auto html = renderd::placeholder_page(m);
    CHECK(html.find("&lt;b&gt;&amp;x") != std::string::npos);
    CHECK(html.find("<b>&x") == std::string::npos);
  }

  TEST_CASE("concurrent renders equal serial ones") {
    const auto r = testing::tiny_renderer(true);
    std::vector<std::string> serial;
    for (int i = 0; i < 8; ++i) {
      serial.push_back(handle_api(*r, "/api/render", {{"c", std::to_string(i / 7.0)}}).body);
    }
    std::vector<std::future<std::string>> jobs;
    for (int i = 0; i < 8; ++i) {
      jobs.push_back(std::async(std::launch::async, [&r, i] {
        return handle_api(*r, "/api/render", {{"c", std::to_string(i / 7.0)}}).body;
      }));
    }
    for (int i = 0; i < 8; ++i) CHECK(jobs[i].get() == serial[i]);
  }
}

}  // namespace
}  // namespace xfields
