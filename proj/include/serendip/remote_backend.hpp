#pragma once

#include <string>

#include <httplib.h>
#include <json.hpp>

#include "serendip/errors.hpp"
#include "serendip/planner.hpp"

namespace serendip {

// HTTP JSON backend. Request: {"prompt_type", "blocks":[{"kind","text"}],
// "instruction"}; response: {"text"}. Transport failures surface as
// BackendError; plan_cluster applies the retry policy.
class RemoteBackend : public GenerationBackend {
 public:
  RemoteBackend(const std::string& host, int port,
                std::string path = "/generate", int timeout_seconds = 30)
      : host_(host), port_(port), path_(std::move(path)),
        timeout_seconds_(timeout_seconds) {}

  bool deterministic() const override { return false; }

 protected:
  std::string do_generate(const Prompt& prompt, const std::string&) override {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);
    auto res = client.Post(path_, prompt.to_wire().dump(), "application/json");
    if (!res)
      throw BackendError("remote backend unreachable: " + host_ + ":" +
                         std::to_string(port_));
    if (res->status != 200)
      throw BackendError("remote backend HTTP " + std::to_string(res->status));
    try {
      return json::parse(res->body).at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw BackendError(std::string("remote backend bad response: ") + e.what());
    }
  }

 private:
  std::string host_;
  int port_;
  std::string path_;
  int timeout_seconds_;
};

}  // namespace serendip
