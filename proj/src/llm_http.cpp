#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include <json.hpp>

#include "mtseg/synth.hpp"

namespace mtseg::synth {

HttpChatClient::HttpChatClient(HttpClientOptions options) : options_(std::move(options)) {
  const char* key = std::getenv(options_.api_key_env.c_str());
  if (!key || !*key) throw ConfigError("environment variable " + options_.api_key_env + " is not set");
  api_key_ = key;
  const auto scheme = options_.endpoint.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint must include a scheme: " + options_.endpoint);
  const auto slash = options_.endpoint.find('/', scheme + 3);
  scheme_host_ = options_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : options_.endpoint.substr(slash);
}

std::string HttpChatClient::complete(const std::string& prompt) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_bearer_token_auth(api_key_);
  const nlohmann::json body = {
      {"model", options_.model},
      {"temperature", options_.temperature},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
  };
  const auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransportError("HTTP " + std::to_string(res->status));
  if (res->status != 200) throw Error("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed chat completion response: ") + e.what());
  }
}

}  // namespace mtseg::synth
