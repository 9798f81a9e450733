#include "reem/llm/http_provider.hpp"

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "reem/errors.hpp"

namespace reem::llm {

using nlohmann::json;

struct HttpChatProvider::Impl {
  ProviderConfig config;
};

HttpChatProvider::HttpChatProvider(ProviderConfig config)
    : impl_(new Impl{std::move(config)}) {
  if (impl_->config.endpoint.empty()) {
    throw ValidationError("http provider needs an endpoint");
  }
}

HttpChatProvider::~HttpChatProvider() = default;

std::string HttpChatProvider::provider_id() const {
  return impl_->config.provider_id;
}

std::string HttpChatProvider::complete(const ChatRequest& request) {
  const ProviderConfig& config = impl_->config;

  httplib::Headers headers;
  if (!config.credential_env.empty()) {
    const char* credential = std::getenv(config.credential_env.c_str());
    if (!credential || *credential == '\0') {
      throw TransportError("credential environment variable '" +
                           config.credential_env + "' is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + credential);
  }

  std::string content = request.rendered_prompt;
  for (const std::string& a : request.attachments) {
    content += "\n\n[attachment] " + a;
  }

  json body;
  body["model"] = config.model;
  body["messages"] = json::array({{{"role", "user"}, {"content", content}}});
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output;

  // A fresh client per call keeps this object safe to share across the
  // gateway's concurrent slots.
  httplib::Client client(config.endpoint);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(120, 0);

  httplib::Result result = client.Post("/v1/chat/completions", headers,
                                       body.dump(), "application/json");
  if (!result) {
    throw TransportError("no response from " + config.endpoint + " (" +
                         httplib::to_string(result.error()) + ")");
  }
  if (result->status != 200) {
    throw TransportError("endpoint " + config.endpoint + " returned HTTP " +
                         std::to_string(result->status));
  }

  json reply = json::parse(result->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("choices") ||
      !reply["choices"].is_array() || reply["choices"].empty()) {
    throw TransportError("malformed completion payload from " +
                         config.endpoint);
  }
  const json& first = reply["choices"][0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    throw TransportError("completion payload has no message content");
  }
  return first["message"]["content"].get<std::string>();
}

}  // namespace reem::llm
