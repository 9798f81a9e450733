#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace reem::llm {

/// One rendered prompt headed for a chat provider. Image material travels as
/// references/captions in `attachments`; providers fold them into the prompt
/// body as needed.
struct ChatRequest {
  std::string template_id;
  std::string rendered_prompt;
  std::vector<std::string> attachments;
  double temperature = 0.0;
  int max_output = 1024;
};

struct ChatResponse {
  std::string text;
  std::string provider_id;
  bool cached = false;
  std::int64_t latency_ms = 0;
};

struct ProviderConfig {
  std::string provider_id;
  std::string endpoint;
  std::string model;
  /// Name of the environment variable holding the API credential. The
  /// credential itself never appears in config files or logs.
  std::string credential_env;
  int max_concurrency = 4;
  int retry_limit = 2;
};

/// Transport-level provider. Implementations raise TransportError on
/// failure; retry policy lives in the gateway, not here.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;

  virtual std::string provider_id() const = 0;
  virtual std::string complete(const ChatRequest& request) = 0;
};

}  // namespace reem::llm
