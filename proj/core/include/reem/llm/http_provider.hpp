#pragma once

#include <memory>
#include <string>

#include "reem/llm/chat.hpp"

namespace reem::llm {

/// Speaks HTTP chat-completion conventions (POST /v1/chat/completions with
/// a bearer credential read from the environment variable named in the
/// config). Attachments are appended to the prompt body as captioned lines.
class HttpChatProvider : public ChatProvider {
 public:
  explicit HttpChatProvider(ProviderConfig config);
  ~HttpChatProvider() override;

  HttpChatProvider(const HttpChatProvider&) = delete;
  HttpChatProvider& operator=(const HttpChatProvider&) = delete;

  std::string provider_id() const override;
  std::string complete(const ChatRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace reem::llm
