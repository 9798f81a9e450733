#pragma once

#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "reem/llm/chat.hpp"

namespace reem::llm {

/// Offline provider that replays canned replies from per-template queues.
/// A queue entry may be a failure marker; when a queue runs dry the
/// template's default reply (if any) answers every further call.
class ScriptedProvider : public ChatProvider {
 public:
  explicit ScriptedProvider(std::string provider_id = "scripted");

  std::string provider_id() const override { return provider_id_; }

  /// Queue one reply for the template, consumed in FIFO order.
  void enqueue(const std::string& template_id, std::string reply);

  /// Queue one transport failure for the template.
  void enqueue_failure(const std::string& template_id,
                       std::string message = "scripted transport failure");

  /// Reply used whenever the template's queue is empty.
  void set_default(const std::string& template_id, std::string reply);

  std::string complete(const ChatRequest& request) override;

  /// Call accounting and full request capture, for assertions.
  int calls(const std::string& template_id) const;
  int total_calls() const;
  std::vector<ChatRequest> requests() const;

 private:
  struct Entry {
    bool fail = false;
    std::string text;
  };

  std::string provider_id_;
  mutable std::mutex mutex_;
  std::map<std::string, std::deque<Entry>> queues_;
  std::map<std::string, std::string> defaults_;
  std::map<std::string, int> calls_;
  std::vector<ChatRequest> requests_;
};

/// Deterministic provider that answers with a digest of the prompt, so
/// distinct prompts get distinct, reproducible replies.
class DigestEchoProvider : public ChatProvider {
 public:
  explicit DigestEchoProvider(std::string provider_id = "digest-echo")
      : provider_id_(std::move(provider_id)) {}

  std::string provider_id() const override { return provider_id_; }
  std::string complete(const ChatRequest& request) override;

 private:
  std::string provider_id_;
};

}  // namespace reem::llm
