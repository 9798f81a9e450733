#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <variant>

#include "reem/llm/chat.hpp"
#include "reem/llm/schemas.hpp"

namespace reem::llm {

/// Result of a structured completion: the typed payload plus how it was won.
struct StructuredResult {
  std::variant<std::vector<ParsedInsight>, std::vector<ParsedCode>,
               std::vector<ParsedSection>, ParsedRatingMatrix>
      value;
  int retries = 0;
  ChatResponse response;

  const std::vector<ParsedInsight>& insights() const {
    return std::get<std::vector<ParsedInsight>>(value);
  }
  const std::vector<ParsedCode>& codes() const {
    return std::get<std::vector<ParsedCode>>(value);
  }
  const std::vector<ParsedSection>& sections() const {
    return std::get<std::vector<ParsedSection>>(value);
  }
  const ParsedRatingMatrix& ratings() const {
    return std::get<ParsedRatingMatrix>(value);
  }
};

/// Provider-agnostic chat interface with a deterministic response cache,
/// bounded concurrency, retry, and structured-output parsing.
///
/// The cache key covers exactly (template_id, rendered_prompt, attachments,
/// temperature); provider identity and decoding budgets do not affect it.
/// With an empty cache_dir responses are cached in memory only.
class ChatGateway {
 public:
  ChatGateway(std::shared_ptr<ChatProvider> provider, ProviderConfig config,
              std::filesystem::path cache_dir = {});

  /// Stable digest of the request fields that determine the reply.
  static std::string cache_key(const ChatRequest& request);

  /// Returns the provider text, retrying transport failures up to
  /// retry_limit times (retry_limit + 1 attempts total). Identical requests
  /// come back from the cache with cached = true.
  ChatResponse complete(const ChatRequest& request);

  /// Parses the reply as `schema`. On a malformed reply, re-asks once with
  /// a corrective suffix; a second failure raises StructuredOutputError
  /// carrying the raw text.
  StructuredResult complete_structured(const ChatRequest& request,
                                       SchemaId schema);

  const ProviderConfig& config() const { return config_; }
  std::uint64_t cache_hits() const { return cache_hits_.load(); }
  std::uint64_t provider_attempts() const { return provider_attempts_.load(); }

 private:
  ChatResponse call_with_retry(const ChatRequest& request);
  void store(const std::string& key, const ChatRequest& request,
             const ChatResponse& response);
  bool try_load(const std::string& key, ChatResponse& out);

  std::shared_ptr<ChatProvider> provider_;
  ProviderConfig config_;
  std::filesystem::path cache_dir_;

  mutable std::shared_mutex cache_mutex_;
  std::map<std::string, ChatResponse> memory_cache_;
  std::counting_semaphore<> slots_;
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> provider_attempts_{0};
};

}  // namespace reem::llm
