#include "reem/llm/gateway.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reem/digest.hpp"
#include "reem/errors.hpp"
#include "reem/format.hpp"

namespace reem::llm {

namespace {

using nlohmann::json;

int checked_concurrency(const ProviderConfig& config) {
  if (config.max_concurrency < 1) {
    throw ValidationError("max_concurrency must be >= 1, got " +
                          std::to_string(config.max_concurrency));
  }
  return config.max_concurrency;
}

void validate_request(const ChatRequest& request) {
  if (request.rendered_prompt.empty()) {
    throw ValidationError("chat request has an empty prompt");
  }
  if (!std::isfinite(request.temperature) || request.temperature < 0.0) {
    throw ValidationError("temperature must be a finite value >= 0");
  }
  if (request.max_output < 1) {
    throw ValidationError("max_output must be >= 1");
  }
}

struct SlotGuard {
  std::counting_semaphore<>& slots;
  explicit SlotGuard(std::counting_semaphore<>& s) : slots(s) {
    slots.acquire();
  }
  ~SlotGuard() { slots.release(); }
};

}  // namespace

ChatGateway::ChatGateway(std::shared_ptr<ChatProvider> provider,
                         ProviderConfig config,
                         std::filesystem::path cache_dir)
    : provider_(std::move(provider)),
      config_(std::move(config)),
      cache_dir_(std::move(cache_dir)),
      slots_(checked_concurrency(config_)) {
  if (!provider_) throw ValidationError("gateway needs a provider");
  if (config_.retry_limit < 0) {
    throw ValidationError("retry_limit must be >= 0");
  }
  if (!cache_dir_.empty()) {
    std::filesystem::create_directories(cache_dir_);
  }
}

std::string ChatGateway::cache_key(const ChatRequest& request) {
  // Length-prefixed canonical form so no field content can collide with the
  // separators. Provider identity and output budget are deliberately absent.
  std::string canon = "chat/1;";
  auto field = [&canon](std::string_view v) {
    canon += std::to_string(v.size());
    canon += ':';
    canon += v;
    canon += ';';
  };
  field(request.template_id);
  field(request.rendered_prompt);
  canon += std::to_string(request.attachments.size());
  canon += '#';
  for (const std::string& a : request.attachments) field(a);
  field(canonical_double(request.temperature));
  return digest_of(canon);
}

bool ChatGateway::try_load(const std::string& key, ChatResponse& out) {
  {
    std::shared_lock lock(cache_mutex_);
    auto it = memory_cache_.find(key);
    if (it != memory_cache_.end()) {
      out = it->second;
      return true;
    }
  }
  if (cache_dir_.empty()) return false;

  const auto path = cache_dir_ / (key + ".json");
  std::ifstream file(path);
  if (!file) return false;
  std::ostringstream buffer;
  buffer << file.rdbuf();

  json j = json::parse(buffer.str(), nullptr, false);
  if (j.is_discarded() || !j.contains("response")) {
    throw IoError("corrupt cache entry: " + path.string());
  }
  const json& r = j.at("response");
  out.text = r.at("text").get<std::string>();
  out.provider_id = r.at("provider_id").get<std::string>();
  out.latency_ms = r.value("latency_ms", std::int64_t{0});
  out.cached = false;

  std::unique_lock lock(cache_mutex_);
  memory_cache_[key] = out;
  return true;
}

void ChatGateway::store(const std::string& key, const ChatRequest& request,
                        const ChatResponse& response) {
  std::unique_lock lock(cache_mutex_);
  memory_cache_[key] = response;
  if (cache_dir_.empty()) return;

  json j;
  j["request"] = {{"template_id", request.template_id},
                  {"rendered_prompt", request.rendered_prompt},
                  {"attachments", request.attachments},
                  {"temperature", request.temperature},
                  {"max_output", request.max_output}};
  j["response"] = {{"text", response.text},
                   {"provider_id", response.provider_id},
                   {"latency_ms", response.latency_ms}};

  const auto path = cache_dir_ / (key + ".json");
  const auto tmp = cache_dir_ / (key + ".json.tmp");
  {
    std::ofstream file(tmp, std::ios::trunc);
    if (!file) throw IoError("cannot write cache entry " + tmp.string());
    file << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

ChatResponse ChatGateway::call_with_retry(const ChatRequest& request) {
  const int attempts = config_.retry_limit + 1;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    provider_attempts_.fetch_add(1);
    try {
      const auto t0 = std::chrono::steady_clock::now();
      std::string text = provider_->complete(request);
      const auto elapsed = std::chrono::steady_clock::now() - t0;
      if (text.empty()) {
        // An empty reply is useless downstream; treat it like any other
        // transient provider fault.
        throw TransportError("provider '" + provider_->provider_id() +
                             "' returned an empty response");
      }
      ChatResponse response;
      response.text = std::move(text);
      response.provider_id = provider_->provider_id();
      response.cached = false;
      response.latency_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(elapsed)
              .count();
      return response;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw TransportError("provider '" + provider_->provider_id() +
                       "' failed after " + std::to_string(attempts) +
                       " attempts; last error: " + last_error);
}

ChatResponse ChatGateway::complete(const ChatRequest& request) {
  validate_request(request);
  const std::string key = cache_key(request);

  ChatResponse hit;
  if (try_load(key, hit)) {
    cache_hits_.fetch_add(1);
    hit.cached = true;
    return hit;
  }

  // Two threads racing on the same key may both reach the provider; with
  // deterministic providers both store the same bytes, so last write wins
  // harmlessly.
  SlotGuard slot(slots_);
  ChatResponse fresh = call_with_retry(request);
  store(key, request, fresh);
  return fresh;
}

namespace {

StructuredResult parse_as(const ChatResponse& response, SchemaId schema,
                          int retries) {
  StructuredResult result;
  result.retries = retries;
  result.response = response;
  switch (schema) {
    case SchemaId::InsightList:
      result.value = parse_insight_list(response.text);
      break;
    case SchemaId::CodeList:
      result.value = parse_code_list(response.text);
      break;
    case SchemaId::Summary:
      result.value = parse_summary(response.text);
      break;
    case SchemaId::RatingMatrix:
      result.value = parse_rating_matrix(response.text);
      break;
  }
  return result;
}

}  // namespace

StructuredResult ChatGateway::complete_structured(const ChatRequest& request,
                                                  SchemaId schema) {
  const ChatResponse first = complete(request);
  std::string first_error;
  try {
    return parse_as(first, schema, 0);
  } catch (const ValidationError& e) {
    first_error = e.what();
  }

  ChatRequest corrective = request;
  corrective.rendered_prompt += "\n\nYour previous reply could not be used: " +
                                first_error + ". " +
                                schema_instructions(schema);
  const ChatResponse second = complete(corrective);
  try {
    return parse_as(second, schema, 1);
  } catch (const ValidationError& e) {
    throw StructuredOutputError(
        "reply did not match the " + std::string(schema_name(schema)) +
            " structure after a corrective re-ask: " + e.what(),
        second.text);
  }
}

}  // namespace reem::llm
