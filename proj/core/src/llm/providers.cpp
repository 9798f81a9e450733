#include "reem/llm/providers.hpp"

#include "reem/digest.hpp"
#include "reem/errors.hpp"

namespace reem::llm {

ScriptedProvider::ScriptedProvider(std::string provider_id)
    : provider_id_(std::move(provider_id)) {}

void ScriptedProvider::enqueue(const std::string& template_id,
                               std::string reply) {
  std::lock_guard lock(mutex_);
  queues_[template_id].push_back({false, std::move(reply)});
}

void ScriptedProvider::enqueue_failure(const std::string& template_id,
                                       std::string message) {
  std::lock_guard lock(mutex_);
  queues_[template_id].push_back({true, std::move(message)});
}

void ScriptedProvider::set_default(const std::string& template_id,
                                   std::string reply) {
  std::lock_guard lock(mutex_);
  defaults_[template_id] = std::move(reply);
}

std::string ScriptedProvider::complete(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  requests_.push_back(request);
  ++calls_[request.template_id];

  auto queue = queues_.find(request.template_id);
  if (queue != queues_.end() && !queue->second.empty()) {
    Entry entry = std::move(queue->second.front());
    queue->second.pop_front();
    if (entry.fail) throw TransportError(entry.text);
    return entry.text;
  }
  auto fallback = defaults_.find(request.template_id);
  if (fallback != defaults_.end()) return fallback->second;

  // An unscripted template behaves like a provider outage, which is what a
  // test that never scripted it is usually probing.
  throw TransportError("no scripted reply for template '" +
                       request.template_id + "'");
}

int ScriptedProvider::calls(const std::string& template_id) const {
  std::lock_guard lock(mutex_);
  auto it = calls_.find(template_id);
  return it == calls_.end() ? 0 : it->second;
}

int ScriptedProvider::total_calls() const {
  std::lock_guard lock(mutex_);
  int total = 0;
  for (const auto& [id, count] : calls_) total += count;
  return total;
}

std::vector<ChatRequest> ScriptedProvider::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::string DigestEchoProvider::complete(const ChatRequest& request) {
  std::string canon = request.rendered_prompt;
  for (const std::string& a : request.attachments) {
    canon += '\x1f';
    canon += a;
  }
  return "echo:" + digest_of(canon);
}

}  // namespace reem::llm
