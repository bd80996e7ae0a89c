#include "slr/llm.hpp"

#include <cstdlib>
#include <fstream>

#include <spdlog/spdlog.h>

#include "slr/errors.hpp"
#include "slr/files.hpp"
#include "slr/hashing.hpp"

namespace slr::llm {

using nlohmann::json;

std::string_view role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "assistant") return Role::Assistant;
  if (name == "tool") return Role::Tool;
  if (name == "user") return Role::User;
  throw Error(ErrorCode::parse_error, "unknown role: " + std::string(name));
}

std::string_view finish_reason_name(FinishReason reason) {
  switch (reason) {
    case FinishReason::Stop: return "stop";
    case FinishReason::ToolCall: return "tool_call";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
  }
  return "stop";
}

namespace {

FinishReason parse_finish_reason(std::string_view name) {
  if (name == "tool_call" || name == "tool_calls" || name == "function_call") return FinishReason::ToolCall;
  if (name == "length") return FinishReason::Length;
  if (name == "error") return FinishReason::Error;
  return FinishReason::Stop;
}

json optional_int(const std::optional<int>& v) { return v ? json(*v) : json(); }

std::optional<int> read_optional_int(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer()) return std::nullopt;
  return it->get<int>();
}

json tool_calls_json(const std::vector<ToolCall>& calls) {
  json out = json::array();
  for (const auto& c : calls) out.push_back({{"id", c.id}, {"name", c.name}, {"arguments", c.arguments}});
  return out;
}

}  // namespace

void ChatRequest::validate() const {
  if (messages.empty()) throw Error(ErrorCode::invalid_request, "chat request has no messages");
  if (messages.front().role != Role::System && messages.front().role != Role::User)
    throw Error(ErrorCode::invalid_request, "first message must be a system or user message");
  if (temperature < 0) throw Error(ErrorCode::invalid_request, "temperature must be >= 0");
}

ChatResponse ChatResponse::text(std::string content) {
  ChatResponse r;
  r.content = std::move(content);
  return r;
}

ChatResponse ChatResponse::tool(std::string name, std::string arguments, std::string id) {
  ChatResponse r;
  r.tool_calls.push_back({std::move(id), std::move(name), std::move(arguments)});
  r.finish_reason = FinishReason::ToolCall;
  return r;
}

json to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json msg = {{"role", role_name(m.role)}, {"content", m.content}};
    if (!m.tool_calls.empty()) msg["tool_calls"] = tool_calls_json(m.tool_calls);
    if (!m.tool_call_id.empty()) msg["tool_call_id"] = m.tool_call_id;
    if (!m.name.empty()) msg["name"] = m.name;
    messages.push_back(std::move(msg));
  }
  json tools = json::array();
  for (const auto& t : request.tools)
    tools.push_back({{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}});
  return {{"model", request.model_name},     {"messages", messages},
          {"tools", tools},                  {"temperature", request.temperature},
          {"max_output_tokens", request.max_output_tokens}, {"request_tag", request.request_tag}};
}

json to_json(const ChatResponse& response) {
  return {{"content", response.content},
          {"tool_calls", tool_calls_json(response.tool_calls)},
          {"finish_reason", finish_reason_name(response.finish_reason)},
          {"usage",
           {{"prompt_tokens", optional_int(response.usage.prompt_tokens)},
            {"output_tokens", optional_int(response.usage.output_tokens)}}},
          {"attempts", response.attempts}};
}

ChatResponse response_from_json(const json& j) {
  ChatResponse r;
  r.content = j.value("content", "");
  for (const auto& c : j.value("tool_calls", json::array()))
    r.tool_calls.push_back({c.value("id", ""), c.value("name", ""), c.value("arguments", "")});
  r.finish_reason = parse_finish_reason(j.value("finish_reason", "stop"));
  if (const auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
    r.usage.prompt_tokens = read_optional_int(*usage, "prompt_tokens");
    r.usage.output_tokens = read_optional_int(*usage, "output_tokens");
  }
  r.attempts = j.value("attempts", 1);
  return r;
}

json to_wire(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json msg = {{"role", role_name(m.role)}, {"content", m.content}};
    if (!m.tool_calls.empty()) {
      json calls = json::array();
      for (const auto& c : m.tool_calls)
        calls.push_back({{"id", c.id}, {"type", "function"}, {"function", {{"name", c.name}, {"arguments", c.arguments}}}});
      msg["tool_calls"] = std::move(calls);
    }
    if (m.role == Role::Tool) msg["tool_call_id"] = m.tool_call_id;
    messages.push_back(std::move(msg));
  }
  json body = {{"model", request.model_name},
               {"messages", messages},
               {"temperature", request.temperature},
               {"max_tokens", request.max_output_tokens}};
  if (!request.tools.empty()) {
    json tools = json::array();
    for (const auto& t : request.tools)
      tools.push_back({{"type", "function"},
                       {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
    body["tools"] = std::move(tools);
  }
  return body;
}

ChatResponse from_wire(const json& body) {
  const auto choices = body.find("choices");
  if (choices == body.end() || !choices->is_array() || choices->empty())
    throw Error(ErrorCode::transport_error, "chat response has no choices", {{"body", body}});
  const auto& choice = choices->front();
  const auto& message = choice.at("message");
  ChatResponse r;
  if (const auto content = message.find("content"); content != message.end() && content->is_string())
    r.content = content->get<std::string>();
  if (const auto calls = message.find("tool_calls"); calls != message.end() && calls->is_array()) {
    for (const auto& c : *calls) {
      const auto& fn = c.at("function");
      const auto& args = fn.at("arguments");
      r.tool_calls.push_back({c.value("id", ""), fn.at("name").get<std::string>(),
                              args.is_string() ? args.get<std::string>() : args.dump()});
    }
  }
  const auto reason = choice.find("finish_reason");
  r.finish_reason = reason != choice.end() && reason->is_string() ? parse_finish_reason(reason->get<std::string>())
                                                                   : FinishReason::Stop;
  if (!r.tool_calls.empty()) r.finish_reason = FinishReason::ToolCall;
  if (const auto usage = body.find("usage"); usage != body.end() && usage->is_object()) {
    r.usage.prompt_tokens = read_optional_int(*usage, "prompt_tokens");
    r.usage.output_tokens = read_optional_int(*usage, "completion_tokens");
  }
  return r;
}

std::string request_key(const ChatRequest& request) {
  if (!request.request_tag.empty()) return request.request_tag;
  return "msg-" + sha256_hex(to_json(request)["messages"].dump()).substr(0, 32);
}

std::string request_digest(const ChatRequest& request) { return sha256_hex(to_json(request).dump()); }

void MockProvider::script(const std::string& key, ChatResponse response) {
  std::lock_guard lock(mutex_);
  scripts_[key] = std::move(response);
}

ChatResponse MockProvider::complete(const ChatRequest& request) {
  request.validate();
  {
    std::lock_guard lock(mutex_);
    seen_.push_back(request);
    if (const auto it = scripts_.find(request.request_tag); !request.request_tag.empty() && it != scripts_.end())
      return it->second;
    ChatRequest untagged = request;
    untagged.request_tag.clear();
    if (const auto it = scripts_.find(request_key(untagged)); it != scripts_.end()) return it->second;
  }
  if (fallback_) return fallback_(request);
  throw Error(ErrorCode::scripting_error, "mock provider has no script for '" + request_key(request) + "'",
              {{"key", request_key(request)}});
}

std::size_t MockProvider::calls() const {
  std::lock_guard lock(mutex_);
  return seen_.size();
}

std::vector<ChatRequest> MockProvider::requests() const {
  std::lock_guard lock(mutex_);
  return seen_;
}

ReplayStore::ReplayStore(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto entry = json::parse(line);
      entries_[entry.at("key").get<std::string>()] = response_from_json(entry.at("response"));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::parse_error,
                  "replay store " + path_.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void ReplayStore::record(const ChatRequest& request, const ChatResponse& response) {
  const std::string key = request_key(request);
  const json entry = {{"key", key}, {"request_sha", request_digest(request)}, {"response", to_json(response)}};
  std::lock_guard lock(mutex_);
  files::append_line(path_, entry.dump());
  entries_[key] = response;
}

std::optional<ChatResponse> ReplayStore::lookup(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t ReplayStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

ChatResponse RecordingProvider::complete(const ChatRequest& request) {
  auto response = inner_.complete(request);
  store_.record(request, response);
  return response;
}

ChatResponse ReplayProvider::complete(const ChatRequest& request) {
  request.validate();
  const std::string key = request_key(request);
  if (auto found = store_.lookup(key)) return *found;
  throw Error(ErrorCode::replay_miss, "no recorded response for key " + key, {{"key", key}});
}

void ProviderConfig::validate() const {
  if (max_retries < 0) throw Error(ErrorCode::invalid_request, "provider.max_retries must be >= 0");
  if (backoff.initial_ms <= 0 || backoff.multiplier <= 0 || backoff.max_ms <= 0)
    throw Error(ErrorCode::invalid_request, "provider backoff values must be positive");
}

HttpChatProvider::HttpChatProvider(ProviderConfig config, http::Client& client, Clock& clock)
    : config_(std::move(config)), client_(client), clock_(clock) {
  config_.validate();
}

ChatResponse HttpChatProvider::complete(const ChatRequest& request) {
  request.validate();
  ChatRequest effective = request;
  if (effective.model_name.empty()) effective.model_name = config_.model_name;

  http::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  std::string base = config_.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  const std::string url = base + "/chat/completions";
  const std::string body = to_wire(effective).dump();

  const auto outcome = http::send_with_retry({config_.max_retries, config_.backoff}, clock_, [&] {
    auto response = client_.post(url, body, "application/json", headers);
    if (http::is_retriable(response))
      spdlog::warn("chat completion attempt failed ({}), tag {}",
                   response.status ? std::to_string(response.status) : response.error, request.request_tag);
    return response;
  });
  if (!outcome.response.ok()) {
    throw Error(ErrorCode::transport_error,
                "chat completion failed after " + std::to_string(outcome.attempts) + " attempt(s): " +
                    (outcome.response.status ? "HTTP " + std::to_string(outcome.response.status)
                                             : outcome.response.error),
                {{"status", outcome.response.status}, {"attempts", outcome.attempts}});
  }
  json parsed;
  try {
    parsed = json::parse(outcome.response.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::transport_error, std::string("chat completion body is not JSON: ") + e.what());
  }
  auto response = from_wire(parsed);
  response.attempts = outcome.attempts;
  return response;
}

}  // namespace slr::llm
