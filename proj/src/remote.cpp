#include "dwlab/remote.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <thread>
#include <utility>

namespace dwlab::backends {

namespace {

using nlohmann::ordered_json;

bool retriable_status(int status) {
  return status == 429 || (status >= 500 && status <= 599);
}

}  // namespace

void split_base_url(const std::string& base_url, std::string& origin,
                    std::string& path_prefix) {
  std::size_t scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::runtime_error("base URL must start with http:// or https://: " +
                             base_url);
  }
  std::string scheme = base_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw std::runtime_error("unsupported URL scheme: " + scheme);
  }
  std::size_t path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    origin = base_url;
    path_prefix = "";
  } else {
    origin = base_url.substr(0, path_start);
    path_prefix = base_url.substr(path_start);
  }
  while (!path_prefix.empty() && path_prefix.back() == '/') {
    path_prefix.pop_back();
  }
  if (origin.size() <= scheme_end + 3) {
    throw std::runtime_error("base URL lacks a host: " + base_url);
  }
}

std::string chat_messages_json(const debate::GenerationRequest& request) {
  ordered_json messages = ordered_json::array();
  messages.push_back({{"role", "user"}, {"content", request.prompt}});
  for (const debate::Message& m : request.context) {
    if (m.self) {
      messages.push_back({{"role", "assistant"}, {"content", m.content}});
    } else {
      messages.push_back(
          {{"role", "user"},
           {"content", "Response from agent " + m.agent + ":\n" + m.content}});
    }
  }
  return messages.dump();
}

RemoteBackend::RemoteBackend(std::string identity, RemoteConfig cfg)
    : identity_(std::move(identity)), cfg_(std::move(cfg)) {
  if (cfg_.model.empty()) {
    throw std::runtime_error("remote backend needs a model name");
  }
  if (cfg_.max_attempts < 1) {
    throw std::runtime_error("remote backend needs max_attempts >= 1");
  }
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw std::runtime_error("environment variable " + cfg_.api_key_env +
                             " is not set (required for remote backends)");
  }
  api_key_ = key;
  split_base_url(cfg_.base_url, origin_, path_prefix_);
}

std::string RemoteBackend::generate(const debate::GenerationRequest& request) {
  ordered_json body;
  body["model"] = cfg_.model;
  body["messages"] = ordered_json::parse(chat_messages_json(request));
  body["temperature"] = (request.role == "summarizer")
                            ? cfg_.temperature_summarizer
                            : cfg_.temperature_debater;
  const std::string payload = body.dump();
  const std::string path = path_prefix_ + "/chat/completions";

  httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

  std::string last_error;
  int backoff_ms = cfg_.retry_backoff_ms;
  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    httplib::Client client(origin_);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    client.set_write_timeout(cfg_.timeout_seconds, 0);

    httplib::Result res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;  // retriable
    }
    if (res->status == 200) {
      try {
        ordered_json reply = ordered_json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content")
            .get<std::string>();
      } catch (const std::exception& e) {
        throw debate::BackendError(
            "remote backend '" + identity_ +
            "': malformed completion payload: " + std::string(e.what()));
      }
    }
    last_error = "HTTP " + std::to_string(res->status);
    if (!retriable_status(res->status)) {
      throw debate::BackendError("remote backend '" + identity_ +
                                 "': " + last_error + ": " + res->body);
    }
  }
  throw debate::BackendError("remote backend '" + identity_ + "': gave up after " +
                             std::to_string(cfg_.max_attempts) +
                             " attempts; last error: " + last_error);
}

}  // namespace dwlab::backends
