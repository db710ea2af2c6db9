#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "qfces/error.hpp"
#include "qfces/gateway.hpp"
#include "qfces/text.hpp"

namespace qfces::gateway {

using nlohmann::json;

namespace {

bool retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, kUrl)) {
    throw ValidationError("invalid endpoint URL: '" + config_.endpoint + "'");
  }
  scheme_host_port_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
  if (config_.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
}

std::string HttpBackend::request_body(const CompletionRequest& request) const {
  json messages = json::array();
  if (!request.system_message.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_message}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_message}});
  json body = {{"model", config_.model},
               {"messages", std::move(messages)},
               {"temperature", request.params.temperature},
               {"max_tokens", request.params.max_tokens}};
  if (request.params.top_p) body["top_p"] = *request.params.top_p;
  if (config_.extended_params) {
    if (request.params.top_k) body["top_k"] = *request.params.top_k;
    if (request.params.num_beams) body["num_beams"] = *request.params.num_beams;
  } else if (request.params.top_k || request.params.num_beams) {
    spdlog::warn("backend {} does not accept top_k/num_beams; dropping them", scheme_host_port_);
  }
  return body.dump();
}

CompletionResult HttpBackend::complete(const CompletionRequest& request, std::size_t /*sample_index*/) {
  std::string token;
  if (!config_.auth_env.empty()) {
    const char* v = std::getenv(config_.auth_env.c_str());
    if (v == nullptr || *v == '\0') {
      throw AuthError("auth token environment variable '" + config_.auth_env + "' is not set");
    }
    token = v;
  }
  const std::string body = request_body(request);

  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  if (!token.empty()) client.set_bearer_token_auth(token);

  std::string last_error;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      auto delay = config_.backoff_base * (1 << (attempt - 1));
      std::this_thread::sleep_for(std::min(delay, config_.backoff_cap));
    }
    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path_, body, "application/json");
    const double latency =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      throw AuthError("backend rejected credentials (HTTP " + std::to_string(res->status) + ")");
    }
    if (retryable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw HttpStatusError(res->status, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    json reply;
    try {
      reply = json::parse(res->body);
      CompletionResult out;
      out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      out.latency_ms = latency;
      out.input_token_estimate = estimate_tokens(request);
      out.output_token_estimate = text::count_words(out.text);
      return out;
    } catch (const json::exception& e) {
      throw BackendError(std::string("unexpected completion response: ") + e.what());
    }
  }
  throw BackendError("request failed after " + std::to_string(config_.max_attempts) +
                     " attempts: " + last_error);
}

}  // namespace qfces::gateway
