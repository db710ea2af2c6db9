#pragma once

// Uniform access to chat-completion backends with bounded-concurrency
// n-sampling and latency capture.

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace qfces::gateway {

struct SamplingParams {
  double temperature = 0.0;
  std::optional<int> top_k;
  std::optional<double> top_p;
  std::optional<int> num_beams;
  int max_tokens = 1024;
  int n_samples = 1;

  // Decoding preset used for summary generation.
  static SamplingParams generation();
  // Sampling preset used for judge evaluation (n = 100).
  static SamplingParams evaluation();
};

// Throws ValidationError when a field is out of range.
void validate(const SamplingParams& p);

struct CompletionRequest {
  std::string system_message;
  std::string user_message;
  SamplingParams params;
  std::string backend_id;
  // Routing hint ("mos_gen", "ces_gen", "eval:<dimension>"). Not sent over
  // the wire and not part of the fingerprint.
  std::string task;
};

// Stable identity of a request's content (system + user message).
std::string fingerprint(const CompletionRequest& r);

struct CompletionResult {
  std::string text;
  double latency_ms = 0.0;
  std::size_t input_token_estimate = 0;
  std::size_t output_token_estimate = 0;
};

// One entry of sample_n: either a completion or the error that replaced it.
struct SampleOutcome {
  std::size_t index = 0;
  std::optional<CompletionResult> result;
  std::string error;

  bool ok() const { return result.has_value(); }
};

// Token estimate everywhere in the project: whitespace word count.
std::size_t estimate_tokens(const CompletionRequest& r);

class Backend {
 public:
  virtual ~Backend() = default;
  // `sample_index` lets deterministic backends vary across n-samples.
  virtual CompletionResult complete(const CompletionRequest& request, std::size_t sample_index) = 0;
};

struct BackendLimits {
  std::size_t max_concurrency = 8;
  // sample_n throws when more than this fraction of samples fail.
  double max_failure_fraction = 0.5;
};

class Gateway {
 public:
  Gateway() = default;
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void register_backend(const std::string& id, std::shared_ptr<Backend> backend, BackendLimits limits = {});
  bool has_backend(const std::string& id) const;

  CompletionResult complete(const CompletionRequest& request);

  // Exactly n outcomes ordered by sample index. At most max_concurrency
  // requests are in flight for the backend at any time.
  std::vector<SampleOutcome> sample_n(const CompletionRequest& request, std::size_t n);

 private:
  class Limiter;
  struct Entry {
    std::shared_ptr<Backend> backend;
    BackendLimits limits;
    std::shared_ptr<Limiter> limiter;
  };
  const Entry& entry(const std::string& id) const;
  CompletionResult call(const Entry& e, const CompletionRequest& request, std::size_t index);

  mutable std::mutex mu_;
  std::map<std::string, Entry> backends_;
};

// --- deterministic mock ---------------------------------------------------

struct MockSpec {
  std::uint64_t seed = 0;
  double base_latency_ms = 0.0;
  double per_input_token_ms = 0.0;
  double per_output_token_ms = 0.0;
  // fingerprint -> canned responses. Sample i receives entry i % size.
  std::map<std::string, std::vector<std::string>> response_table;
};

// Pure function of (seed, request fingerprint, sample index). With
// temperature 0 the sample index is ignored. When the modelled latency
// base + a*in + b*out is positive the call sleeps that long and reports it;
// otherwise the measured wall clock is reported.
class MockBackend : public Backend {
 public:
  explicit MockBackend(MockSpec spec);
  CompletionResult complete(const CompletionRequest& request, std::size_t sample_index) override;

  double modelled_latency_ms(std::size_t input_tokens, std::size_t output_tokens) const;
  // The text that complete() would return, without sleeping.
  std::string respond(const CompletionRequest& request, std::size_t sample_index) const;

 private:
  MockSpec spec_;
};

// --- HTTP chat-completion backend -------------------------------------------

struct HttpBackendConfig {
  std::string endpoint;  // scheme://host[:port]/path
  std::string model;
  std::string auth_env;  // environment variable holding the bearer token; empty = no auth
  std::chrono::milliseconds timeout{120'000};
  // Whether the server accepts top_k / num_beams. Otherwise they are dropped with a warning.
  bool extended_params = false;
  int max_attempts = 4;  // first try plus three retries
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{2000};
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  CompletionResult complete(const CompletionRequest& request, std::size_t sample_index) override;

  // Request body as sent on the wire.
  std::string request_body(const CompletionRequest& request) const;

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

}  // namespace qfces::gateway
