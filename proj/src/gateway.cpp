#include "qfces/gateway.hpp"

#include <atomic>
#include <condition_variable>
#include <thread>

#include "qfces/error.hpp"
#include "qfces/text.hpp"

namespace qfces::gateway {

SamplingParams SamplingParams::generation() {
  SamplingParams p;
  p.temperature = 0.2;
  p.top_k = 25;
  p.top_p = 0.95;
  p.num_beams = 3;
  return p;
}

SamplingParams SamplingParams::evaluation() {
  SamplingParams p;
  p.temperature = 0.2;
  p.n_samples = 100;
  return p;
}

void validate(const SamplingParams& p) {
  if (!(p.temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (p.top_k && *p.top_k < 1) throw ValidationError("top_k must be positive");
  if (p.top_p && !(*p.top_p > 0.0 && *p.top_p <= 1.0)) throw ValidationError("top_p must be in (0,1]");
  if (p.num_beams && *p.num_beams < 1) throw ValidationError("num_beams must be positive");
  if (p.max_tokens < 1) throw ValidationError("max_tokens must be positive");
  if (p.n_samples < 1) throw ValidationError("n_samples must be >= 1");
}

std::string fingerprint(const CompletionRequest& r) {
  std::uint64_t h = text::fnv1a64(r.system_message);
  h = text::fnv1a64("\x1f", h);
  h = text::fnv1a64(r.user_message, h);
  return text::to_hex(h);
}

std::size_t estimate_tokens(const CompletionRequest& r) {
  return text::count_words(r.system_message) + text::count_words(r.user_message);
}

class Gateway::Limiter {
 public:
  explicit Limiter(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

 private:
  std::size_t limit_;
  std::size_t in_flight_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

void Gateway::register_backend(const std::string& id, std::shared_ptr<Backend> backend,
                               BackendLimits limits) {
  if (!backend) throw ValidationError("backend '" + id + "' is null");
  std::lock_guard lock(mu_);
  backends_[id] = Entry{std::move(backend), limits, std::make_shared<Limiter>(limits.max_concurrency)};
}

bool Gateway::has_backend(const std::string& id) const {
  std::lock_guard lock(mu_);
  return backends_.count(id) > 0;
}

const Gateway::Entry& Gateway::entry(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = backends_.find(id);
  if (it == backends_.end()) throw ValidationError("backend not registered: '" + id + "'");
  return it->second;
}

CompletionResult Gateway::call(const Entry& e, const CompletionRequest& request, std::size_t index) {
  e.limiter->acquire();
  struct Release {
    Limiter* l;
    ~Release() { l->release(); }
  } release{e.limiter.get()};
  return e.backend->complete(request, index);
}

CompletionResult Gateway::complete(const CompletionRequest& request) {
  if (text::trim(request.user_message).empty()) throw ValidationError("user_message is empty");
  validate(request.params);
  return call(entry(request.backend_id), request, 0);
}

std::vector<SampleOutcome> Gateway::sample_n(const CompletionRequest& request, std::size_t n) {
  if (n < 1) throw ValidationError("sample_n requires n >= 1");
  if (text::trim(request.user_message).empty()) throw ValidationError("user_message is empty");
  validate(request.params);
  const Entry& e = entry(request.backend_id);

  std::vector<SampleOutcome> out(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      out[i].index = i;
      try {
        out[i].result = call(e, request, i);
      } catch (const std::exception& ex) {
        out[i].error = ex.what();
      }
    }
  };
  const std::size_t workers = std::min(n, std::max<std::size_t>(1, e.limits.max_concurrency));
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();

  std::size_t failed = 0;
  std::string first_error;
  for (const auto& o : out) {
    if (!o.ok()) {
      if (failed++ == 0) first_error = o.error;
    }
  }
  if (static_cast<double>(failed) / static_cast<double>(n) > e.limits.max_failure_fraction) {
    throw BackendError(std::to_string(failed) + " of " + std::to_string(n) + " samples failed on backend '" +
                       request.backend_id + "': " + first_error);
  }
  return out;
}

}  // namespace qfces::gateway
