#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "qfces/error.hpp"
#include "qfces/gateway.hpp"
#include "qfces/judge.hpp"

using namespace qfces;
using namespace qfces::gateway;

namespace {

CompletionRequest request(std::string user, std::string backend = "mock") {
  CompletionRequest r;
  r.system_message = "You are a judge.";
  r.user_message = std::move(user);
  r.backend_id = std::move(backend);
  return r;
}

// Counts the peak number of simultaneous calls.
class SlowBackend : public Backend {
 public:
  explicit SlowBackend(std::chrono::milliseconds d) : delay_(d) {}
  CompletionResult complete(const CompletionRequest&, std::size_t index) override {
    const int now = ++active_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(delay_);
    --active_;
    if (fail_every_ && index % fail_every_ == 0) throw BackendError("boom");
    return {"Score: 4", static_cast<double>(delay_.count()), 0, 2};
  }
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
  std::size_t fail_every_ = 0;

 private:
  std::chrono::milliseconds delay_;
};

}  // namespace

TEST_CASE("sampling presets and validation") {
  const auto g = SamplingParams::generation();
  CHECK(g.temperature == 0.2);
  CHECK(g.top_k == 25);
  CHECK(g.top_p == 0.95);
  CHECK(g.num_beams == 3);
  const auto e = SamplingParams::evaluation();
  CHECK(e.n_samples == 100);
  CHECK(e.temperature == 0.2);
  SamplingParams bad;
  bad.temperature = -1;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = {};
  bad.n_samples = 0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = {};
  bad.top_p = 1.5;
  CHECK_THROWS_AS(validate(bad), ValidationError);
}

TEST_CASE("fingerprint depends on content only") {
  auto a = request("hello");
  auto b = request("hello", "other");
  b.task = "x";
  CHECK(fingerprint(a) == fingerprint(b));
  CHECK(fingerprint(a) != fingerprint(request("hello!")));
  CHECK(estimate_tokens(a) == 5);
}

TEST_CASE("canned mock response and modelled latency") {
  MockSpec spec;
  spec.base_latency_ms = 2;
  spec.per_input_token_ms = 0.5;
  spec.per_output_token_ms = 1;
  const auto req = request("one two three");
  spec.response_table[fingerprint(req)] = {"canned answer"};
  Gateway gw;
  gw.register_backend("mock", std::make_shared<MockBackend>(spec));
  const auto r = gw.complete(req);
  CHECK(r.text == "canned answer");
  CHECK(r.input_token_estimate == 7);
  CHECK(r.output_token_estimate == 2);
  CHECK(r.latency_ms == doctest::Approx(2 + 0.5 * 7 + 1 * 2));
}

TEST_CASE("mock with zero coefficients reports wall clock") {
  Gateway gw;
  gw.register_backend("mock", std::make_shared<MockBackend>(MockSpec{}));
  const auto r = gw.complete(request("anything"));
  CHECK(r.latency_ms >= 0.0);
  CHECK(r.latency_ms < 1000.0);
}

TEST_CASE("temperature zero ignores the sample index") {
  Gateway gw;
  gw.register_backend("mock", std::make_shared<MockBackend>(MockSpec{42}));
  auto req = request("rate this summary");
  req.task = "eval:clarity";
  req.params.temperature = 0.0;
  const auto out = gw.sample_n(req, 5);
  REQUIRE(out.size() == 5);
  for (const auto& o : out) CHECK(o.result->text == out[0].result->text);
}

TEST_CASE("seeded stochastic mock is reproducible and order-stable") {
  auto run = [](std::uint64_t seed) {
    Gateway gw;
    gw.register_backend("mock", std::make_shared<MockBackend>(MockSpec{seed}));
    auto req = request("rate this summary");
    req.task = "eval:clarity";
    req.params.temperature = 0.2;
    std::vector<std::string> texts;
    for (const auto& o : gw.sample_n(req, 100)) {
      CHECK(o.ok());
      texts.push_back(o.result->text);
    }
    return texts;
  };
  const auto a = run(9);
  CHECK(a == run(9));
  CHECK(a != run(10));
  CHECK(std::count(a.begin(), a.end(), a.front()) < 100);
}

TEST_CASE("mock is a pure function of seed, fingerprint and index") {
  MockBackend m(MockSpec{5});
  auto req = request("x y z");
  req.task = "eval:fluency";
  req.params.temperature = 0.7;
  CHECK(m.respond(req, 3) == m.respond(req, 3));
  CHECK(m.respond(req, 3) == MockBackend(MockSpec{5}).respond(req, 3));
}

TEST_CASE("concurrency limit bounds in-flight requests and shortens wall time") {
  auto backend = std::make_shared<SlowBackend>(std::chrono::milliseconds(10));
  Gateway gw;
  gw.register_backend("slow", backend, BackendLimits{10, 0.5});
  const auto start = std::chrono::steady_clock::now();
  const auto out = gw.sample_n(request("x", "slow"), 100);
  const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  CHECK(out.size() == 100);
  CHECK(backend->peak_.load() <= 10);
  CHECK(elapsed < 100 * 10 * 0.5);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].index == i);
}

TEST_CASE("failed samples are recorded, too many failures throw") {
  auto backend = std::make_shared<SlowBackend>(std::chrono::milliseconds(0));
  backend->fail_every_ = 4;  // indices 0, 4, 8: 3 of 10
  Gateway gw;
  gw.register_backend("b", backend, BackendLimits{4, 0.5});
  const auto out = gw.sample_n(request("x", "b"), 10);
  REQUIRE(out.size() == 10);
  CHECK(std::count_if(out.begin(), out.end(), [](const SampleOutcome& o) { return !o.ok(); }) == 3);
  CHECK(out[4].error == "boom");

  backend->fail_every_ = 1;
  CHECK_THROWS_AS(gw.sample_n(request("x", "b"), 10), BackendError);
}

TEST_CASE("unknown backend and empty message") {
  Gateway gw;
  CHECK_THROWS_AS(gw.complete(request("x", "nope")), ValidationError);
  gw.register_backend("mock", std::make_shared<MockBackend>(MockSpec{}));
  CHECK_THROWS_AS(gw.complete(request("   ")), ValidationError);
  CHECK_THROWS_AS(gw.sample_n(request("x"), 0), ValidationError);
}

TEST_CASE("mock replays a fixed score multiset") {
  MockSpec spec;
  auto req = request("judge me");
  std::vector<std::string> canned;
  for (int i = 0; i < 7; ++i) canned.push_back("fine. Score: 4");
  for (int i = 0; i < 3; ++i) canned.push_back("great. Score: 5");
  spec.response_table[fingerprint(req)] = canned;
  Gateway gw;
  gw.register_backend("mock", std::make_shared<MockBackend>(spec));
  const auto out = gw.sample_n(req, 10);
  std::vector<judge::ScoreSample> samples;
  for (const auto& o : out) samples.push_back({o.result->text, judge::extract_score(o.result->text)});
  CHECK(judge::weighted_score(judge::ScoreDistribution::from_samples(samples)) == doctest::Approx(4.3));
}

// --- HTTP backend against a local server ------------------------------------

namespace {

struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  LocalServer() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread.join();
  }
  std::string url(const std::string& path = "/v1/chat/completions") const {
    return "http://127.0.0.1:" + std::to_string(port) + path;
  }
};

HttpBackendConfig fast_config(const std::string& url) {
  HttpBackendConfig c;
  c.endpoint = url;
  c.model = "test-model";
  c.timeout = std::chrono::milliseconds(2000);
  c.backoff_base = std::chrono::milliseconds(1);
  c.backoff_cap = std::chrono::milliseconds(4);
  return c;
}

const char* kReply = R"({"choices":[{"message":{"role":"assistant","content":"Score: 3"}}]})";

}  // namespace

TEST_CASE("http backend sends the chat body and parses the reply") {
  LocalServer srv;
  std::string seen_body, seen_auth;
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    res.set_content(kReply, "application/json");
  });
  setenv("QFCES_TEST_TOKEN", "secret", 1);
  auto cfg = fast_config(srv.url());
  cfg.auth_env = "QFCES_TEST_TOKEN";
  HttpBackend backend(cfg);
  auto req = request("hello there");
  req.params = SamplingParams::generation();
  const auto r = backend.complete(req, 0);
  CHECK(r.text == "Score: 3");
  CHECK(seen_auth == "Bearer secret");
  const auto body = nlohmann::json::parse(seen_body);
  CHECK(body["model"] == "test-model");
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["content"] == "hello there");
  CHECK(body["top_p"] == 0.95);
  CHECK_FALSE(body.contains("top_k"));
  CHECK_FALSE(body.contains("num_beams"));

  cfg.extended_params = true;
  const auto extended = nlohmann::json::parse(HttpBackend(cfg).request_body(req));
  CHECK(extended["top_k"] == 25);
  CHECK(extended["num_beams"] == 3);
}

TEST_CASE("http 401 is an auth error with no retry") {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  HttpBackend backend(fast_config(srv.url()));
  CHECK_THROWS_AS(backend.complete(request("x"), 0), AuthError);
  CHECK(calls == 1);
}

TEST_CASE("missing token fails before any request") {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.set_content(kReply, "application/json");
  });
  auto cfg = fast_config(srv.url());
  cfg.auth_env = "QFCES_TEST_TOKEN_UNSET";
  unsetenv("QFCES_TEST_TOKEN_UNSET");
  CHECK_THROWS_AS(HttpBackend(cfg).complete(request("x"), 0), AuthError);
  CHECK(calls == 0);
}

TEST_CASE("http 5xx and 429 are retried, then succeed") {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    const int n = ++calls;
    if (n == 1) {
      res.status = 503;
    } else if (n == 2) {
      res.status = 429;
    } else {
      res.set_content(kReply, "application/json");
    }
  });
  HttpBackend backend(fast_config(srv.url()));
  CHECK(backend.complete(request("x"), 0).text == "Score: 3");
  CHECK(calls == 3);
}

TEST_CASE("persistent 5xx exhausts the attempts") {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
  });
  HttpBackend backend(fast_config(srv.url()));
  CHECK_THROWS_AS(backend.complete(request("x"), 0), BackendError);
  CHECK(calls == 4);
}

TEST_CASE("other statuses and bad bodies are not retried") {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.server.Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 400;
  });
  srv.server.Post("/garbage", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{}", "application/json");
  });
  try {
    HttpBackend(fast_config(srv.url("/bad"))).complete(request("x"), 0);
    FAIL("expected an error");
  } catch (const HttpStatusError& e) {
    CHECK(e.status() == 400);
  }
  CHECK(calls == 1);
  CHECK_THROWS_AS(HttpBackend(fast_config(srv.url("/garbage"))).complete(request("x"), 0), BackendError);
}

TEST_CASE("endpoint validation") {
  CHECK_THROWS_AS(HttpBackend(fast_config("ftp://example.com")), ValidationError);
  CHECK_NOTHROW(HttpBackend(fast_config("https://api.example.com")));
}
