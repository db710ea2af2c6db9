#include <algorithm>
#include <array>
#include <chrono>
#include <thread>

#include "qfces/error.hpp"
#include "qfces/gateway.hpp"
#include "qfces/text.hpp"

namespace qfces::gateway {

namespace {

// SplitMix64: fixed arithmetic, identical output on every platform.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

 private:
  std::uint64_t state_;
};

template <std::size_t N>
const std::string& pick(SplitMix& rng, const std::array<std::string, N>& pool) {
  return pool[rng.below(N)];
}

// Values of "Label: value" lines, in order of appearance.
std::vector<std::string> labelled(const std::string& prompt, std::string_view label) {
  std::vector<std::string> out;
  for (const auto& line : text::split_lines(prompt)) {
    std::string_view t = text::trim(line);
    if (t.substr(0, label.size()) == label) out.emplace_back(text::trim(t.substr(label.size())));
  }
  return out;
}

std::string nth_or(const std::vector<std::string>& v, std::size_t i, std::string fallback) {
  return i < v.size() && !v[i].empty() ? v[i] : std::move(fallback);
}

const std::array<std::string, 6> kOpinionPhrases = {
    "praise the build quality and find setup straightforward",
    "highlight good value for the price but mention average battery life",
    "report reliable day-to-day performance with few complaints",
    "note that the materials feel solid although the unit is somewhat heavy",
    "appreciate the clear instructions while a few mention slow shipping",
    "like the design yet point out that accessories are sold separately"};

const std::array<std::string, 5> kAttributes = {"Build Quality", "Battery Life", "Warranty", "Weight",
                                                "Ease of Use"};
const std::array<std::string, 4> kAttributeValues = {"Good", "Excellent", "Average", "NA"};
const std::array<std::string, 4> kPros = {"Strong value", "Well built", "Easy to use", "Good reviews"};
const std::array<std::string, 4> kCons = {"Heavy", "Short warranty", "Few accessories", "Slow charging"};

const std::array<std::string, 4> kJudgeRemarks = {
    "The summary is mostly well organised and the comparison is easy to follow.",
    "Some details could be sharper, but the key points are covered.",
    "The content is consistent with the provided information overall.",
    "A few minor issues are present, none of them severe."};

std::string mos_response(const CompletionRequest& r, SplitMix& rng) {
  const std::string title = nth_or(labelled(r.user_message, "Title:"), 0, "This product");
  const std::string rating = nth_or(labelled(r.user_message, "Average Rating:"), 0, "NA");
  std::string out = title + " holds an average rating of " + rating + ". Reviewers " +
                    pick(rng, kOpinionPhrases) + ". Others " + pick(rng, kOpinionPhrases) + ".";
  return out;
}

std::string ces_response(const CompletionRequest& r, SplitMix& rng) {
  const auto titles = labelled(r.user_message, "Title:");
  const auto base = labelled(r.user_message, "Base Price:");
  const auto final_price = labelled(r.user_message, "Final Price:");
  const auto rating = labelled(r.user_message, "Average Rating:");
  const std::string query = nth_or(labelled(r.user_message, "User query:"), 0, "this search");

  auto row = [](const std::string& name, const std::array<std::string, 3>& cells) {
    return "| " + name + " | " + cells[0] + " | " + cells[1] + " | " + cells[2] + " |\n";
  };
  std::array<std::string, 3> t, b, f, a;
  for (std::size_t i = 0; i < 3; ++i) {
    t[i] = nth_or(titles, i, "Product " + std::to_string(i + 1));
    b[i] = nth_or(base, i, "NA");
    f[i] = nth_or(final_price, i, "NA");
    a[i] = nth_or(rating, i, "NA");
  }
  std::string out = "| Attribute | " + t[0] + " | " + t[1] + " | " + t[2] + " |\n";
  out += "| --- | --- | --- | --- |\n";
  out += row("Base Price", b);
  out += row("Final Price", f);
  out += row("Average Rating", a);
  const std::size_t first = rng.below(kAttributes.size());
  const std::size_t second = (first + 1 + rng.below(kAttributes.size() - 1)) % kAttributes.size();
  for (std::size_t attr : {first, second}) {
    out += row(kAttributes[attr],
               {pick(rng, kAttributeValues), pick(rng, kAttributeValues), pick(rng, kAttributeValues)});
  }
  out += row("Pros", {pick(rng, kPros), pick(rng, kPros), pick(rng, kPros)});
  out += row("Cons", {pick(rng, kCons), pick(rng, kCons), pick(rng, kCons)});
  const std::size_t best = rng.below(3);
  out += "\nFinal Verdict: For \"" + query + "\", " + t[best] +
         " is the strongest overall choice because it balances price, rating and " +
         kAttributes[first] + ", while the other two remain reasonable alternatives for buyers with "
         "different priorities.\n";
  return out;
}

std::string judge_response(const CompletionRequest& r, std::uint64_t content_seed, SplitMix& rng) {
  // Each distinct prompt gets a quality level; samples scatter around it.
  SplitMix quality_rng(content_seed);
  const int quality = 3 + static_cast<int>(quality_rng.below(3));
  const std::size_t roll = rng.below(100);
  if (roll < 2) return "The summary could not be assessed with confidence.";
  int score = quality;
  if (roll < 22) score = quality - 1;
  else if (roll < 42) score = quality + 1;
  score = std::clamp(score, 1, 5);
  std::string dim = r.task.size() > 5 ? r.task.substr(5) : "quality";
  return "Assessment of " + dim + ": " + pick(rng, kJudgeRemarks) + "\nScore: " + std::to_string(score);
}

}  // namespace

MockBackend::MockBackend(MockSpec spec) : spec_(std::move(spec)) {
  if (spec_.base_latency_ms < 0 || spec_.per_input_token_ms < 0 || spec_.per_output_token_ms < 0) {
    throw ValidationError("mock latency coefficients must be >= 0");
  }
}

double MockBackend::modelled_latency_ms(std::size_t input_tokens, std::size_t output_tokens) const {
  return spec_.base_latency_ms + spec_.per_input_token_ms * static_cast<double>(input_tokens) +
         spec_.per_output_token_ms * static_cast<double>(output_tokens);
}

std::string MockBackend::respond(const CompletionRequest& request, std::size_t sample_index) const {
  const std::string fp = fingerprint(request);
  if (auto it = spec_.response_table.find(fp); it != spec_.response_table.end() && !it->second.empty()) {
    return it->second[sample_index % it->second.size()];
  }
  const std::size_t effective_index = request.params.temperature > 0.0 ? sample_index : 0;
  const std::uint64_t content_seed = text::fnv1a64(fp, spec_.seed * 0x9e3779b97f4a7c15ULL + 1);
  SplitMix rng(content_seed ^ (0xd1b54a32d192ed03ULL * (effective_index + 1)));

  if (request.task.rfind("eval:", 0) == 0) return judge_response(request, content_seed, rng);
  if (request.task == "mos_gen") return mos_response(request, rng);
  if (request.task == "ces_gen") return ces_response(request, rng);
  return "Mock response " + fp.substr(0, 8) + "-" + std::to_string(rng.below(1000));
}

CompletionResult MockBackend::complete(const CompletionRequest& request, std::size_t sample_index) {
  const auto start = std::chrono::steady_clock::now();
  CompletionResult res;
  res.text = respond(request, sample_index);
  res.input_token_estimate = estimate_tokens(request);
  res.output_token_estimate = text::count_words(res.text);
  const double modelled = modelled_latency_ms(res.input_token_estimate, res.output_token_estimate);
  if (modelled > 0.0) {
    std::this_thread::sleep_until(start + std::chrono::duration<double, std::milli>(modelled));
    res.latency_ms = modelled;
  } else {
    res.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return res;
}

}  // namespace qfces::gateway
