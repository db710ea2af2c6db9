#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "qfces/catalog.hpp"
#include "qfces/gateway.hpp"

namespace qfces::prompt {

enum class SummaryKind { Comparative, Opinion };

// Which parts of the evaluation context a judge prompt receives.
struct ContextRouting {
  bool sources = false;
  bool query = false;
};

struct Dimension {
  std::string id;
  std::string name;
  std::string abbreviation;
  SummaryKind kind;
  std::string criteria;
  ContextRouting routing;
  int scale_min = 1;
  int scale_max = 5;
};

// Twelve dimensions: five for comparative summaries, then seven for
// per-product opinion summaries, each group in canonical report order.
const std::vector<Dimension>& dimensions();
const Dimension& dimension(std::string_view id);  // throws ValidationError if unknown
bool is_dimension(std::string_view id);
std::vector<std::string> dimension_ids(SummaryKind kind);

inline constexpr std::string_view kScoringInstruction =
    "Explain your reasoning first, then end with a final line exactly of the form \"Score: <integer 1-5>\".";

class PromptTemplate {
 public:
  // File layout: system message, a line containing only "---", then the body.
  // A file without the separator is all body.
  static PromptTemplate parse(std::string id, std::string_view source);

  const std::string& id() const { return id_; }
  const std::string& system_message() const { return system_; }
  const std::string& body() const { return body_; }
  const std::set<std::string>& placeholders() const { return placeholders_; }

  // Substitutes {{name}} markers in the system message and body in a single
  // pass. Every placeholder must be bound; extra bindings are ignored.
  std::pair<std::string, std::string> render(const std::map<std::string, std::string>& bindings) const;

 private:
  std::string id_;
  std::string system_;
  std::string body_;
  std::set<std::string> placeholders_;
};

// Template ids: mos_gen, ces_gen_mos, ces_gen_dia, eval_<dimension id>.
class TemplateSet {
 public:
  static const TemplateSet& defaults();
  // Defaults with any <id>.txt found in `dir` taking precedence.
  static TemplateSet with_overrides(const std::filesystem::path& dir);

  const PromptTemplate& get(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

enum class CesMode { Mos, Dia };
std::string_view to_string(CesMode m);
CesMode parse_mode(std::string_view s);

struct CesInput {
  catalog::ProductRecord product;
  std::optional<std::string> opinion_summary;  // required in Mos mode
};

struct EvalContext {
  std::string query;
  std::vector<catalog::ProductRecord> products;
};

// Labelled plain-text renderings of a product, shared by all prompts.
std::string render_product_full(const catalog::ProductRecord& p);
std::string render_product_brief(const catalog::ProductRecord& p, const std::string& opinion_summary);

gateway::CompletionRequest render_mos_generation(const catalog::ProductRecord& product,
                                                 const TemplateSet& templates = TemplateSet::defaults());

gateway::CompletionRequest render_ces_generation(const std::string& query, std::span<const CesInput> inputs,
                                                 CesMode mode,
                                                 const TemplateSet& templates = TemplateSet::defaults());

gateway::CompletionRequest render_evaluation(const Dimension& dimension, const std::string& subject,
                                             const EvalContext& context,
                                             const TemplateSet& templates = TemplateSet::defaults());

}  // namespace qfces::prompt
