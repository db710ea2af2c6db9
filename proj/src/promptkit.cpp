#include "qfces/promptkit.hpp"

#include <cctype>
#include <regex>
#include <sstream>

#include "qfces/error.hpp"
#include "qfces/jsonl.hpp"
#include "qfces/text.hpp"

namespace qfces::prompt {

namespace detail {
const std::map<std::string, std::string>& embedded_templates();
}

namespace {

std::vector<Dimension> build_registry() {
  using K = SummaryKind;
  return {
      {"clarity", "clarity", "CL", K::Comparative,
       "Judge how clearly presented the information in the comparative summary is. The wording should be "
       "plain, concise and unambiguous, with little technical jargon. The table and the verdict should be "
       "well organised so that the comparison of the three products is easy to follow, the text should be "
       "free of grammatical errors, and the table itself should make the differences between the products "
       "obvious.",
       {false, false}},
      {"faithfulness", "faithfulness", "FA", K::Comparative,
       "Judge whether every statement in the comparative summary is accurate, verifiable and directly "
       "supported by the input data. The query and each product attribute must be reproduced correctly from "
       "the input. Penalise any detail that cannot be verified from the input data and any broad "
       "generalisation the input does not support.",
       {true, true}},
      {"informativeness", "informativeness", "IF", K::Comparative,
       "Judge how completely the comparative summary covers all relevant aspects of the compared products: "
       "product title, base price, final price, average rating, the attributes selected for the query, pros "
       "and cons. Every major aspect discussed in the input should appear, and unavailable values should be "
       "marked NA. Penalise missing significant aspects and reward thorough coverage.",
       {true, false}},
      {"format_adherence", "format adherence", "FoA", K::Comparative,
       "Judge whether the comparative summary follows the prescribed format. It must contain (1) a table "
       "with the three products in columns and attributes in rows, including Base Price, Final Price, "
       "Average Rating, Pros and Cons as well as attributes chosen for the query, each given a real name "
       "rather than a placeholder, and (2) a concise final verdict comparing the three products. Assess the "
       "presence, completeness and formatting of both parts and the organisation of the whole summary.",
       {false, false}},
      {"query_relevance", "query relevance", "QR", K::Comparative,
       "Judge how well the comparative summary addresses the user's query. The table should contain only "
       "the information and attributes that matter for the query, without irrelevant details, and the final "
       "verdict should answer the query explicitly with a clear suggestion that supports an informed "
       "buying decision.",
       {false, true}},
      {"fluency", "fluency", "FL", K::Opinion,
       "Judge whether the opinion summary reads naturally: grammatical sentences, correct word choice and "
       "no awkward or broken phrasing.",
       {false, false}},
      {"coherence", "coherence", "CO", K::Opinion,
       "Judge whether the opinion summary is well structured, with sentences that connect logically and "
       "build into a single consistent picture of the product.",
       {false, false}},
      {"aspect_coverage", "aspect coverage", "AC", K::Opinion,
       "Judge how many of the important product aspects found in the listing and the reviews are covered by "
       "the opinion summary.",
       {true, false}},
      {"m_faithfulness", "faithfulness", "FF", K::Opinion,
       "Judge whether every claim in the opinion summary is supported by the product listing or the "
       "reviews, with nothing invented or contradicted.",
       {true, false}},
      {"relevance", "relevance", "RL", K::Opinion,
       "Judge whether the opinion summary focuses on the information a shopper needs about this product and "
       "leaves out unimportant details.",
       {true, false}},
      {"sentiment_consistency", "sentiment consistency", "SC", K::Opinion,
       "Judge whether the sentiment expressed in the opinion summary matches the overall sentiment of the "
       "reviews and the average rating.",
       {true, false}},
      {"specificity", "specificity", "SP", K::Opinion,
       "Judge whether the opinion summary gives concrete, product-specific details instead of generic "
       "statements that could describe any product.",
       {true, false}},
  };
}

const std::regex kPlaceholder(R"(\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\})");

std::string substitute(const std::string& source, const std::map<std::string, std::string>& bindings,
                       const std::string& template_id) {
  std::string out;
  auto begin = std::sregex_iterator(source.begin(), source.end(), kPlaceholder);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto b = bindings.find(m[1].str());
    if (b == bindings.end()) {
      throw ValidationError("template '" + template_id + "': unbound placeholder {{" + m[1].str() + "}}");
    }
    out.append(source, last, static_cast<std::size_t>(m.position(0)) - last);
    out += b->second;
    last = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  out.append(source, last, std::string::npos);
  return out;
}

std::string price_text(const catalog::Price& p) { return p.amount + " " + p.currency; }

std::string rating_text(double r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

std::string bulleted(const std::vector<std::string>& items, const char* empty) {
  if (items.empty()) return std::string("  ") + empty + "\n";
  std::string out;
  for (const auto& i : items) out += "  - " + i + "\n";
  return out;
}

std::string finish_with_instruction(std::string body) {
  while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.pop_back();
  if (!(body.size() >= kScoringInstruction.size() &&
        body.compare(body.size() - kScoringInstruction.size(), std::string::npos, kScoringInstruction) == 0)) {
    body += "\n";
    body += kScoringInstruction;
  }
  return body;
}

}  // namespace

const std::vector<Dimension>& dimensions() {
  static const std::vector<Dimension> kRegistry = build_registry();
  return kRegistry;
}

const Dimension& dimension(std::string_view id) {
  for (const auto& d : dimensions()) {
    if (d.id == id) return d;
  }
  throw ValidationError("unknown dimension: '" + std::string(id) + "'");
}

bool is_dimension(std::string_view id) {
  for (const auto& d : dimensions()) {
    if (d.id == id) return true;
  }
  return false;
}

std::vector<std::string> dimension_ids(SummaryKind kind) {
  std::vector<std::string> out;
  for (const auto& d : dimensions()) {
    if (d.kind == kind) out.push_back(d.id);
  }
  return out;
}

PromptTemplate PromptTemplate::parse(std::string id, std::string_view source) {
  PromptTemplate t;
  t.id_ = std::move(id);
  const auto lines = text::split_lines(source);
  std::size_t sep = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]) == "---") {
      sep = i;
      break;
    }
  }
  if (sep == lines.size()) {
    t.body_ = std::string(source);
  } else {
    t.system_ = std::string(text::trim(text::join({lines.begin(), lines.begin() + sep}, "\n")));
    t.body_ = text::join({lines.begin() + sep + 1, lines.end()}, "\n");
  }
  while (!t.body_.empty() && (t.body_.back() == '\n' || t.body_.back() == ' ')) t.body_.pop_back();
  for (const std::string* part : {&t.system_, &t.body_}) {
    for (auto it = std::sregex_iterator(part->begin(), part->end(), kPlaceholder); it != std::sregex_iterator();
         ++it) {
      t.placeholders_.insert((*it)[1].str());
    }
  }
  if (text::trim(t.body_).empty()) throw ValidationError("template '" + t.id_ + "' has an empty body");
  return t;
}

std::pair<std::string, std::string> PromptTemplate::render(
    const std::map<std::string, std::string>& bindings) const {
  return {substitute(system_, bindings, id_), substitute(body_, bindings, id_)};
}

const TemplateSet& TemplateSet::defaults() {
  static const TemplateSet kDefaults = [] {
    TemplateSet s;
    for (const auto& [id, source] : detail::embedded_templates()) {
      s.templates_.emplace(id, PromptTemplate::parse(id, source));
    }
    return s;
  }();
  return kDefaults;
}

TemplateSet TemplateSet::with_overrides(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("template directory not found: " + dir.string());
  TemplateSet s = defaults();
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    const std::string id = entry.path().stem().string();
    s.templates_.insert_or_assign(id, PromptTemplate::parse(id, jsonl::read_text(entry.path())));
  }
  return s;
}

const PromptTemplate& TemplateSet::get(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw ValidationError("no prompt template '" + id + "'");
  return it->second;
}

std::vector<std::string> TemplateSet::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : templates_) out.push_back(id);
  return out;
}

std::string_view to_string(CesMode m) { return m == CesMode::Mos ? "mos" : "dia"; }

CesMode parse_mode(std::string_view s) {
  const std::string l = text::to_lower(s);
  if (l == "mos") return CesMode::Mos;
  if (l == "dia") return CesMode::Dia;
  throw ValidationError("unknown generation mode '" + std::string(s) + "' (expected mos or dia)");
}

std::string render_product_full(const catalog::ProductRecord& p) {
  std::vector<std::string> specs;
  for (const auto& s : p.specifications) specs.push_back(s.name + ": " + s.value);
  std::vector<std::string> reviews;
  for (const auto& r : p.reviews) {
    reviews.push_back(r.rating ? "[" + std::to_string(*r.rating) + "/5] " + r.text : r.text);
  }
  std::string out;
  out += "Title: " + p.title + "\n";
  out += "Base Price: " + price_text(p.base_price) + "\n";
  out += "Final Price: " + price_text(p.final_price) + "\n";
  out += "Average Rating: " + rating_text(p.average_rating) + "\n";
  out += "Description: " + p.description + "\n";
  out += "Key Features:\n" + bulleted(p.key_features, "(none)");
  out += "Specifications:\n" + bulleted(specs, "(none)");
  out += "Reviews:\n" + bulleted(reviews, "(no reviews)");
  return out;
}

std::string render_product_brief(const catalog::ProductRecord& p, const std::string& opinion_summary) {
  std::string out;
  out += "Title: " + p.title + "\n";
  out += "Base Price: " + price_text(p.base_price) + "\n";
  out += "Final Price: " + price_text(p.final_price) + "\n";
  out += "Average Rating: " + rating_text(p.average_rating) + "\n";
  out += "Opinion Summary: " + opinion_summary + "\n";
  return out;
}

gateway::CompletionRequest render_mos_generation(const catalog::ProductRecord& product,
                                                 const TemplateSet& templates) {
  if (auto errs = catalog::validate(product); !errs.empty()) throw ValidationError(errs.front());
  std::vector<std::string> specs;
  for (const auto& s : product.specifications) specs.push_back(s.name + ": " + s.value);
  std::vector<std::string> reviews;
  for (const auto& r : product.reviews) {
    reviews.push_back(r.rating ? "[" + std::to_string(*r.rating) + "/5] " + r.text : r.text);
  }
  std::string block;
  block += "Title: " + product.title + "\n\n";
  block += "Description: " + product.description + "\n\n";
  block += "Key Features:\n" + bulleted(product.key_features, "(none)") + "\n";
  block += "Specifications:\n" + bulleted(specs, "(none)") + "\n";
  block += "Reviews:\n" + bulleted(reviews, "(no reviews)") + "\n";
  block += "Average Rating: " + rating_text(product.average_rating);

  auto [system, user] = templates.get("mos_gen").render({{"product", block}});
  gateway::CompletionRequest req;
  req.system_message = std::move(system);
  req.user_message = std::move(user);
  req.task = "mos_gen";
  return req;
}

gateway::CompletionRequest render_ces_generation(const std::string& query, std::span<const CesInput> inputs,
                                                 CesMode mode, const TemplateSet& templates) {
  if (inputs.size() != catalog::kProductsPerQuery) {
    throw ValidationError("comparative generation needs exactly 3 products (got " +
                          std::to_string(inputs.size()) + ")");
  }
  if (text::trim(query).empty()) throw ValidationError("query is empty");
  std::string products;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& in = inputs[i];
    products += "Product " + std::to_string(i + 1) + "\n";
    if (mode == CesMode::Mos) {
      if (!in.opinion_summary || text::trim(*in.opinion_summary).empty()) {
        throw ValidationError("missing opinion summary for product " + in.product.product_id);
      }
      products += render_product_brief(in.product, *in.opinion_summary);
    } else {
      products += render_product_full(in.product);
    }
    if (i + 1 < inputs.size()) products += "\n";
  }
  const std::string id = mode == CesMode::Mos ? "ces_gen_mos" : "ces_gen_dia";
  auto [system, user] = templates.get(id).render({{"query", query}, {"products", products}});
  gateway::CompletionRequest req;
  req.system_message = std::move(system);
  req.user_message = std::move(user);
  req.task = "ces_gen";
  return req;
}

gateway::CompletionRequest render_evaluation(const Dimension& dimension, const std::string& subject,
                                             const EvalContext& context, const TemplateSet& templates) {
  if (text::trim(subject).empty()) throw ValidationError("cannot evaluate an empty summary");
  std::map<std::string, std::string> bindings = {
      {"dimension_name", dimension.name},
      {"criteria", dimension.criteria},
      {"summary", subject},
      {"scoring_instruction", std::string(kScoringInstruction)},
  };
  if (dimension.routing.query) bindings["query"] = context.query;
  if (dimension.routing.sources) {
    std::string sources;
    for (std::size_t i = 0; i < context.products.size(); ++i) {
      if (context.products.size() > 1) sources += "Product " + std::to_string(i + 1) + "\n";
      sources += render_product_full(context.products[i]);
      if (i + 1 < context.products.size()) sources += "\n";
    }
    bindings["sources"] = sources;
  }
  auto [system, user] = templates.get("eval_" + dimension.id).render(bindings);
  gateway::CompletionRequest req;
  req.system_message = std::move(system);
  req.user_message = finish_with_instruction(std::move(user));
  req.task = "eval:" + dimension.id;
  return req;
}

}  // namespace qfces::prompt
