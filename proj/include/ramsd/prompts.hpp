// Prompt template assets and structured-output parsing.
//
// Templates live as prompts/<name>.txt with a MANIFEST of FNV-1a checksums so
// silent edits fail loudly at load. Placeholders are written {identifier};
// literal braces (JSON examples in the planner/integrator templates) are left
// alone because they are never followed by an identifier character.
#pragma once

#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ramsd/core.hpp"
#include "ramsd/domain.hpp"

namespace ramsd {

enum class TemplateName {
  Rationale,
  SimilarityAnalyzer,
  MetaPlanner,
  SemanticAgent,
  ExpectationAgent,
  KnowledgeAgent,
  AlignmentAgent,
  IncongruityAgent,
  RhetoricAgent,
  Integrator,
};

inline constexpr std::array<TemplateName, 10> kAllTemplates = {
    TemplateName::Rationale,       TemplateName::SimilarityAnalyzer,
    TemplateName::MetaPlanner,     TemplateName::SemanticAgent,
    TemplateName::ExpectationAgent, TemplateName::KnowledgeAgent,
    TemplateName::AlignmentAgent,  TemplateName::IncongruityAgent,
    TemplateName::RhetoricAgent,   TemplateName::Integrator,
};

inline const char* template_file(TemplateName name) {
  switch (name) {
    case TemplateName::Rationale: return "rationale.txt";
    case TemplateName::SimilarityAnalyzer: return "similarity_analyzer.txt";
    case TemplateName::MetaPlanner: return "meta_planner.txt";
    case TemplateName::SemanticAgent: return "semantic_agent.txt";
    case TemplateName::ExpectationAgent: return "expectation_agent.txt";
    case TemplateName::KnowledgeAgent: return "knowledge_agent.txt";
    case TemplateName::AlignmentAgent: return "alignment_agent.txt";
    case TemplateName::IncongruityAgent: return "incongruity_agent.txt";
    case TemplateName::RhetoricAgent: return "rhetoric_agent.txt";
    case TemplateName::Integrator: return "integrator.txt";
  }
  return "?";
}

inline TemplateName template_for_agent(AgentKind agent) {
  switch (agent) {
    case AgentKind::Semantic: return TemplateName::SemanticAgent;
    case AgentKind::Knowledge: return TemplateName::KnowledgeAgent;
    case AgentKind::Expectation: return TemplateName::ExpectationAgent;
    case AgentKind::Alignment: return TemplateName::AlignmentAgent;
    case AgentKind::Incongruity: return TemplateName::IncongruityAgent;
    case AgentKind::Rhetoric: return TemplateName::RhetoricAgent;
  }
  return TemplateName::SemanticAgent;
}

// Placeholders a caller may leave unbound; they render as empty text.
inline const std::set<std::string>& optional_placeholders(TemplateName name) {
  static const std::set<std::string> kContext = {"context"};
  static const std::set<std::string> kContextIfAvailable = {"context_if_available"};
  static const std::set<std::string> kNone;
  switch (name) {
    case TemplateName::SemanticAgent:
    case TemplateName::RhetoricAgent: return kContext;
    case TemplateName::SimilarityAnalyzer: return kContextIfAvailable;
    default: return kNone;
  }
}

struct PromptTemplate {
  TemplateName name = TemplateName::Rationale;
  std::string body;
  std::set<std::string> required_placeholders;  // found in body, minus optional
};

namespace detail {

inline bool is_ident_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}
inline bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

// Returns the placeholder name if body[pos] opens one, else empty.
inline std::string placeholder_at(const std::string& body, size_t pos, size_t* end) {
  if (body[pos] != '{' || pos + 1 >= body.size() || !is_ident_start(body[pos + 1])) return "";
  size_t i = pos + 1;
  while (i < body.size() && is_ident_char(body[i])) ++i;
  if (i >= body.size() || body[i] != '}') return "";
  *end = i + 1;
  return body.substr(pos + 1, i - pos - 1);
}

inline std::set<std::string> scan_placeholders(const std::string& body) {
  std::set<std::string> out;
  size_t pos = 0;
  while (pos < body.size()) {
    size_t end = 0;
    auto name = placeholder_at(body, pos, &end);
    if (!name.empty()) {
      out.insert(name);
      pos = end;
    } else {
      ++pos;
    }
  }
  return out;
}

}  // namespace detail

// Substitutes {name} placeholders in one pass; binding values are inserted
// verbatim and never re-scanned. Unbound optional placeholders become empty
// text; unbound required ones are errors. Unused bindings only warn.
inline Result<std::string> render(const PromptTemplate& tmpl,
                                  const std::map<std::string, std::string>& bindings) {
  const auto& optional = optional_placeholders(tmpl.name);
  std::string out;
  out.reserve(tmpl.body.size() + 256);
  std::set<std::string> used;
  size_t pos = 0;
  while (pos < tmpl.body.size()) {
    size_t end = 0;
    auto name = detail::placeholder_at(tmpl.body, pos, &end);
    if (name.empty()) {
      out.push_back(tmpl.body[pos++]);
      continue;
    }
    auto it = bindings.find(name);
    if (it != bindings.end()) {
      out.append(it->second);
      used.insert(name);
    } else if (!optional.count(name)) {
      return make_error(Errc::missing_binding,
                        std::string("missing binding for placeholder '") + name + "' in " +
                            template_file(tmpl.name));
    }
    pos = end;
  }
  for (const auto& [name, value] : bindings)
    if (!used.count(name) && !optional.count(name))
      log_warn("unknown binding '" + name + "' ignored by " + template_file(tmpl.name));
  return out;
}

// Numbered exemplar list in the appendix layout:
//   1. Text: "..." | Rationale: ...
inline std::string render_examples_block(const std::vector<AugmentedExemplar>& items) {
  if (items.empty()) return "(none)";
  std::ostringstream os;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) os << "\n";
    os << (i + 1) << ". Text: \"" << items[i].exemplar.text
       << "\" | Rationale: " << items[i].rationale;
  }
  return os.str();
}

class PromptLibrary {
 public:
  // Reads all ten templates from dir and verifies each against MANIFEST
  // (lines of "<filename> <16-hex fnv1a64>").
  static Result<PromptLibrary> load(const std::string& dir, bool verify_checksums = true) {
    PromptLibrary lib;
    lib.dir_ = dir;

    std::map<std::string, std::string> manifest;
    if (verify_checksums) {
      std::ifstream mf(dir + "/MANIFEST");
      if (!mf) return make_error(Errc::io_error, "cannot open " + dir + "/MANIFEST");
      std::string line;
      while (std::getline(mf, line)) {
        line = trim(line);
        if (line.empty()) continue;
        auto space = line.find(' ');
        if (space == std::string::npos)
          return make_error(Errc::config_error, "malformed MANIFEST line: " + line);
        manifest[line.substr(0, space)] = trim(line.substr(space + 1));
      }
    }

    for (TemplateName name : kAllTemplates) {
      const std::string file = template_file(name);
      std::ifstream in(dir + "/" + file, std::ios::binary);
      if (!in) return make_error(Errc::io_error, "cannot open template " + dir + "/" + file);
      std::ostringstream body;
      body << in.rdbuf();

      PromptTemplate tmpl;
      tmpl.name = name;
      tmpl.body = body.str();

      if (verify_checksums) {
        auto it = manifest.find(file);
        if (it == manifest.end())
          return make_error(Errc::config_error, file + " missing from MANIFEST");
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(tmpl.body)));
        if (it->second != hex)
          return make_error(Errc::config_error,
                            file + " checksum mismatch: MANIFEST has " + it->second +
                                ", file hashes to " + hex);
      }

      auto found = detail::scan_placeholders(tmpl.body);
      const auto& optional = optional_placeholders(name);
      for (const auto& p : found)
        if (!optional.count(p)) tmpl.required_placeholders.insert(p);
      lib.templates_[static_cast<size_t>(name)] = std::move(tmpl);
    }
    return lib;
  }

  const PromptTemplate& get(TemplateName name) const {
    return templates_[static_cast<size_t>(name)];
  }

  const std::string& dir() const { return dir_; }

 private:
  std::array<PromptTemplate, 10> templates_;
  std::string dir_;
};

// ---------------------------------------------------------------------------
// Structured-output parsing

struct PlannerParse {
  PlanKind selected_plan = PlanKind::SimpleIrony;
  double confidence = 0.0;
  std::string contextual_analysis;
  std::string reasoning;
  std::vector<std::string> entities;
};

struct JudgmentParse {
  int label = 0;
  double confidence = 0.0;
  std::string reasoning;
  bool degraded = false;  // label line present but JSON missing
};

namespace detail {

// First balanced {...} region that parses as a JSON object, scanning forward.
inline std::optional<nlohmann::json> first_json_object(const std::string& text) {
  for (size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}') {
        if (--depth == 0) {
          auto doc = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!doc.is_discarded() && doc.is_object()) return doc;
          break;  // balanced but not valid JSON; try the next '{'
        }
      }
    }
  }
  return std::nullopt;
}

inline double clamp_confidence(double value, const char* who) {
  if (value < 0.0 || value > 1.0) {
    log_warn(std::string(who) + " confidence " + std::to_string(value) + " clamped to [0,1]");
    return value < 0.0 ? 0.0 : 1.0;
  }
  return value;
}

// "[a, b, c]" within the "Knowledge entities:" analysis line, "none" for none.
inline std::vector<std::string> entities_from_analysis(const std::string& text) {
  std::vector<std::string> out;
  auto pos = text.find("Knowledge entities:");
  if (pos == std::string::npos) return out;
  auto eol = text.find('\n', pos);
  std::string line = text.substr(pos, (eol == std::string::npos ? text.size() : eol) - pos);
  auto open = line.find('[');
  auto close = line.find(']', open == std::string::npos ? 0 : open);
  if (open == std::string::npos || close == std::string::npos) return out;
  for (auto& item : split(line.substr(open + 1, close - open - 1), ',')) {
    auto t = trim(item);
    if (!t.empty() && to_lower(t) != "none") out.push_back(t);
  }
  return out;
}

}  // namespace detail

// Extracts the planner's JSON decision (first balanced JSON object in the
// response); entities prefer the "Knowledge entities:" analysis line, then a
// JSON "entities" field.
inline Result<PlannerParse> parse_planner(const std::string& response_text) {
  auto doc = detail::first_json_object(response_text);
  if (!doc)
    return make_error(Errc::parse_error, "no JSON object found in planner response");

  PlannerParse out;
  if (!doc->contains("selected_plan") || !(*doc)["selected_plan"].is_string())
    return make_error(Errc::parse_error, "planner JSON missing \"selected_plan\"");
  auto plan = plan_from_string((*doc)["selected_plan"].get<std::string>());
  if (!plan)
    return make_error(Errc::unknown_plan, "unknown plan string: \"" +
                                              (*doc)["selected_plan"].get<std::string>() + "\"");
  out.selected_plan = *plan;

  if (doc->contains("confidence") && (*doc)["confidence"].is_number())
    out.confidence = detail::clamp_confidence((*doc)["confidence"].get<double>(), "planner");
  out.contextual_analysis = doc->value("contextual_analysis", "");
  out.reasoning = doc->value("reasoning", "");

  out.entities = detail::entities_from_analysis(response_text);
  if (out.entities.empty() && doc->contains("entities") && (*doc)["entities"].is_array())
    for (const auto& e : (*doc)["entities"])
      if (e.is_string()) out.entities.push_back(e.get<std::string>());
  return out;
}

// Reads the "<<LABEL>> 0|1" line and cross-checks it against the JSON "label".
// A contradiction is an error; a missing JSON object degrades to the label
// line with confidence 0.5.
inline Result<JudgmentParse> parse_judgment(const std::string& response_text) {
  auto marker = response_text.find("<<LABEL>>");
  if (marker == std::string::npos)
    return make_error(Errc::missing_label_line, "no <<LABEL>> line in judgment response");
  size_t pos = marker + 9;
  while (pos < response_text.size() &&
         (response_text[pos] == ' ' || response_text[pos] == '\t'))
    ++pos;
  if (pos >= response_text.size() || (response_text[pos] != '0' && response_text[pos] != '1'))
    return make_error(Errc::missing_label_line, "<<LABEL>> line has no 0/1 value");
  JudgmentParse out;
  out.label = response_text[pos] - '0';

  auto doc = detail::first_json_object(response_text.substr(pos));
  if (!doc) {
    out.confidence = 0.5;
    out.degraded = true;
    return out;
  }
  if (doc->contains("label")) {
    int json_label = -1;
    if ((*doc)["label"].is_number_integer()) json_label = (*doc)["label"].get<int>();
    else if ((*doc)["label"].is_string()) {
      auto s = trim((*doc)["label"].get<std::string>());
      if (s == "0" || s == "1") json_label = s[0] - '0';
    }
    if (json_label != out.label)
      return make_error(Errc::label_mismatch,
                        "label line says " + std::to_string(out.label) + " but JSON says " +
                            (*doc)["label"].dump());
  }
  out.confidence = 0.5;
  if (doc->contains("conf") && (*doc)["conf"].is_number())
    out.confidence = detail::clamp_confidence((*doc)["conf"].get<double>(), "judgment");
  out.reasoning = doc->value("reasoning", "");
  return out;
}

}  // namespace ramsd
