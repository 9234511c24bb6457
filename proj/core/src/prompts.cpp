#include "reflectsql/prompts.hpp"

#include "reflectsql/errors.hpp"
#include "reflectsql/fingerprint.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace reflectsql {

using Json = nlohmann::ordered_json;

namespace {

const char* kStage1Template = R"(You are an expert database assistant responsible for schema-level interpretation.
Given a natural-language question and a database schema, select the minimal set of
tables and fully qualified attributes required to express a correct SQL query.

Requirements:
- All attributes must be fully qualified using the format table.attribute.
- If a table is selected, always include its primary key.
- If the question implies a relationship between tables, include the corresponding
  foreign key attributes.
- Prefer the smallest set of tables and attributes that allows the query to be expressed.
- Do not invent tables, attributes, or joins; use only elements present in the schema
  and its foreign keys.
- Do not include tables that are not reachable via declared foreign keys.
- If the question expresses exclusion (e.g. "except", "without", "not having"),
  include the primary key of the main table and the relevant foreign key of the
  excluding table.

Output contract:
Return strictly valid JSON with exactly two keys:
"tables" (list of selected table names) and
"attributes" (list of fully qualified attributes).
Do not include explanations, comments, or additional fields.
---
Question:
{question}

Special evidence to consider:
{extra_evidence}

Schema:
{schema}
)";

const char* kStage2Template = R"(You are a Literal and Constraint Signal Extractor in a text-to-SQL pipeline.
Extract natural-language values, comparison cues, and superlative/comparative
signals without deciding SQL syntax.

Requirements:
- You are not generating WHERE clauses, SQL syntax, operators, or functions.
- Do not choose exact operators, aggregations, or query structure; only capture signals.
- If no literals or comparative values exist, return empty lists (still valid JSON).

For each literal or comparative phrase, produce an entry with:
- "column_candidate": plausible matching schema column, or null
- "raw_expression": literal text or comparative phrase
- "comparison_type": "literal" | "equality" | "range" | "superlative" | "comparative" | "unknown"
- "direction": "min" | "max" | "greater" | "less" | null
- "cardinality_hint": "single" | "multiple" | "unknown"
- "confidence": float in [0.0, 1.0]

Output contract:
Return strictly valid JSON with exactly these keys: "literals",
"filter_candidates", "notes". Always include all fields for each literal object.
"filter_candidates" may be empty. "notes" may be null or a short comment.
Never emit SQL, operators, or functions.

Use the Stage-1 selection to guide plausible column candidates; do not reference
columns or tables outside it unless explicitly provided in additional context.
---
Question:
{question}

Relevant tables/attributes:
{stage1}

Value instances:
{extra_db_info}

Return STRICT JSON only.
)";

const char* kPlanTemplate = R"(You are a Semantics-First Reasoner in a text-to-SQL system. Produce an explicit
semantic plan that fully captures the meaning of the question before any SQL is written.

Planning checklist:
1. Intent: identify the core entities requested, the attributes to project,
   constraints, quantifiers, and order preferences. Resolve paraphrases strictly
   to schema elements. Decide whether the result is rows, a scalar, or grouped results.
2. Logical structure: detect AND/OR composition and set operations
   ("shared by" -> INTERSECT; "either" -> UNION or OR when licensed).
3. Feasibility: normalize comparatives (e.g. "at least" -> >=), normalize temporal
   expressions, and avoid redundant or contradictory constraints.
4. Joins: include a join only if reachability requires it and the question licenses
   it; use declared foreign-key relationships only and prefer the shortest valid path.
5. Aggregation: map "how many" / "number of" -> COUNT, "average" -> AVG,
   "total" -> SUM; determine grouping scope ("per X" -> GROUP BY X).
6. Superlatives: cardinality single -> ORDER + LIMIT semantics; otherwise MIN/MAX
   or subquery semantics.
7. Derived attributes: derive only if all base attributes exist; never fabricate.
8. Projection: project exactly the requested attributes; add ordering only when required.
9. Duplicates: set distinct = true only when unique entity sets are requested and
   joins may duplicate rows.

Output contract:
Return strictly valid JSON with exactly these keys:
{{"intent": "...", "entities": [...], "attributes": [...], "filters": [...],
"aggregations": null or an object, "joins": [...], "order": [...],
"limit": null or integer, "grouping": [...], "derived": [...],
"feasibility_checked": true, "cardinality": "single" | "multiple" | "unknown",
"distinct": true or false}}
Base all reasoning strictly on the schema and the question. Never invent tables,
columns, or relationships. Do not output SQL. Output only the structured JSON plan.
---
Question:
{question}

Relevant tables/attributes:
{stage1}

Stage 2 (Literals and Constraint Signals):
{stage2}
)";

const char* kSqlTemplate = R"(You are an expert SQL query writer. You are given a structured semantic plan (JSON)
and the original natural-language question for reference only. Output only the final
SQL query that realizes the plan.

Requirements:
- If joins exist, use explicit JOIN ... ON ... syntax.
- Use ORDER BY exactly as specified in the plan.
- Do not add LIMIT unless explicitly present in the plan.
- Do not add filters, joins, projections, grouping, or derived computations that
  are not specified in the plan.
- Do not output Markdown, comments, or explanations.
- Output only valid SQL text ending with a semicolon.
---
Semantic plan:
{semantic_plan}

Relevant tables/attributes:
Use only the entities and attributes listed in the semantic plan above.

Value instances:
{extra_db_info}

Additional evidence:
{extra_evidence}

Question:
{question}
)";

const char* kCriticTemplate = R"(You are an expert system inspector for a 3-stage text-to-SQL pipeline. Attribute
errors to the most likely stage, given the question, schema, predicted SQL,
intermediate stage outputs, and the analyzer report.

Pipeline assumption (recall-to-refine): Stage 1 is recall-first and may include
extra tables/attributes; Stage 2 is precision and selects the minimal subset.
Therefore do not treat extra Stage 1 attributes as errors.

Attribution rules:
- Stage 1 issues (flag only if at least one holds): a required table or attribute
  for the correct SQL is missing from Stage 1; Stage 1 hallucinated tables or
  attributes not present in the schema; Stage 1 introduced incorrect foreign-key
  or relationship assumptions.
- Stage 2 issues: wrong predicate column / operator / value mapping (as a signal
  error); misinterpreting numeric vs. string filtering; incorrect
  aggregation-related constraints (AVG, MIN, COUNT, etc.).
- Stage 3 issues: wrong final SQL structure or SELECT targets; missing joins when
  the schema requires them; incorrect ORDER BY, GROUP BY, or HAVING; valid syntax
  but wrong semantics; referencing objects not surfaced in Stage 1 (leak).

Edge cases: if row_count = 0 and table_populations = 0, the database may be empty
and the SQL may still be correct. Penalize only semantic or schema-grounding
mistakes, not data sparsity.

{mode_instructions}

If everything is correct, return:
{{"likely_stage": null, "issues": [], "notes": ["SQL is correct and semantically aligned with the question and schema."]}}

Output contract:
Return strictly valid JSON with exactly these keys:
"likely_stage" ("stage1" | "stage2" | "stage3" | null),
"issues" (list of detected problems), "notes" (supporting reasoning).
---
Natural language question: {question}
Database schema: {schema}
Predicted SQL query: {sql}
Stage1 output (tables/attributes): {stage1}
Stage2 output (values/predicates): {stage2}
Analyzer report: {analysis}
)";

const char* kRefinerTemplate = R"(You are a system prompt refiner for a text-to-SQL pipeline. Improve an agent's
system prompt based on a structured critique while preserving compatibility with
downstream execution.

Critical rules (strict):
- Never remove or alter placeholder fields in curly braces.
- Always preserve the following section headers verbatim where present:
  "Question:", "Relevant tables/attributes:", "Value instances:".
- If you need to show JSON, do not literally output single-brace blocks; describe
  the structure in prose or escape braces using double braces.
- The revised prompt must remain directly compatible with placeholder substitution.

Output contract:
Return strictly valid JSON with exactly these keys:
"new_prompt" (the improved prompt text) and "explanation" (why you made these changes).
---
Original prompt (for {stage}):
{original_prompt}

Critique from the Critic:
{critique_json}
)";

const char* kJudgeTemplate = R"(You are a semantic judge for a text-to-SQL system. Decide whether the predicted
SQL preserves the intent of the question, given the semantic plan and the schema
context. Judge intent preservation independent of surface form.

Output contract:
Return strictly valid JSON with exactly these keys:
"intent_preserved" (true or false),
"missing_constraints" (list of strings, empty when intent is preserved),
"rationale" (short string).
---
Question:
{question}

Predicted SQL:
{sql}

Semantic plan:
{plan}

Schema context:
{schema}
)";

bool identifier_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

const StagePrompt& StagePromptSet::at(const std::string& stage) const {
  auto it = prompts.find(stage);
  if (it == prompts.end()) {
    throw Error(ErrorCode::ConfigError, "unknown stage: " + stage);
  }
  return it->second;
}

StagePromptSet default_prompt_set(const std::string& db_id) {
  StagePromptSet theta;
  theta.db_id = db_id;
  theta.prompts["stage1"] = {kStage1Template, 0};
  theta.prompts["stage2"] = {kStage2Template, 0};
  theta.prompts["plan"] = {kPlanTemplate, 0};
  theta.prompts["sql"] = {kSqlTemplate, 0};
  return theta;
}

StagePromptSet load_prompt_dir(const std::string& dir, const std::string& db_id) {
  StagePromptSet theta = default_prompt_set(db_id);
  for (const auto& stage : kStageIds) {
    std::ifstream in(dir + "/" + stage + ".txt");
    if (!in) continue;
    std::ostringstream buf;
    buf << in.rdbuf();
    theta.prompts[stage] = {buf.str(), 0};
  }
  return theta;
}

void save_theta(const StagePromptSet& theta, const std::string& path) {
  Json j;
  j["db_id"] = theta.db_id;
  j["prompts"] = Json::object();
  for (const auto& [stage, prompt] : theta.prompts) {
    j["prompts"][stage] = {{"text", prompt.text}, {"version", prompt.version}};
  }
  j["history"] = Json::array();
  for (const auto& rec : theta.history) {
    j["history"].push_back(
        {{"stage", rec.stage}, {"old_version", rec.old_version}, {"digest", rec.digest}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write theta store: " + path);
  out << j.dump(2) << "\n";
}

StagePromptSet load_theta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read theta store: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("corrupt theta store: ") + e.what());
  }
  StagePromptSet theta;
  theta.db_id = j.at("db_id").get<std::string>();
  for (const auto& [stage, prompt] : j.at("prompts").items()) {
    theta.prompts[stage] = {prompt.at("text").get<std::string>(),
                            prompt.at("version").get<int>()};
  }
  for (const auto& rec : j.at("history")) {
    theta.history.push_back({rec.at("stage").get<std::string>(),
                             rec.at("old_version").get<int>(),
                             rec.at("digest").get<std::string>()});
  }
  return theta;
}

const std::string& critic_prompt_template() {
  static const std::string text = kCriticTemplate;
  return text;
}

const std::string& refiner_prompt_template() {
  static const std::string text = kRefinerTemplate;
  return text;
}

const std::string& judge_prompt_template() {
  static const std::string text = kJudgeTemplate;
  return text;
}

std::vector<std::string> extract_placeholders(const std::string& text) {
  std::vector<std::string> names;
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    if (i + 1 < text.size() && text[i + 1] == '{') {
      ++i;
      continue;
    }
    size_t j = i + 1;
    while (j < text.size() && identifier_char(text[j])) ++j;
    if (j > i + 1 && j < text.size() && text[j] == '}') {
      std::string name = text.substr(i + 1, j - i - 1);
      if (std::find(names.begin(), names.end(), name) == names.end()) {
        names.push_back(std::move(name));
      }
      i = j;
    }
  }
  return names;
}

std::string render_template(const std::string& text,
                            const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        out += '{';
        ++i;
        continue;
      }
      size_t j = i + 1;
      while (j < text.size() && identifier_char(text[j])) ++j;
      if (j > i + 1 && j < text.size() && text[j] == '}') {
        const std::string name = text.substr(i + 1, j - i - 1);
        auto it = vars.find(name);
        if (it == vars.end()) {
          throw Error(ErrorCode::ContractViolation,
                      "unsubstituted placeholder {" + name + "} in prompt");
        }
        out += it->second;
        i = j;
        continue;
      }
      throw Error(ErrorCode::ContractViolation,
                  "stray unescaped '{' in prompt at offset " + std::to_string(i));
    }
    if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      out += '}';
      ++i;
      continue;
    }
    out += c;
  }
  return out;
}

std::pair<std::string, std::string> split_system_user(const std::string& rendered) {
  std::istringstream in(rendered);
  std::string line;
  std::string system_text;
  std::string user_text;
  bool in_user = false;
  while (std::getline(in, line)) {
    if (!in_user && line == "---") {
      in_user = true;
      continue;
    }
    (in_user ? user_text : system_text) += line + "\n";
  }
  if (!in_user) return {rendered, "Follow the output contract and respond now."};
  return {system_text, user_text};
}

const std::vector<std::string>& protected_headers() {
  static const std::vector<std::string> headers = {
      "Question:", "Relevant tables/attributes:", "Value instances:"};
  return headers;
}

}  // namespace reflectsql
