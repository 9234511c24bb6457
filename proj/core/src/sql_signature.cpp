#include "reflectsql/sql_signature.hpp"

#include "reflectsql/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

namespace reflectsql {

namespace {

enum class TokKind { Ident, Number, String, Symbol, End };

struct Token {
  TokKind kind = TokKind::End;
  std::string text;  // idents lowercased, strings unquoted
};

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::vector<Token> tokenize(const std::string& sql) {
  std::vector<Token> tokens;
  size_t i = 0;
  while (i < sql.size()) {
    const char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '\'') {
      std::string value;
      ++i;
      while (i < sql.size()) {
        if (sql[i] == '\'') {
          if (i + 1 < sql.size() && sql[i + 1] == '\'') {
            value += '\'';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        value += sql[i++];
      }
      tokens.push_back({TokKind::String, value});
      continue;
    }
    if (c == '"' || c == '`' || c == '[') {
      const char close = c == '[' ? ']' : c;
      std::string value;
      ++i;
      while (i < sql.size() && sql[i] != close) value += sql[i++];
      if (i < sql.size()) ++i;
      tokens.push_back({TokKind::Ident, lower(value)});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < sql.size() &&
         std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      std::string value;
      while (i < sql.size() &&
             (std::isdigit(static_cast<unsigned char>(sql[i])) || sql[i] == '.' ||
              sql[i] == 'e' || sql[i] == 'E' ||
              ((sql[i] == '+' || sql[i] == '-') && !value.empty() &&
               (value.back() == 'e' || value.back() == 'E')))) {
        value += sql[i++];
      }
      tokens.push_back({TokKind::Number, value});
      continue;
    }
    if (ident_start(c)) {
      std::string value;
      while (i < sql.size() && ident_char(sql[i])) value += sql[i++];
      tokens.push_back({TokKind::Ident, lower(value)});
      continue;
    }
    // Two-character operators first.
    if (i + 1 < sql.size()) {
      const std::string two = sql.substr(i, 2);
      if (two == ">=" || two == "<=" || two == "<>" || two == "!=" || two == "||") {
        tokens.push_back({TokKind::Symbol, two});
        i += 2;
        continue;
      }
    }
    tokens.push_back({TokKind::Symbol, std::string(1, c)});
    ++i;
  }
  tokens.push_back({TokKind::End, ""});
  return tokens;
}

const std::set<std::string> kKeywords = {
    "select", "from",  "where",    "join",   "inner", "left",   "right", "full",
    "outer",  "cross", "on",       "group",  "by",    "having", "order", "limit",
    "as",     "and",   "or",       "not",    "in",    "like",   "between",
    "distinct", "case", "when",    "then",   "else",  "end",    "union", "intersect",
    "except", "is",    "null",     "asc",    "desc",  "cast",   "offset", "exists",
    "nullif", "coalesce", "count", "sum",    "avg",   "min",    "max",   "real",
    "integer", "text",  "abs",     "round",  "length", "substr", "using", "natural"};

const std::set<std::string> kAggFuncs = {"count", "sum", "avg", "min", "max"};

bool is_keyword(const Token& t) {
  return t.kind == TokKind::Ident && kKeywords.count(t.text) > 0;
}

std::string canonical_number(const std::string& text) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", std::strtod(text.c_str(), nullptr));
  return buf;
}

std::string bare_column(const std::string& qualified) {
  const auto dot = qualified.rfind('.');
  return dot == std::string::npos ? qualified : qualified.substr(dot + 1);
}

OpClass symbol_op(const std::string& sym) {
  if (sym == "=") return OpClass::Equality;
  if (sym == "!=" || sym == "<>") return OpClass::NotEqual;
  if (sym == ">") return OpClass::Greater;
  if (sym == ">=") return OpClass::GreaterEqual;
  if (sym == "<") return OpClass::Less;
  if (sym == "<=") return OpClass::LessEqual;
  return OpClass::Unknown;
}

OpClass flip(OpClass op) {
  switch (op) {
    case OpClass::Greater: return OpClass::Less;
    case OpClass::GreaterEqual: return OpClass::LessEqual;
    case OpClass::Less: return OpClass::Greater;
    case OpClass::LessEqual: return OpClass::GreaterEqual;
    default: return op;
  }
}

/// Reads a possibly qualified column reference starting at position i;
/// returns the full dotted name and advances i past it, or empty.
std::string read_column_ref(const std::vector<Token>& tokens, size_t& i) {
  if (tokens[i].kind != TokKind::Ident || is_keyword(tokens[i])) return "";
  std::string name = tokens[i].text;
  size_t j = i + 1;
  while (j + 1 < tokens.size() && tokens[j].kind == TokKind::Symbol &&
         tokens[j].text == "." && tokens[j + 1].kind == TokKind::Ident) {
    name += "." + tokens[j + 1].text;
    j += 2;
  }
  i = j;
  return name;
}

}  // namespace

std::string to_string(OpClass op) {
  switch (op) {
    case OpClass::Equality: return "equality";
    case OpClass::NotEqual: return "not-equal";
    case OpClass::Greater: return "greater";
    case OpClass::GreaterEqual: return "greater-equal";
    case OpClass::Less: return "less";
    case OpClass::LessEqual: return "less-equal";
    case OpClass::Range: return "range";
    case OpClass::Like: return "like";
    case OpClass::Unknown: return "unknown";
  }
  return "unknown";
}

SqlSignature extract_signature(const std::string& sql) {
  const auto tokens = tokenize(sql);
  SqlSignature sig;
  std::map<std::string, std::string> aliases;  // alias -> table

  // Pass 1: tables, aliases, aggregates, grouping, ordering, limit, distinct.
  int depth = 0;
  bool seen_top_select = false;
  for (size_t i = 0; i + 1 < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (t.kind == TokKind::Symbol) {
      if (t.text == "(") ++depth;
      if (t.text == ")") --depth;
      continue;
    }
    if (t.kind != TokKind::Ident) continue;

    if (t.text == "select") {
      if (depth == 0 && !seen_top_select) {
        seen_top_select = true;
        if (tokens[i + 1].kind == TokKind::Ident && tokens[i + 1].text == "distinct") {
          sig.distinct = true;
        }
      }
      continue;
    }
    if (t.text == "from" || t.text == "join") {
      size_t j = i + 1;
      while (true) {
        if (tokens[j].kind == TokKind::Symbol && tokens[j].text == "(") break;  // subquery
        std::string table = read_column_ref(tokens, j);
        if (table.empty()) break;
        sig.tables.insert(table);
        // Optional alias: AS name, or a bare identifier.
        if (tokens[j].kind == TokKind::Ident && tokens[j].text == "as") ++j;
        if (tokens[j].kind == TokKind::Ident && !is_keyword(tokens[j])) {
          aliases[tokens[j].text] = table;
          ++j;
        }
        // Comma-separated FROM list.
        if (t.text == "from" && tokens[j].kind == TokKind::Symbol &&
            tokens[j].text == ",") {
          ++j;
          continue;
        }
        break;
      }
      continue;
    }
    if (kAggFuncs.count(t.text) && tokens[i + 1].kind == TokKind::Symbol &&
        tokens[i + 1].text == "(") {
      size_t j = i + 2;
      int inner = 1;
      std::string target;
      while (tokens[j].kind != TokKind::End && inner > 0) {
        if (tokens[j].kind == TokKind::Symbol) {
          if (tokens[j].text == "(") ++inner;
          if (tokens[j].text == ")") {
            --inner;
            if (inner == 0) break;
          }
        }
        if (!target.empty()) target += " ";
        target += tokens[j].kind == TokKind::String ? "'" + tokens[j].text + "'"
                                                    : tokens[j].text;
        ++j;
      }
      sig.aggregates.push_back({upper(t.text), target});
      continue;
    }
    if (t.text == "group" && tokens[i + 1].text == "by") {
      size_t j = i + 2;
      while (true) {
        std::string column = read_column_ref(tokens, j);
        if (column.empty()) break;
        sig.grouping.push_back(bare_column(column));
        if (tokens[j].kind == TokKind::Symbol && tokens[j].text == ",") {
          ++j;
          continue;
        }
        break;
      }
      continue;
    }
    if (t.text == "order" && tokens[i + 1].text == "by") {
      size_t j = i + 2;
      while (true) {
        std::string term;
        if (tokens[j].kind == TokKind::Ident && kAggFuncs.count(tokens[j].text) &&
            tokens[j + 1].kind == TokKind::Symbol && tokens[j + 1].text == "(") {
          // Aggregate expression in ORDER BY; render it flat.
          term = tokens[j].text + "(";
          size_t k = j + 2;
          int inner = 1;
          while (tokens[k].kind != TokKind::End && inner > 0) {
            if (tokens[k].kind == TokKind::Symbol) {
              if (tokens[k].text == "(") ++inner;
              if (tokens[k].text == ")") {
                --inner;
                if (inner == 0) break;
              }
            }
            term += tokens[k].text;
            ++k;
          }
          term += ")";
          j = k + 1;
        } else {
          std::string column = read_column_ref(tokens, j);
          if (column.empty()) break;
          term = bare_column(column);
        }
        bool ascending = true;
        if (tokens[j].kind == TokKind::Ident && tokens[j].text == "desc") {
          ascending = false;
          ++j;
        } else if (tokens[j].kind == TokKind::Ident && tokens[j].text == "asc") {
          ++j;
        }
        sig.ordering.push_back({term, ascending});
        if (tokens[j].kind == TokKind::Symbol && tokens[j].text == ",") {
          ++j;
          continue;
        }
        break;
      }
      continue;
    }
    if (t.text == "limit" && tokens[i + 1].kind == TokKind::Number && !sig.limit) {
      sig.limit = std::strtol(tokens[i + 1].text.c_str(), nullptr, 10);
      continue;
    }
  }

  // Drop aliases from the table set.
  for (const auto& [alias, table] : aliases) {
    if (alias != table) sig.tables.erase(alias);
  }

  // Pass 2: predicate triples (column op literal) anywhere in the text,
  // including inside CASE expressions and subqueries.
  for (size_t i = 0; i + 2 < tokens.size(); ++i) {
    // column op literal
    size_t j = i;
    std::string column = read_column_ref(tokens, j);
    if (!column.empty() && tokens[j].kind == TokKind::Symbol) {
      const OpClass op = symbol_op(tokens[j].text);
      if (op != OpClass::Unknown && (tokens[j + 1].kind == TokKind::Number ||
                                     tokens[j + 1].kind == TokKind::String)) {
        const Token& lit = tokens[j + 1];
        sig.predicates.push_back(
            {bare_column(column), op,
             lit.kind == TokKind::Number ? canonical_number(lit.text) : lit.text});
        continue;
      }
    }
    // column BETWEEN lit AND lit
    if (!column.empty() && tokens[j].kind == TokKind::Ident &&
        tokens[j].text == "between" &&
        (tokens[j + 1].kind == TokKind::Number || tokens[j + 1].kind == TokKind::String)) {
      const Token& low = tokens[j + 1];
      std::string literal =
          low.kind == TokKind::Number ? canonical_number(low.text) : low.text;
      if (tokens[j + 2].kind == TokKind::Ident && tokens[j + 2].text == "and" &&
          (tokens[j + 3].kind == TokKind::Number ||
           tokens[j + 3].kind == TokKind::String)) {
        const Token& high = tokens[j + 3];
        literal += ".." + (high.kind == TokKind::Number ? canonical_number(high.text)
                                                        : high.text);
      }
      sig.predicates.push_back({bare_column(column), OpClass::Range, literal});
      continue;
    }
    // column [NOT] LIKE literal
    if (!column.empty() && tokens[j].kind == TokKind::Ident) {
      size_t k = j;
      if (tokens[k].text == "not") ++k;
      if (tokens[k].kind == TokKind::Ident && tokens[k].text == "like" &&
          tokens[k + 1].kind == TokKind::String) {
        sig.predicates.push_back({bare_column(column), OpClass::Like, tokens[k + 1].text});
        continue;
      }
    }
    // literal op column (flipped)
    if ((tokens[i].kind == TokKind::Number || tokens[i].kind == TokKind::String) &&
        tokens[i + 1].kind == TokKind::Symbol) {
      const OpClass op = symbol_op(tokens[i + 1].text);
      size_t k = i + 2;
      std::string rhs = read_column_ref(tokens, k);
      if (op != OpClass::Unknown && !rhs.empty()) {
        const Token& lit = tokens[i];
        sig.predicates.push_back(
            {bare_column(rhs), flip(op),
             lit.kind == TokKind::Number ? canonical_number(lit.text) : lit.text});
      }
    }
  }

  std::sort(sig.predicates.begin(), sig.predicates.end());
  sig.predicates.erase(std::unique(sig.predicates.begin(), sig.predicates.end()),
                       sig.predicates.end());

  // Projections: token span between the top-level SELECT [DISTINCT] and its FROM.
  depth = 0;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].kind == TokKind::Symbol) {
      if (tokens[i].text == "(") ++depth;
      if (tokens[i].text == ")") --depth;
      continue;
    }
    if (depth != 0 || tokens[i].kind != TokKind::Ident || tokens[i].text != "select") {
      continue;
    }
    size_t j = i + 1;
    if (tokens[j].kind == TokKind::Ident && tokens[j].text == "distinct") ++j;
    std::string current;
    int inner = 0;
    for (; tokens[j].kind != TokKind::End; ++j) {
      if (tokens[j].kind == TokKind::Symbol) {
        if (tokens[j].text == "(") ++inner;
        if (tokens[j].text == ")") --inner;
      }
      if (inner == 0 && tokens[j].kind == TokKind::Ident && tokens[j].text == "from") {
        break;
      }
      if (inner == 0 && tokens[j].kind == TokKind::Symbol && tokens[j].text == ",") {
        if (!current.empty()) sig.projections.push_back(current);
        current.clear();
        continue;
      }
      if (!current.empty()) current += " ";
      current += tokens[j].kind == TokKind::String ? "'" + tokens[j].text + "'"
                                                   : tokens[j].text;
    }
    if (!current.empty()) sig.projections.push_back(current);
    break;
  }
  return sig;
}

bool has_top_level_order_by(const std::string& sql) {
  const auto tokens = tokenize(sql);
  int depth = 0;
  for (size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (tokens[i].kind == TokKind::Symbol) {
      if (tokens[i].text == "(") ++depth;
      if (tokens[i].text == ")") --depth;
      continue;
    }
    if (depth == 0 && tokens[i].kind == TokKind::Ident && tokens[i].text == "order" &&
        tokens[i + 1].text == "by") {
      return true;
    }
  }
  return false;
}

std::optional<Predicate> parse_plan_filter(const std::string& filter) {
  const auto tokens = tokenize(filter);
  size_t i = 0;
  std::string column = read_column_ref(tokens, i);
  if (column.empty()) return std::nullopt;

  OpClass op = OpClass::Unknown;
  if (tokens[i].kind == TokKind::Symbol) {
    op = symbol_op(tokens[i].text);
    if (op == OpClass::Unknown) return std::nullopt;
    ++i;
  } else if (tokens[i].kind == TokKind::Ident) {
    // Word-level comparatives normalized to operator classes.
    const std::string w = tokens[i].text;
    auto next_is = [&](const char* word) {
      return tokens[i + 1].kind == TokKind::Ident && tokens[i + 1].text == word;
    };
    if (w == "greater" || w == "after" || w == "above" || w == "over") {
      op = OpClass::Greater;
      ++i;
      if (tokens[i].kind == TokKind::Ident && tokens[i].text == "than") ++i;
    } else if (w == "at" && next_is("least")) {
      op = OpClass::GreaterEqual;
      i += 2;
    } else if (w == "less" || w == "before" || w == "below" || w == "under") {
      op = OpClass::Less;
      ++i;
      if (tokens[i].kind == TokKind::Ident && tokens[i].text == "than") ++i;
    } else if (w == "at" && next_is("most")) {
      op = OpClass::LessEqual;
      i += 2;
    } else if (w == "not") {
      op = OpClass::NotEqual;
      ++i;
      if (tokens[i].kind == TokKind::Ident &&
          (tokens[i].text == "equal" || tokens[i].text == "equals")) {
        ++i;
      }
    } else if (w == "equals" || w == "equal" || w == "equality" || w == "is") {
      op = OpClass::Equality;
      ++i;
      if (tokens[i].kind == TokKind::Ident && tokens[i].text == "to") ++i;
    } else if (w == "between" || w == "range") {
      op = OpClass::Range;
      ++i;
    } else if (w == "like") {
      op = OpClass::Like;
      ++i;
    } else {
      return std::nullopt;
    }
  } else {
    return std::nullopt;
  }

  std::string literal;
  if (tokens[i].kind == TokKind::Number) {
    literal = canonical_number(tokens[i].text);
    if (op == OpClass::Range && tokens[i + 1].kind == TokKind::Ident &&
        tokens[i + 1].text == "and" && tokens[i + 2].kind == TokKind::Number) {
      literal += ".." + canonical_number(tokens[i + 2].text);
    }
  } else if (tokens[i].kind == TokKind::String) {
    literal = tokens[i].text;
  } else {
    return std::nullopt;
  }
  return Predicate{bare_column(lower(column)), op, literal};
}

std::vector<std::string> coverage_check(const SemanticPlan& plan,
                                        const SqlSignature& signature) {
  std::vector<std::string> missing;

  for (const auto& filter : plan.filters) {
    auto wanted = parse_plan_filter(filter);
    if (!wanted) continue;  // free-text filter, not checkable
    const bool found = std::any_of(
        signature.predicates.begin(), signature.predicates.end(),
        [&](const Predicate& p) {
          return p.column == wanted->column && p.op == wanted->op &&
                 p.literal == wanted->literal;
        });
    if (!found) missing.push_back("filter: " + filter);
  }

  for (const auto& [name, spec] : plan.aggregations) {
    (void)name;
    const std::string up = upper(spec);
    for (const char* func : {"COUNT", "SUM", "AVG", "MIN", "MAX"}) {
      if (up.find(func) == std::string::npos) continue;
      const bool found =
          std::any_of(signature.aggregates.begin(), signature.aggregates.end(),
                      [&](const Aggregate& a) { return a.func == func; });
      if (!found) missing.push_back(std::string("aggregation: ") + func);
    }
  }

  for (const auto& group : plan.grouping) {
    const std::string column = lower(bare_column(group));
    const bool found = std::any_of(signature.grouping.begin(), signature.grouping.end(),
                                   [&](const std::string& g) { return g == column; });
    if (!found) missing.push_back("grouping: " + group);
  }

  for (const auto& term : plan.order) {
    // Plan order terms read "column ASC" / "column DESC"; default ascending.
    std::istringstream in(term);
    std::string column, dir;
    in >> column >> dir;
    const bool ascending = upper(dir) != "DESC";
    const std::string wanted = lower(bare_column(column));
    const bool found = std::any_of(
        signature.ordering.begin(), signature.ordering.end(), [&](const OrderTerm& o) {
          return o.column == wanted && o.ascending == ascending;
        });
    if (!found) missing.push_back("order: " + term);
  }

  if (plan.limit && (!signature.limit || *signature.limit != *plan.limit)) {
    missing.push_back("limit: " + std::to_string(*plan.limit));
  }
  if (plan.distinct && !signature.distinct) {
    missing.push_back("distinct");
  }
  return missing;
}

}  // namespace reflectsql
