#include "reflectsql/context_proxy.hpp"

#include "reflectsql/errors.hpp"
#include "reflectsql/fingerprint.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace reflectsql {

using Json = nlohmann::ordered_json;

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string qualified(const std::string& table, const std::string& column) {
  return table + "." + column;
}

Json proxy_to_json(const ContextProxy& proxy, bool with_hash) {
  Json j;
  j["format_version"] = kProxyFormatVersion;
  j["db_id"] = proxy.db_id;
  j["budget_k"] = proxy.budget_k;
  j["descriptors"] = Json::array();
  for (const auto& d : proxy.descriptors) {
    j["descriptors"].push_back({{"table", d.table},
                                {"column", d.column},
                                {"declared_type", d.declared_type},
                                {"nullable", d.nullable},
                                {"is_primary_key", d.is_primary_key},
                                {"key_likelihood", d.key_likelihood},
                                {"distinct_count", d.distinct_count}});
  }
  j["summaries"] = Json::array();
  for (const auto& s : proxy.summaries) {
    j["summaries"].push_back(
        {{"table", s.table}, {"summary", s.summary}, {"row_count", s.row_count}});
  }
  j["join_candidates"] = Json::array();
  for (const auto& c : proxy.join_candidates) {
    j["join_candidates"].push_back(
        {{"from_ref", c.from_ref},
         {"to_ref", c.to_ref},
         {"source", c.source == JoinSource::DeclaredFk ? "declared_fk" : "sample_corroborated"},
         {"confidence", c.confidence}});
  }
  j["value_samples"] = Json::array();
  for (const auto& v : proxy.value_samples) {
    j["value_samples"].push_back(
        {{"column_ref", v.column_ref},
         {"values", v.values},
         {"cardinality_class", v.cardinality_class == CardinalityClass::Low ? "low" : "high"},
         {"distinct_count", v.distinct_count},
         {"enumerated", v.enumerated}});
  }
  if (with_hash) j["content_hash"] = proxy.content_hash;
  return j;
}

ContextProxy proxy_from_json(const Json& j) {
  ContextProxy proxy;
  proxy.db_id = j.at("db_id").get<std::string>();
  proxy.budget_k = j.at("budget_k").get<int>();
  for (const auto& d : j.at("descriptors")) {
    proxy.descriptors.push_back({d.at("table").get<std::string>(),
                                 d.at("column").get<std::string>(),
                                 d.at("declared_type").get<std::string>(),
                                 d.at("nullable").get<bool>(),
                                 d.at("is_primary_key").get<bool>(),
                                 d.at("key_likelihood").get<double>(),
                                 d.at("distinct_count").get<int64_t>()});
  }
  for (const auto& s : j.at("summaries")) {
    proxy.summaries.push_back({s.at("table").get<std::string>(),
                               s.at("summary").get<std::string>(),
                               s.at("row_count").get<int64_t>()});
  }
  for (const auto& c : j.at("join_candidates")) {
    proxy.join_candidates.push_back(
        {c.at("from_ref").get<std::string>(), c.at("to_ref").get<std::string>(),
         c.at("source").get<std::string>() == "declared_fk" ? JoinSource::DeclaredFk
                                                            : JoinSource::SampleCorroborated,
         c.at("confidence").get<double>()});
  }
  for (const auto& v : j.at("value_samples")) {
    proxy.value_samples.push_back(
        {v.at("column_ref").get<std::string>(),
         v.at("values").get<std::vector<std::string>>(),
         v.at("cardinality_class").get<std::string>() == "low" ? CardinalityClass::Low
                                                               : CardinalityClass::High,
         v.at("distinct_count").get<int64_t>(), v.at("enumerated").get<bool>()});
  }
  proxy.content_hash = j.at("content_hash").get<std::string>();
  return proxy;
}

/// Trim model-produced summary text to at most two sentences.
std::string trim_to_two_sentences(const std::string& text) {
  int sentences = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '.' || text[i] == '!' || text[i] == '?') {
      ++sentences;
      if (sentences == 2) return text.substr(0, i + 1);
    }
  }
  return text;
}

}  // namespace

bool ContextProxy::has_table(const std::string& table) const {
  return std::any_of(descriptors.begin(), descriptors.end(),
                     [&](const auto& d) { return d.table == table; });
}

bool ContextProxy::has_column(const std::string& table, const std::string& column) const {
  return std::any_of(descriptors.begin(), descriptors.end(), [&](const auto& d) {
    return d.table == table && d.column == column;
  });
}

bool ContextProxy::has_any_column(const std::string& column) const {
  return std::any_of(descriptors.begin(), descriptors.end(),
                     [&](const auto& d) { return d.column == column; });
}

std::optional<std::string> ContextProxy::primary_key(const std::string& table) const {
  for (const auto& d : descriptors) {
    if (d.table == table && d.is_primary_key) return d.column;
  }
  return std::nullopt;
}

TableSummary summarize_table(const std::string& table,
                             const std::vector<ColumnDescriptor>& descriptors,
                             int64_t row_count, const Summarizer& summarizer) {
  std::vector<std::string> columns;
  for (const auto& d : descriptors) {
    if (d.table == table) columns.push_back(d.column);
  }
  std::ostringstream fallback;
  fallback << "Table " << table << " with " << columns.size()
           << (columns.size() == 1 ? " column: " : " columns: ");
  for (size_t i = 0; i < columns.size() && i < 3; ++i) {
    if (i > 0) fallback << ", ";
    fallback << columns[i];
  }
  if (columns.size() > 3) fallback << ", ...";
  fallback << ".";

  TableSummary summary{table, fallback.str(), row_count};
  if (summarizer) {
    std::string text = summarizer(table, fallback.str());
    if (!text.empty()) summary.summary = trim_to_two_sentences(text);
  }
  return summary;
}

ContextProxy build_proxy(const Database& db, const std::string& db_id, int budget_k,
                         const Summarizer& summarizer) {
  if (budget_k < 1) throw Error(ErrorCode::ConfigError, "budget_k must be >= 1");

  ContextProxy proxy;
  proxy.db_id = db_id;
  proxy.budget_k = budget_k;

  const auto tables = db.tables();

  // Declared foreign keys first; they feed the key-likelihood heuristic.
  std::vector<ForeignKey> declared;
  std::set<std::string> fk_endpoints;
  for (const auto& table : tables) {
    for (auto fk : db.foreign_keys(table)) {
      if (fk.to_column.empty()) {
        for (const auto& col : db.table_columns(fk.to_table)) {
          if (col.primary_key) fk.to_column = col.name;
        }
      }
      fk_endpoints.insert(qualified(fk.from_table, fk.from_column));
      fk_endpoints.insert(qualified(fk.to_table, fk.to_column));
      declared.push_back(std::move(fk));
    }
  }

  for (const auto& table : tables) {
    const auto columns = db.table_columns(table);
    if (columns.empty()) {
      throw Error(ErrorCode::IntrospectionFailure, "table without columns: " + table);
    }
    for (const auto& col : columns) {
      ColumnDescriptor d;
      d.table = table;
      d.column = col.name;
      d.declared_type = col.declared_type;
      d.nullable = !col.not_null && !col.primary_key;
      d.is_primary_key = col.primary_key;
      if (col.primary_key) {
        d.key_likelihood = 1.0;
      } else if (ends_with(col.name, "_id")) {
        d.key_likelihood = fk_endpoints.count(qualified(table, col.name)) ? 0.8 : 0.5;
      } else {
        d.key_likelihood = 0.1;
      }
      d.distinct_count = db.distinct_count(table, col.name);
      proxy.descriptors.push_back(std::move(d));

      ValueSample sample;
      sample.column_ref = qualified(table, col.name);
      sample.distinct_count = proxy.descriptors.back().distinct_count;
      if (sample.distinct_count <= budget_k) {
        sample.cardinality_class = CardinalityClass::Low;
        sample.enumerated = true;
        for (const auto& cell : db.distinct_values(table, col.name, budget_k)) {
          sample.values.push_back(canonical_cell(cell));
        }
        std::sort(sample.values.begin(), sample.values.end());
      }
      proxy.value_samples.push_back(std::move(sample));
    }
    proxy.summaries.push_back(
        summarize_table(table, proxy.descriptors, db.row_count(table), summarizer));
  }

  for (const auto& fk : declared) {
    proxy.join_candidates.push_back({qualified(fk.from_table, fk.from_column),
                                     qualified(fk.to_table, fk.to_column),
                                     JoinSource::DeclaredFk, 1.0});
  }

  // Sample-corroborated candidates only when the schema declares no FKs.
  if (declared.empty()) {
    for (const auto& from : proxy.descriptors) {
      if (from.is_primary_key) continue;
      for (const auto& to : proxy.descriptors) {
        if (to.table == from.table) continue;
        if (to.column != from.column) continue;
        if (!to.is_primary_key && to.key_likelihood < 0.8) continue;
        auto sample = db.query("SELECT " + quote_identifier(from.column) + " FROM " +
                               quote_identifier(from.table) + " WHERE " +
                               quote_identifier(from.column) + " IS NOT NULL LIMIT 100");
        if (sample.rows.empty()) continue;
        std::set<std::string> target;
        for (const auto& cell :
             db.distinct_values(to.table, to.column, 100000)) {
          target.insert(canonical_cell(cell));
        }
        int64_t contained = 0;
        for (const auto& row : sample.rows) {
          if (target.count(canonical_cell(row[0]))) ++contained;
        }
        const double fraction =
            static_cast<double>(contained) / static_cast<double>(sample.rows.size());
        if (fraction >= 0.8) {
          proxy.join_candidates.push_back({qualified(from.table, from.column),
                                           qualified(to.table, to.column),
                                           JoinSource::SampleCorroborated, fraction});
        }
      }
    }
  }

  proxy.content_hash = sha256_hex(proxy_to_json(proxy, false).dump());
  return proxy;
}

std::string render_context(const ContextProxy& proxy, const SchemaSelection* selection) {
  std::set<std::string> selected;
  if (selection) {
    for (const auto& t : selection->tables) {
      if (!proxy.has_table(t)) {
        throw Error(ErrorCode::UnknownTable, "selection names unknown table: " + t);
      }
      selected.insert(t);
    }
  }
  auto included = [&](const std::string& table) {
    return !selection || selected.count(table) > 0;
  };

  std::ostringstream out;
  out << "Database: " << proxy.db_id << "\n\n";
  for (const auto& summary : proxy.summaries) {
    if (!included(summary.table)) continue;
    out << "Table " << summary.table;
    if (summary.row_count >= 0) out << " (" << summary.row_count << " rows)";
    out << ":\n";
    for (const auto& d : proxy.descriptors) {
      if (d.table != summary.table) continue;
      out << "  " << d.column;
      if (!d.declared_type.empty()) out << " " << d.declared_type;
      if (d.is_primary_key) out << " [primary key]";
      out << "\n";
    }
    out << "  Summary: " << summary.summary << "\n";
  }
  out << "\nForeign keys:\n";
  for (const auto& c : proxy.join_candidates) {
    const auto dot_from = c.from_ref.find('.');
    const auto dot_to = c.to_ref.find('.');
    if (selection && (!selected.count(c.from_ref.substr(0, dot_from)) ||
                      !selected.count(c.to_ref.substr(0, dot_to)))) {
      continue;
    }
    out << "  " << c.from_ref << " -> " << c.to_ref;
    if (c.source == JoinSource::SampleCorroborated) out << " (sample-corroborated)";
    out << "\n";
  }
  out << "\nValue instances:\n";
  for (const auto& v : proxy.value_samples) {
    if (!v.enumerated || v.values.empty()) continue;
    const auto table = v.column_ref.substr(0, v.column_ref.find('.'));
    if (!included(table)) continue;
    out << "  " << v.column_ref << ": ";
    for (size_t i = 0; i < v.values.size(); ++i) {
      if (i > 0) out << ", ";
      out << "'" << v.values[i] << "'";
    }
    out << "\n";
  }
  return out.str();
}

std::string render_schema_json(const ContextProxy& proxy) {
  Json schema;
  schema["tables"] = Json::object();
  for (const auto& d : proxy.descriptors) {
    schema["tables"][d.table].push_back(d.column);
  }
  schema["foreign_keys"] = Json::array();
  for (const auto& c : proxy.join_candidates) {
    schema["foreign_keys"].push_back({{"from", c.from_ref}, {"to", c.to_ref}});
  }
  return schema.dump(2);
}

void save_proxy(const ContextProxy& proxy, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write proxy file: " + path);
  out << proxy_to_json(proxy, true).dump(2) << "\n";
}

ContextProxy load_proxy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read proxy file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("corrupt proxy file: ") + e.what());
  }
  if (!j.contains("format_version") || !j.at("format_version").is_number_integer() ||
      j.at("format_version").get<int>() != kProxyFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported proxy format version in " + path);
  }
  try {
    return proxy_from_json(j);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("corrupt proxy file: ") + e.what());
  }
}

}  // namespace reflectsql
