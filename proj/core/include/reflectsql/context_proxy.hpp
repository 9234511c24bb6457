#pragma once

#include "reflectsql/db.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace reflectsql {

inline constexpr int kDefaultValueBudget = 20;
inline constexpr int kProxyFormatVersion = 1;

struct ColumnDescriptor {
  std::string table;
  std::string column;
  std::string declared_type;
  bool nullable = true;
  bool is_primary_key = false;
  double key_likelihood = 0.1;
  // -1 means unknown.
  int64_t distinct_count = -1;

  bool operator==(const ColumnDescriptor&) const = default;
};

struct TableSummary {
  std::string table;
  std::string summary;
  // -1 means unknown.
  int64_t row_count = -1;

  bool operator==(const TableSummary&) const = default;
};

enum class JoinSource { DeclaredFk, SampleCorroborated };

struct JoinCandidate {
  std::string from_ref;  // table.column
  std::string to_ref;    // table.column
  JoinSource source = JoinSource::DeclaredFk;
  double confidence = 1.0;

  bool operator==(const JoinCandidate&) const = default;
};

enum class CardinalityClass { Low, High };

struct ValueSample {
  std::string column_ref;  // table.column
  std::vector<std::string> values;
  CardinalityClass cardinality_class = CardinalityClass::High;
  int64_t distinct_count = 0;
  bool enumerated = false;

  bool operator==(const ValueSample&) const = default;
};

struct SchemaSelection {
  std::vector<std::string> tables;
  std::vector<std::string> attributes;  // qualified table.attribute

  bool operator==(const SchemaSelection&) const = default;
};

struct ContextProxy {
  std::string db_id;
  int budget_k = kDefaultValueBudget;
  std::vector<ColumnDescriptor> descriptors;
  std::vector<TableSummary> summaries;
  std::vector<JoinCandidate> join_candidates;
  std::vector<ValueSample> value_samples;
  std::string content_hash;

  bool operator==(const ContextProxy&) const = default;

  bool has_table(const std::string& table) const;
  bool has_column(const std::string& table, const std::string& column) const;
  /// True when some table carries a column with this (unqualified) name.
  bool has_any_column(const std::string& column) const;
  std::optional<std::string> primary_key(const std::string& table) const;
};

/// Optional model hook for table summaries; given the rendered table
/// description, returns free text that is trimmed to two sentences.
using Summarizer = std::function<std::string(const std::string& table,
                                             const std::string& description)>;

TableSummary summarize_table(const std::string& table,
                             const std::vector<ColumnDescriptor>& descriptors,
                             int64_t row_count, const Summarizer& summarizer);

/// Offline construction of the proxy. Deterministic for identical database
/// bytes and budget when no summarizer is supplied.
ContextProxy build_proxy(const Database& db, const std::string& db_id, int budget_k,
                         const Summarizer& summarizer = nullptr);

/// Textual schema plus value-instance block, optionally restricted to a
/// table selection.
std::string render_context(const ContextProxy& proxy,
                           const SchemaSelection* selection = nullptr);

/// Compact JSON schema block in the shape the stage prompts expect.
std::string render_schema_json(const ContextProxy& proxy);

void save_proxy(const ContextProxy& proxy, const std::string& path);
ContextProxy load_proxy(const std::string& path);

}  // namespace reflectsql
