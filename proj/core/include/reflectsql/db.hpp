#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

struct sqlite3;

namespace reflectsql {

struct Null {
  bool operator==(const Null&) const = default;
};

using Cell = std::variant<Null, int64_t, double, std::string>;
using Row = std::vector<Cell>;

struct QueryResult {
  std::vector<std::string> columns;
  std::vector<Row> rows;
};

struct ColumnInfo {
  std::string name;
  std::string declared_type;
  bool not_null = false;
  bool primary_key = false;
};

struct ForeignKey {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;
};

/// RAII wrapper around a SQLite connection. Queries run with a wall-clock
/// deadline enforced via the progress handler.
class Database {
public:
  static Database open_read_only(const std::string& path);
  static Database open_read_write(const std::string& path);
  static Database open_memory();

  Database(Database&& other) noexcept;
  Database& operator=(Database&& other) noexcept;
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;
  ~Database();

  const std::string& path() const { return path_; }

  /// Runs a statement without results (DDL/DML).
  void exec(const std::string& sql);

  /// Prepares and runs a single query. Throws UnparseableSql when the
  /// statement fails to prepare, DatasetError on runtime/timeout failure.
  QueryResult query(const std::string& sql, int timeout_ms = 5000) const;

  /// Prepare-only check.
  bool parses(const std::string& sql, std::string* error = nullptr) const;

  std::vector<std::string> tables() const;
  std::vector<ColumnInfo> table_columns(const std::string& table) const;
  std::vector<ForeignKey> foreign_keys(const std::string& table) const;
  int64_t row_count(const std::string& table) const;
  int64_t distinct_count(const std::string& table, const std::string& column) const;
  std::vector<Cell> distinct_values(const std::string& table, const std::string& column,
                                    int64_t limit) const;

private:
  Database() = default;
  static Database open(const std::string& path, int flags);

  sqlite3* db_ = nullptr;
  std::string path_;
};

/// SQL-safe double-quoted identifier.
std::string quote_identifier(const std::string& name);

/// Canonical text rendering of a cell: decimal for numerics, stored text
/// for strings. NULL renders as the literal "NULL".
std::string canonical_cell(const Cell& cell);

}  // namespace reflectsql
