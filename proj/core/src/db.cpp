#include "reflectsql/db.hpp"

#include "reflectsql/errors.hpp"

#include <sqlite3.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace reflectsql {

namespace {

struct Deadline {
  std::chrono::steady_clock::time_point end;
};

int progress_callback(void* ctx) {
  auto* deadline = static_cast<Deadline*>(ctx);
  return std::chrono::steady_clock::now() > deadline->end ? 1 : 0;
}

Cell read_cell(sqlite3_stmt* stmt, int col) {
  switch (sqlite3_column_type(stmt, col)) {
    case SQLITE_NULL:
      return Null{};
    case SQLITE_INTEGER:
      return static_cast<int64_t>(sqlite3_column_int64(stmt, col));
    case SQLITE_FLOAT:
      return sqlite3_column_double(stmt, col);
    default: {
      const unsigned char* text = sqlite3_column_text(stmt, col);
      return std::string(reinterpret_cast<const char*>(text),
                         static_cast<size_t>(sqlite3_column_bytes(stmt, col)));
    }
  }
}

}  // namespace

Database Database::open(const std::string& path, int flags) {
  Database db;
  if (sqlite3_open_v2(path.c_str(), &db.db_, flags, nullptr) != SQLITE_OK) {
    std::string msg = db.db_ ? sqlite3_errmsg(db.db_) : "out of memory";
    if (db.db_) sqlite3_close(db.db_);
    db.db_ = nullptr;
    throw Error(ErrorCode::UnreadableDatabase, "cannot open " + path + ": " + msg);
  }
  db.path_ = path;
  sqlite3_busy_timeout(db.db_, 2000);
  return db;
}

Database Database::open_read_only(const std::string& path) {
  auto db = open(path, SQLITE_OPEN_READONLY);
  // A file that is not a database only fails on first access.
  try {
    db.query("SELECT name FROM sqlite_master LIMIT 1");
  } catch (const Error&) {
    throw Error(ErrorCode::UnreadableDatabase, "not a database file: " + path);
  }
  return db;
}

Database Database::open_read_write(const std::string& path) {
  return open(path, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
}

Database Database::open_memory() {
  return open(":memory:", SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
}

Database::Database(Database&& other) noexcept : db_(other.db_), path_(std::move(other.path_)) {
  other.db_ = nullptr;
}

Database& Database::operator=(Database&& other) noexcept {
  if (this != &other) {
    if (db_) sqlite3_close(db_);
    db_ = other.db_;
    path_ = std::move(other.path_);
    other.db_ = nullptr;
  }
  return *this;
}

Database::~Database() {
  if (db_) sqlite3_close(db_);
}

void Database::exec(const std::string& sql) {
  char* errmsg = nullptr;
  if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &errmsg) != SQLITE_OK) {
    std::string msg = errmsg ? errmsg : "unknown error";
    sqlite3_free(errmsg);
    throw Error(ErrorCode::DatasetError, "exec failed: " + msg);
  }
}

bool Database::parses(const std::string& sql, std::string* error) const {
  sqlite3_stmt* stmt = nullptr;
  const int rc = sqlite3_prepare_v2(db_, sql.c_str(), -1, &stmt, nullptr);
  if (stmt) sqlite3_finalize(stmt);
  if (rc != SQLITE_OK && error) *error = sqlite3_errmsg(db_);
  return rc == SQLITE_OK;
}

QueryResult Database::query(const std::string& sql, int timeout_ms) const {
  sqlite3_stmt* stmt = nullptr;
  if (sqlite3_prepare_v2(db_, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
    throw Error(ErrorCode::UnparseableSql,
                std::string("prepare failed: ") + sqlite3_errmsg(db_));
  }

  Deadline deadline{std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(timeout_ms)};
  sqlite3_progress_handler(db_, 1000, progress_callback, &deadline);

  QueryResult result;
  const int ncols = sqlite3_column_count(stmt);
  for (int i = 0; i < ncols; ++i) {
    const char* name = sqlite3_column_name(stmt, i);
    result.columns.push_back(name ? name : "");
  }

  int rc;
  while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
    Row row;
    row.reserve(ncols);
    for (int i = 0; i < ncols; ++i) row.push_back(read_cell(stmt, i));
    result.rows.push_back(std::move(row));
  }
  sqlite3_progress_handler(db_, 0, nullptr, nullptr);
  const std::string errmsg = sqlite3_errmsg(db_);
  sqlite3_finalize(stmt);
  if (rc != SQLITE_DONE) {
    throw Error(ErrorCode::DatasetError, "execution failed: " + errmsg);
  }
  return result;
}

std::vector<std::string> Database::tables() const {
  auto result = query(
      "SELECT name FROM sqlite_master WHERE type='table' AND name NOT LIKE "
      "'sqlite_%' ORDER BY name");
  std::vector<std::string> names;
  for (const auto& row : result.rows) names.push_back(std::get<std::string>(row[0]));
  return names;
}

std::vector<ColumnInfo> Database::table_columns(const std::string& table) const {
  QueryResult result;
  try {
    result = query("PRAGMA table_info(" + quote_identifier(table) + ")");
  } catch (const Error& e) {
    throw Error(ErrorCode::IntrospectionFailure,
                "cannot introspect table " + table + ": " + e.what());
  }
  std::vector<ColumnInfo> columns;
  for (const auto& row : result.rows) {
    ColumnInfo info;
    info.name = std::get<std::string>(row[1]);
    info.declared_type =
        std::holds_alternative<std::string>(row[2]) ? std::get<std::string>(row[2]) : "";
    info.not_null = std::get<int64_t>(row[3]) != 0;
    info.primary_key = std::get<int64_t>(row[5]) != 0;
    columns.push_back(std::move(info));
  }
  return columns;
}

std::vector<ForeignKey> Database::foreign_keys(const std::string& table) const {
  auto result = query("PRAGMA foreign_key_list(" + quote_identifier(table) + ")");
  std::vector<ForeignKey> keys;
  for (const auto& row : result.rows) {
    ForeignKey fk;
    fk.from_table = table;
    fk.to_table = std::get<std::string>(row[2]);
    fk.from_column = std::get<std::string>(row[3]);
    // The "to" column may be NULL when the reference is to the primary key.
    if (std::holds_alternative<std::string>(row[4])) {
      fk.to_column = std::get<std::string>(row[4]);
    }
    keys.push_back(std::move(fk));
  }
  return keys;
}

int64_t Database::row_count(const std::string& table) const {
  auto result = query("SELECT COUNT(*) FROM " + quote_identifier(table));
  return std::get<int64_t>(result.rows.at(0).at(0));
}

int64_t Database::distinct_count(const std::string& table, const std::string& column) const {
  auto result = query("SELECT COUNT(DISTINCT " + quote_identifier(column) + ") FROM " +
                      quote_identifier(table));
  return std::get<int64_t>(result.rows.at(0).at(0));
}

std::vector<Cell> Database::distinct_values(const std::string& table,
                                            const std::string& column,
                                            int64_t limit) const {
  auto result = query("SELECT DISTINCT " + quote_identifier(column) + " FROM " +
                      quote_identifier(table) + " WHERE " + quote_identifier(column) +
                      " IS NOT NULL ORDER BY " + quote_identifier(column) + " LIMIT " +
                      std::to_string(limit));
  std::vector<Cell> values;
  for (const auto& row : result.rows) values.push_back(row[0]);
  return values;
}

std::string quote_identifier(const std::string& name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string canonical_cell(const Cell& cell) {
  if (std::holds_alternative<Null>(cell)) return "NULL";
  if (std::holds_alternative<int64_t>(cell)) return std::to_string(std::get<int64_t>(cell));
  if (std::holds_alternative<double>(cell)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", std::get<double>(cell));
    return buf;
  }
  return std::get<std::string>(cell);
}

}  // namespace reflectsql
