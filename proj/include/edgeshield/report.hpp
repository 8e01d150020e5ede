#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "edgeshield/evaluation.hpp"
#include "edgeshield/pipeline.hpp"

namespace edgeshield {

using Cell = std::variant<std::string, double, std::int64_t>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

/// printf "%.6g".
std::string format_number(double v);
/// The double nearest to format_number(v), so JSON and CSV agree on re-parse.
double round_sig6(double v);
/// RFC-4180: quote fields containing a comma, quote, CR or LF; double quotes.
std::string csv_field(const std::string& field);

std::string to_csv(const Table& table);
/// {"config_hash", "columns", "rows": [{column: value}], "manifest": [...]}
std::string to_json(const Table& table, const std::string& config_hash,
                    const std::vector<ManifestEntry>& manifest);

Table records_table(const std::vector<EvalRecord>& records);
/// Header "generator,<evaluated...>", one row per generator.
Table matrix_table(const FoolingMatrix& matrix);
Table experiment_rows_table(const std::vector<ExperimentRow>& rows);
Table pixel_table(const std::vector<PixelSummary>& summary);

/// Writes <dir>/<name>.csv and <dir>/<name>.json. Throws std::runtime_error
/// if the table is empty or the directory cannot be written.
void emit_report(const Table& table, const std::filesystem::path& dir, const std::string& name,
                 const std::string& config_hash, const std::vector<ManifestEntry>& manifest);

std::string manifest_json(const std::string& config_hash, const std::vector<ManifestEntry>& manifest);

}  // namespace edgeshield
