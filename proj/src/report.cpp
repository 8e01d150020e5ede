#include "edgeshield/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include "edgeshield/image_io.hpp"
#include "json.hpp"

namespace edgeshield {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double round_sig6(double v) { return std::strtod(format_number(v).c_str(), nullptr); }

std::string csv_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

std::string cell_text(const Cell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return *s;
  if (const auto* d = std::get_if<double>(&cell)) return format_number(*d);
  return std::to_string(std::get<std::int64_t>(cell));
}

nlohmann::ordered_json cell_json(const Cell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return *s;
  if (const auto* d = std::get_if<double>(&cell)) return round_sig6(*d);
  return std::get<std::int64_t>(cell);
}

nlohmann::ordered_json manifest_array(const std::vector<ManifestEntry>& manifest) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& e : manifest) {
    nlohmann::ordered_json item{{"path", e.path}, {"kind", e.kind}, {"checksum", e.checksum}};
    for (const auto& [k, v] : e.attributes) item[k] = v;
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    out += (i ? "," : "") + csv_field(table.columns[i]);
  }
  out += "\r\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_field(cell_text(row[i]));
    out += "\r\n";
  }
  return out;
}

std::string to_json(const Table& table, const std::string& config_hash,
                    const std::vector<ManifestEntry>& manifest) {
  nlohmann::ordered_json doc;
  doc["config_hash"] = config_hash;
  doc["columns"] = table.columns;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json obj;
    for (std::size_t i = 0; i < row.size(); ++i) obj[table.columns.at(i)] = cell_json(row[i]);
    rows.push_back(std::move(obj));
  }
  doc["rows"] = std::move(rows);
  doc["manifest"] = manifest_array(manifest);
  return doc.dump(2) + "\n";
}

std::string manifest_json(const std::string& config_hash, const std::vector<ManifestEntry>& manifest) {
  nlohmann::ordered_json doc;
  doc["config_hash"] = config_hash;
  doc["artifacts"] = manifest_array(manifest);
  return doc.dump(2) + "\n";
}

Table records_table(const std::vector<EvalRecord>& records) {
  Table t{{"model_id", "provenance", "loss", "accuracy", "count"}, {}};
  for (const auto& r : records) {
    t.rows.push_back({r.model_id, to_string(r.provenance), r.loss, r.accuracy,
                      static_cast<std::int64_t>(r.count)});
  }
  return t;
}

Table matrix_table(const FoolingMatrix& matrix) {
  Table t{{"generator"}, {}};
  t.columns.insert(t.columns.end(), matrix.evaluated.begin(), matrix.evaluated.end());
  for (std::size_t g = 0; g < matrix.generators.size(); ++g) {
    std::vector<Cell> row{matrix.generators[g]};
    for (double r : matrix.rates.at(g)) row.emplace_back(r);
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table experiment_rows_table(const std::vector<ExperimentRow>& rows) {
  Table t{{"model_id"}, {}};
  t.columns.insert(t.columns.end(), kExperimentColumns.begin(), kExperimentColumns.end());
  for (const auto& r : rows) {
    std::vector<Cell> row{r.model_id};
    for (double a : r.accuracy) row.emplace_back(a);
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table pixel_table(const std::vector<PixelSummary>& summary) {
  Table t{{"index", "label", "mean_pixel_diff", "edge_hamming_diff"}, {}};
  for (const auto& s : summary) {
    t.rows.push_back({static_cast<std::int64_t>(s.index), static_cast<std::int64_t>(s.label),
                      s.mean_pixel_diff, s.edge_hamming_diff});
  }
  return t;
}

void emit_report(const Table& table, const std::filesystem::path& dir, const std::string& name,
                 const std::string& config_hash, const std::vector<ManifestEntry>& manifest) {
  if (table.rows.empty()) throw std::runtime_error("refusing to write empty report " + name);
  try {
    atomic_write(dir / (name + ".csv"), to_csv(table));
    atomic_write(dir / (name + ".json"), to_json(table, config_hash, manifest));
  } catch (const std::filesystem::filesystem_error& e) {
    throw std::runtime_error("cannot write report " + name + ": " + e.what());
  }
}

}  // namespace edgeshield
