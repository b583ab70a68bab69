#ifndef NBGATE_NOTEBOOK_HPP
#define NBGATE_NOTEBOOK_HPP

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace nbgate {

struct GatewayConfig;

class NotJson : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Carries the JSON path of the offending element, e.g. "cells[2].cell_type".
class SchemaViolation : public std::runtime_error {
 public:
  SchemaViolation(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class CellType { Code, Markdown, Raw };

std::string_view cell_type_name(CellType t);

struct Cell {
  CellType cell_type = CellType::Code;
  std::string source;
  nlohmann::json metadata = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::array();  // code cells only, preserved opaquely
  std::optional<long long> execution_count;
};

struct NotebookDocument {
  int nbformat = 4;
  int nbformat_minor = 0;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<Cell> cells;

  // Title from metadata.title (or metadata.name) when present.
  std::optional<std::string> title() const;
};

// Accepts only nbformat 4; unknown metadata keys are preserved verbatim.
// Throws NotJson or SchemaViolation.
NotebookDocument parse_notebook(std::string_view raw);

std::string serialize_notebook(const NotebookDocument& doc);

// Marks every cell metadata.editable=false, deletable=false. Idempotent.
NotebookDocument apply_read_only(const NotebookDocument& doc);

// Complete HTML page embedding the notebook UI via an iframe whose URL uses the
// advertised authority from cfg, never the internal listen authority.
std::string render_embed_page(const NotebookDocument& doc, const GatewayConfig& cfg,
                              std::string_view default_title = "Jupyter Notebook");

}  // namespace nbgate

#endif
