#include "nbgate/notebook.hpp"

#include <filesystem>

#include "nbgate/config.hpp"
#include "nbgate/util.hpp"

namespace nbgate {

using nlohmann::json;

std::string_view cell_type_name(CellType t) {
  switch (t) {
    case CellType::Code: return "code";
    case CellType::Markdown: return "markdown";
    case CellType::Raw: return "raw";
  }
  return "code";
}

namespace {

std::string join_source(const json& source, const std::string& path) {
  if (source.is_string()) return source.get<std::string>();
  if (source.is_array()) {
    std::string out;
    for (const auto& part : source) {
      if (!part.is_string()) throw SchemaViolation(path, "source fragments must be strings");
      out += part.get<std::string>();
    }
    return out;
  }
  throw SchemaViolation(path, "source must be a string or list of strings");
}

Cell parse_cell(const json& raw, const std::string& path) {
  if (!raw.is_object()) throw SchemaViolation(path, "cell must be an object");
  Cell cell;

  auto type_it = raw.find("cell_type");
  if (type_it == raw.end()) throw SchemaViolation(path + ".cell_type", "missing");
  std::string type = type_it->is_string() ? type_it->get<std::string>() : "";
  if (type == "code") {
    cell.cell_type = CellType::Code;
  } else if (type == "markdown") {
    cell.cell_type = CellType::Markdown;
  } else if (type == "raw") {
    cell.cell_type = CellType::Raw;
  } else {
    throw SchemaViolation(path + ".cell_type", "unknown cell_type '" + type + "'");
  }

  if (auto it = raw.find("source"); it != raw.end()) {
    cell.source = join_source(*it, path + ".source");
  }
  if (auto it = raw.find("metadata"); it != raw.end()) {
    if (!it->is_object()) throw SchemaViolation(path + ".metadata", "must be an object");
    cell.metadata = *it;
  }
  if (cell.cell_type == CellType::Code) {
    if (auto it = raw.find("outputs"); it != raw.end()) {
      if (!it->is_array()) throw SchemaViolation(path + ".outputs", "must be a list");
      cell.outputs = *it;  // opaque, preserved verbatim
    }
    if (auto it = raw.find("execution_count"); it != raw.end() && !it->is_null()) {
      if (!it->is_number_integer()) {
        throw SchemaViolation(path + ".execution_count", "must be an integer or null");
      }
      cell.execution_count = it->get<long long>();
    }
  }
  return cell;
}

json cell_to_json(const Cell& cell) {
  json out;
  out["cell_type"] = std::string(cell_type_name(cell.cell_type));
  out["metadata"] = cell.metadata;
  out["source"] = cell.source;
  if (cell.cell_type == CellType::Code) {
    out["outputs"] = cell.outputs;
    out["execution_count"] =
        cell.execution_count ? json(*cell.execution_count) : json(nullptr);
  }
  return out;
}

}  // namespace

std::optional<std::string> NotebookDocument::title() const {
  for (const char* key : {"title", "name"}) {
    if (auto it = metadata.find(key); it != metadata.end() && it->is_string()) {
      return it->get<std::string>();
    }
  }
  return std::nullopt;
}

NotebookDocument parse_notebook(std::string_view raw) {
  json doc;
  try {
    doc = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw NotJson(std::string("not well-formed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaViolation("", "notebook must be a JSON object");

  NotebookDocument out;

  auto fmt = doc.find("nbformat");
  if (fmt == doc.end() || !fmt->is_number_integer()) {
    throw SchemaViolation("nbformat", "missing or not an integer");
  }
  out.nbformat = fmt->get<int>();
  if (out.nbformat != 4) {
    throw SchemaViolation("nbformat",
                          "unsupported nbformat " + std::to_string(out.nbformat) +
                              " (only 4 accepted)");
  }
  if (auto it = doc.find("nbformat_minor"); it != doc.end() && it->is_number_integer()) {
    out.nbformat_minor = it->get<int>();
  }
  if (auto it = doc.find("metadata"); it != doc.end()) {
    if (!it->is_object()) throw SchemaViolation("metadata", "must be an object");
    out.metadata = *it;
  }

  auto cells = doc.find("cells");
  if (cells == doc.end()) throw SchemaViolation("cells", "missing cells array");
  if (!cells->is_array()) throw SchemaViolation("cells", "must be an array");
  out.cells.reserve(cells->size());
  for (size_t i = 0; i < cells->size(); ++i) {
    out.cells.push_back(parse_cell((*cells)[i], "cells[" + std::to_string(i) + "]"));
  }
  return out;
}

std::string serialize_notebook(const NotebookDocument& doc) {
  json out;
  out["nbformat"] = doc.nbformat;
  out["nbformat_minor"] = doc.nbformat_minor;
  out["metadata"] = doc.metadata;
  out["cells"] = json::array();
  for (const Cell& cell : doc.cells) out["cells"].push_back(cell_to_json(cell));
  return out.dump(1);
}

NotebookDocument apply_read_only(const NotebookDocument& doc) {
  NotebookDocument out = doc;
  for (Cell& cell : out.cells) {
    cell.metadata["editable"] = false;
    cell.metadata["deletable"] = false;
  }
  return out;
}

std::string render_embed_page(const NotebookDocument& doc, const GatewayConfig& cfg,
                              std::string_view default_title) {
  std::string title = html_escape(doc.title().value_or(std::string(default_title)));
  std::string authority = cfg.advertised();
  std::string scheme = cfg.public_scheme();
  std::string notebook_name =
      std::filesystem::path(cfg.notebook_path).filename().string();
  std::string embed_url = scheme + "://" + authority + "/notebooks/" + notebook_name;

  std::string page;
  page += "<!DOCTYPE html>\n";
  page += "<html lang=\"en\">\n<head>\n";
  page += "<meta charset=\"utf-8\">\n";
  page += "<title>" + title + "</title>\n";
  page += "</head>\n<body>\n";
  page += "<h1>" + title + "</h1>\n";
  page += "<p>" + std::to_string(doc.cells.size()) + " cells";
  if (cfg.read_only) page += " (read only)";
  page += "</p>\n";
  page += "<iframe src=\"" + embed_url + "\" title=\"" + title + "\" width=\"100%\" height=\"800\"></iframe>\n";
  page += "</body>\n</html>\n";
  return page;
}

}  // namespace nbgate
