#include <doctest.h>

#include "nbgate/config.hpp"
#include "nbgate/notebook.hpp"
#include "nbgate/util.hpp"
#include "support.hpp"

using namespace nbgate;

namespace {

GatewayConfig demo_config() {
  GatewayConfig cfg;
  cfg.listen_address = *http::Authority::parse("127.0.0.1:9000");
  cfg.advertised_authority = "example.org:443";
  cfg.upstream = *http::Url::parse("http://127.0.0.1:8888");
  cfg.notebook_path = "demo.ipynb";
  return cfg;
}

bool structurally_equal(const NotebookDocument& a, const NotebookDocument& b) {
  if (a.nbformat != b.nbformat || a.nbformat_minor != b.nbformat_minor) return false;
  if (a.metadata != b.metadata) return false;
  if (a.cells.size() != b.cells.size()) return false;
  for (size_t i = 0; i < a.cells.size(); ++i) {
    const Cell& x = a.cells[i];
    const Cell& y = b.cells[i];
    if (x.cell_type != y.cell_type || x.source != y.source || x.metadata != y.metadata ||
        x.outputs != y.outputs || x.execution_count != y.execution_count) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("minimal valid notebook parses to zero cells") {
  auto doc = parse_notebook(R"({"nbformat":4,"nbformat_minor":5,"metadata":{},"cells":[]})");
  CHECK(doc.nbformat == 4);
  CHECK(doc.nbformat_minor == 5);
  CHECK(doc.cells.empty());
}

TEST_CASE("fixture notebook parses and round-trips") {
  std::string raw = testsupport::read_text(testsupport::fixture_path("demo.ipynb"));
  REQUIRE_FALSE(raw.empty());
  NotebookDocument doc = parse_notebook(raw);
  REQUIRE(doc.cells.size() == 3);
  CHECK(doc.cells[1].cell_type == CellType::Code);
  CHECK(doc.cells[1].source == "1+1");
  CHECK(doc.cells[1].execution_count == 1);
  CHECK(doc.cells[0].cell_type == CellType::Markdown);
  CHECK(doc.cells[0].source.find("# Demo notebook") == 0);
  CHECK(doc.title() == "Demo");
  // Unknown metadata keys survive untouched.
  CHECK(doc.metadata.contains("custom_tool"));

  // Round trip: structural equality, and canonical form is a fixed point.
  std::string canonical = serialize_notebook(doc);
  NotebookDocument again = parse_notebook(canonical);
  CHECK(structurally_equal(doc, again));
  CHECK(serialize_notebook(again) == canonical);
}

TEST_CASE("nbformat 3 is rejected at the nbformat path") {
  try {
    parse_notebook(R"({"nbformat":3,"metadata":{},"cells":[]})");
    FAIL("expected SchemaViolation");
  } catch (const SchemaViolation& e) {
    CHECK(e.path() == "nbformat");
  }
}

TEST_CASE("schema violations carry the offending path") {
  try {
    parse_notebook(R"({"nbformat":4,"metadata":{}})");
    FAIL("expected SchemaViolation");
  } catch (const SchemaViolation& e) {
    CHECK(e.path() == "cells");
  }
  try {
    parse_notebook(R"({"nbformat":4,"cells":[{"cell_type":"mystery","source":""}]})");
    FAIL("expected SchemaViolation");
  } catch (const SchemaViolation& e) {
    CHECK(e.path() == "cells[0].cell_type");
  }
}

TEST_CASE("non-JSON input raises NotJson") {
  CHECK_THROWS_AS(parse_notebook("this is not json"), NotJson);
  CHECK_THROWS_AS(parse_notebook(""), NotJson);
}

TEST_CASE("missing cell metadata is treated as empty") {
  auto doc = parse_notebook(
      R"({"nbformat":4,"cells":[{"cell_type":"markdown","source":"hi"}]})");
  CHECK(doc.cells[0].metadata.is_object());
  CHECK(doc.cells[0].metadata.empty());
}

TEST_CASE("apply_read_only on an empty notebook is the identity") {
  auto doc = parse_notebook(R"({"nbformat":4,"metadata":{},"cells":[]})");
  auto ro = apply_read_only(doc);
  CHECK(serialize_notebook(ro) == serialize_notebook(doc));
}

TEST_CASE("apply_read_only forces editable and deletable to false") {
  auto doc = parse_notebook(
      R"({"nbformat":4,"cells":[{"cell_type":"code","source":"x","metadata":{"editable":true}}]})");
  auto ro = apply_read_only(doc);
  CHECK(ro.cells[0].metadata["editable"] == false);
  CHECK(ro.cells[0].metadata["deletable"] == false);
  // Original untouched (transform returns a new document).
  CHECK(doc.cells[0].metadata["editable"] == true);
}

TEST_CASE("apply_read_only is idempotent and touches only the two keys") {
  std::string raw = testsupport::read_text(testsupport::fixture_path("demo.ipynb"));
  NotebookDocument doc = parse_notebook(raw);
  NotebookDocument once = apply_read_only(doc);
  NotebookDocument twice = apply_read_only(once);
  CHECK(serialize_notebook(once) == serialize_notebook(twice));

  REQUIRE(once.cells.size() == doc.cells.size());
  for (size_t i = 0; i < doc.cells.size(); ++i) {
    CHECK(once.cells[i].source == doc.cells[i].source);
    CHECK(once.cells[i].outputs == doc.cells[i].outputs);
    CHECK(once.cells[i].execution_count == doc.cells[i].execution_count);
    // Structural diff restricted to editable/deletable.
    auto before = doc.cells[i].metadata;
    auto after = once.cells[i].metadata;
    before.erase("editable");
    before.erase("deletable");
    after.erase("editable");
    after.erase("deletable");
    CHECK(before == after);
    CHECK(once.cells[i].metadata["editable"] == false);
    CHECK(once.cells[i].metadata["deletable"] == false);
  }
  CHECK(once.metadata == doc.metadata);
}

TEST_CASE("embed page contains title and advertised authority") {
  std::string raw = testsupport::read_text(testsupport::fixture_path("demo.ipynb"));
  NotebookDocument doc = parse_notebook(raw);
  GatewayConfig cfg = demo_config();
  std::string page = render_embed_page(doc, cfg);
  CHECK(page.find("Demo") != std::string::npos);
  CHECK(page.find("example.org:443") != std::string::npos);
  CHECK(page.find("http://example.org:443/notebooks/demo.ipynb") != std::string::npos);
}

TEST_CASE("embed page never leaks the internal listen authority") {
  std::string raw = testsupport::read_text(testsupport::fixture_path("demo.ipynb"));
  NotebookDocument doc = parse_notebook(raw);
  GatewayConfig cfg = demo_config();
  std::string page = render_embed_page(doc, cfg);
  CHECK(page.find(":9000") == std::string::npos);
  CHECK(page.find("127.0.0.1") == std::string::npos);
}

TEST_CASE("embed page has no inline event handlers") {
  std::string raw = testsupport::read_text(testsupport::fixture_path("demo.ipynb"));
  NotebookDocument doc = parse_notebook(raw);
  GatewayConfig cfg = demo_config();
  std::string page = to_lower(render_embed_page(doc, cfg));
  for (const char* attr : {"onclick", "onload", "onerror", "onmouseover", "javascript:"}) {
    CHECK(page.find(attr) == std::string::npos);
  }
}

TEST_CASE("embed page for an empty notebook uses the default title") {
  auto doc = parse_notebook(R"({"nbformat":4,"metadata":{},"cells":[]})");
  GatewayConfig cfg = demo_config();
  std::string page = render_embed_page(doc, cfg);
  CHECK(page.find("<!DOCTYPE html>") == 0);
  CHECK(page.find("Jupyter Notebook") != std::string::npos);
  CHECK(page.find("0 cells") != std::string::npos);
}

TEST_CASE("tls scheme reaches the embed URL") {
  auto doc = parse_notebook(R"({"nbformat":4,"metadata":{},"cells":[]})");
  GatewayConfig cfg = demo_config();
  cfg.tls.enabled = true;
  std::string page = render_embed_page(doc, cfg);
  CHECK(page.find("https://example.org:443/") != std::string::npos);
}
