#pragma once

/*!
  \file graph_io.hpp
  \brief JSON graph documents and newline-delimited datasets.

  One graph is one JSON object:

    header    format, schema_version, role, library_version,
              library_fingerprint, meta
    nodes     [{id, pin, owner, pin_index, origin, net}]   (net only on drivers)
    cells     [{id, kind, origin, inputs, output}]
    edges     [[from, to]], grouped by source in fanout order
    features  {columns, rows}   rows indexed by node id (omitted when absent)
    labels    {columns, rows}   likewise

  A dataset file holds one such document per line. Doubles are written in
  shortest round-trip form, so reading a graph back gives an identical one.
*/

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphsym/circuit_graph.hpp"
#include "graphsym/detail/text.hpp"

namespace graphsym {

inline constexpr int kGraphSchemaVersion = 1;
inline constexpr const char* kGraphFormat = "graphsym-graph";

inline const std::vector<std::string>& feature_columns() {
  static const std::vector<std::string> cols{"direction", "stage_delay", "slew",    "input_cap",
                                             "cell_area", "driven_cap",  "fanout", "category"};
  return cols;
}

inline const std::vector<std::string>& label_columns() {
  static const std::vector<std::string> cols{"delay_delta", "area_delta"};
  return cols;
}

namespace detail {

inline const char* pin_name(PinKind k) {
  switch (k) {
    case PinKind::CellInput: return "cell_in";
    case PinKind::CellOutput: return "cell_out";
    case PinKind::InputPort: return "input_port";
    case PinKind::OutputPort: return "output_port";
  }
  return "?";
}

inline PinKind parse_pin(const std::string& s) {
  if (s == "cell_in") return PinKind::CellInput;
  if (s == "cell_out") return PinKind::CellOutput;
  if (s == "input_port") return PinKind::InputPort;
  if (s == "output_port") return PinKind::OutputPort;
  fail(ErrorKind::Format, "unknown pin kind '" + s + "'");
}

inline const char* origin_name(Origin o) { return o == Origin::Original ? "original" : "inserted"; }

inline Origin parse_origin(const std::string& s) {
  if (s == "original") return Origin::Original;
  if (s == "inserted") return Origin::Inserted;
  fail(ErrorKind::Format, "unknown node origin '" + s + "'");
}

inline void check_columns(const nlohmann::json& j, const std::vector<std::string>& expected, const char* what) {
  if (j.at("columns").get<std::vector<std::string>>() != expected)
    fail(ErrorKind::Format, std::string(what) + " columns do not match this reader");
}

}  // namespace detail

inline nlohmann::json graph_to_json(const CircuitGraph& g) {
  using nlohmann::json;
  json header = {{"format", kGraphFormat},
                 {"schema_version", kGraphSchemaVersion},
                 {"role", to_string(g.role)},
                 {"library_version", g.library_version},
                 {"library_fingerprint", g.library_fingerprint},
                 {"meta", g.meta}};
  json nodes = json::array();
  for (const auto& p : g.nodes()) {
    json n = {{"id", p.id},
              {"pin", detail::pin_name(p.pin)},
              {"owner", p.owner},
              {"pin_index", p.pin_index},
              {"origin", detail::origin_name(p.origin)}};
    if (p.is_driver() && g.net_of(p.id) != kNoNet) n["net"] = g.net_of(p.id);
    nodes.push_back(std::move(n));
  }
  json cells = json::array();
  for (const auto& c : g.cells())
    cells.push_back({{"id", c.id},
                     {"kind", to_string(c.kind)},
                     {"origin", detail::origin_name(c.origin)},
                     {"inputs", c.inputs},
                     {"output", c.output}});
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({e.from, e.to});

  json doc = {{"header", header}, {"nodes", nodes}, {"cells", cells}, {"edges", edges}};
  if (g.has_features()) {
    json rows = json::array();
    for (const auto& f : g.features)
      rows.push_back({f.direction, f.stage_delay, f.slew, f.input_cap, f.cell_area, f.driven_cap, f.fanout, f.category});
    doc["features"] = {{"columns", feature_columns()}, {"rows", rows}};
  }
  if (g.has_labels()) {
    json rows = json::array();
    for (const auto& l : g.labels) rows.push_back({l.delay_delta, l.area_delta});
    doc["labels"] = {{"columns", label_columns()}, {"rows", rows}};
  }
  return doc;
}

inline CircuitGraph graph_from_json(const nlohmann::json& doc) {
  try {
    const auto& h = doc.at("header");
    if (h.at("format").get<std::string>() != kGraphFormat) fail(ErrorKind::Format, "not a graph document");
    int version = h.at("schema_version").get<int>();
    if (version != kGraphSchemaVersion)
      fail(ErrorKind::Format, "unsupported graph schema_version " + std::to_string(version));
    CircuitGraph g;
    g.role = parse_role(h.at("role").get<std::string>());
    g.library_version = h.at("library_version").get<std::string>();
    g.library_fingerprint = h.at("library_fingerprint").get<std::string>();
    g.meta = h.at("meta");

    const auto& nodes = doc.at("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      if (n.at("id").get<std::size_t>() != i) fail(ErrorKind::Format, "node ids must be dense and ordered");
      NodeId v = g.add_node(detail::parse_pin(n.at("pin").get<std::string>()), n.at("owner").get<std::uint32_t>(),
                            n.at("pin_index").get<std::uint8_t>(), detail::parse_origin(n.at("origin").get<std::string>()));
      if (n.contains("net")) g.set_net(v, n.at("net").get<NetId>());
    }
    const auto& cells = doc.at("cells");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      if (c.at("id").get<std::size_t>() != i) fail(ErrorKind::Format, "cell ids must be dense and ordered");
      g.attach_cell(parse_cell_kind(c.at("kind").get<std::string>()),
                    detail::parse_origin(c.at("origin").get<std::string>()), c.at("inputs").get<std::vector<NodeId>>(),
                    c.at("output").get<NodeId>());
    }
    for (const auto& e : doc.at("edges")) {
      auto u = e.at(0).get<NodeId>(), v = e.at(1).get<NodeId>();
      if (u >= g.num_nodes() || v >= g.num_nodes())
        fail(ErrorKind::Format, "edge " + std::to_string(u) + " -> " + std::to_string(v) + " names a missing node");
      g.add_edge(u, v);
    }
    (void)topo_order(g);

    if (doc.contains("features")) {
      const auto& f = doc.at("features");
      detail::check_columns(f, feature_columns(), "feature");
      const auto& rows = f.at("rows");
      if (rows.size() != g.num_nodes()) fail(ErrorKind::Format, "feature rows do not cover every node");
      for (const auto& r : rows) {
        FeatureVector fv{r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>(),
                         r.at(4).get<double>(), r.at(5).get<double>(), r.at(6).get<double>(),
                         r.at(7).get<std::uint32_t>()};
        if (fv.category >= kNumCategories) fail(ErrorKind::Format, "feature category out of range");
        g.features.push_back(fv);
      }
    }
    if (doc.contains("labels")) {
      const auto& l = doc.at("labels");
      detail::check_columns(l, label_columns(), "label");
      const auto& rows = l.at("rows");
      if (rows.size() != g.num_nodes()) fail(ErrorKind::Format, "label rows do not cover every node");
      for (const auto& r : rows) g.labels.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed graph document: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Format) throw;
    fail(ErrorKind::Format, std::string("malformed graph document: ") + e.what());
  }
}

inline std::string write_graph(const CircuitGraph& g) { return graph_to_json(g).dump(); }

inline CircuitGraph read_graph(std::string_view text) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) fail(ErrorKind::Format, "graph document is not valid JSON");
  return graph_from_json(doc);
}

/// One graph document per line.
inline void save_dataset(const std::vector<CircuitGraph>& graphs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Format, "cannot write dataset '" + path + "'");
  for (const auto& g : graphs) out << write_graph(g) << '\n';
  if (!out) fail(ErrorKind::Format, "write failed for dataset '" + path + "'");
}

inline std::vector<CircuitGraph> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Format, "cannot open dataset '" + path + "'");
  std::vector<CircuitGraph> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(read_graph(line));
    } catch (const Error& e) {
      fail(ErrorKind::Format, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// FNV-1a of a file's bytes, hex encoded.
inline std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Format, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return detail::hex64(detail::fnv1a(ss.str()));
}

}  // namespace graphsym
