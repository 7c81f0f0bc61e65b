#include "mpgnn/instance_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mpgnn/errors.hpp"
#include "mpgnn/rng.hpp"

namespace mpgnn {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

long long parse_int(std::string_view token, std::size_t line_no) {
  long long value = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw ParseError(line_no, "expected an integer, got '" + std::string(token) + "'");
  return value;
}

// Calls fn(line_no, tokens) for every non-blank line.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    ++line_no;
    auto tokens = split_ws(text.substr(pos, end - pos));
    if (!tokens.empty()) fn(line_no, tokens);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

int checked_node(long long value, long long node_count, std::size_t line_no, int base) {
  if (value < base || value >= node_count + base)
    throw ParseError(line_no, "vertex " + std::to_string(value) + " out of range");
  return static_cast<int>(value - base);
}

}  // namespace

ConflictGraph parse_dimacs(std::string_view text, int k) {
  long long node_count = -1;
  std::vector<Edge> edges;
  for_each_line(text, [&](std::size_t line_no, const std::vector<std::string_view>& tok) {
    if (tok[0] == "c") return;
    if (tok[0] == "p") {
      if (node_count >= 0) throw ParseError(line_no, "duplicate problem line");
      if (tok.size() != 4 || (tok[1] != "edge" && tok[1] != "col"))
        throw ParseError(line_no, "expected 'p edge <nodes> <edges>'");
      node_count = parse_int(tok[2], line_no);
      if (node_count < 0) throw ParseError(line_no, "negative node count");
      parse_int(tok[3], line_no);
      return;
    }
    if (tok[0] == "e") {
      if (node_count < 0) throw ParseError(line_no, "edge line before problem line");
      if (tok.size() != 3) throw ParseError(line_no, "expected 'e <u> <v>'");
      const int u = checked_node(parse_int(tok[1], line_no), node_count, line_no, 1);
      const int v = checked_node(parse_int(tok[2], line_no), node_count, line_no, 1);
      if (u == v) throw ParseError(line_no, "self-loop");
      edges.push_back({u, v});
      return;
    }
    throw ParseError(line_no, "unknown line type '" + std::string(tok[0]) + "'");
  });
  if (node_count < 0) throw ParseError(0, "missing problem line");
  return ConflictGraph(static_cast<int>(node_count), k, std::move(edges));
}

std::string export_dimacs(const ConflictGraph& g) {
  std::string out = "p edge " + std::to_string(g.node_count()) + " " +
                    std::to_string(g.edge_count()) + "\n";
  for (const auto& e : g.edges())
    out += "e " + std::to_string(e.u + 1) + " " + std::to_string(e.v + 1) + "\n";
  return out;
}

std::string export_edgelist(const ConflictGraph& g, std::optional<int> planted_chromatic_number) {
  std::string out = std::to_string(g.node_count()) + " " + std::to_string(g.k());
  if (planted_chromatic_number) out += " " + std::to_string(*planted_chromatic_number);
  out += "\n";
  for (const auto& e : g.edges()) out += std::to_string(e.u) + " " + std::to_string(e.v) + "\n";
  for (const auto& [v, color] : g.anchors())
    out += "a " + std::to_string(v) + " " + std::to_string(color) + "\n";
  return out;
}

Instance import_instance(std::string_view text) {
  long long node_count = -1;
  long long k = 0;
  std::optional<int> chromatic;
  std::vector<Edge> edges;
  std::map<int, int> anchors;
  for_each_line(text, [&](std::size_t line_no, const std::vector<std::string_view>& tok) {
    if (tok[0].front() == '#') return;
    if (node_count < 0) {
      if (tok.size() != 2 && tok.size() != 3)
        throw ParseError(line_no, "expected header 'n k [chromatic_number]'");
      node_count = parse_int(tok[0], line_no);
      k = parse_int(tok[1], line_no);
      if (node_count < 0) throw ParseError(line_no, "negative node count");
      if (k < 1) throw ParseError(line_no, "k must be positive");
      if (tok.size() == 3) chromatic = static_cast<int>(parse_int(tok[2], line_no));
      return;
    }
    if (tok[0] == "a") {
      if (tok.size() != 3) throw ParseError(line_no, "expected 'a <node> <color>'");
      const int v = checked_node(parse_int(tok[1], line_no), node_count, line_no, 0);
      const long long color = parse_int(tok[2], line_no);
      if (color < 0 || color >= k)
        throw ParseError(line_no, "anchor color " + std::to_string(color) + " out of range");
      if (!anchors.emplace(v, static_cast<int>(color)).second)
        throw ParseError(line_no, "duplicate anchor for node " + std::to_string(v));
      return;
    }
    if (tok.size() != 2) throw ParseError(line_no, "expected '<u> <v>'");
    const int u = checked_node(parse_int(tok[0], line_no), node_count, line_no, 0);
    const int v = checked_node(parse_int(tok[1], line_no), node_count, line_no, 0);
    if (u == v) throw ParseError(line_no, "self-loop");
    edges.push_back({u, v});
  });
  if (node_count < 0) throw ParseError(0, "missing header line");
  return {ConflictGraph(static_cast<int>(node_count), static_cast<int>(k), std::move(edges),
                        std::move(anchors)),
          chromatic};
}

ConflictGraph import_edgelist(std::string_view text) { return import_instance(text).graph; }

std::string export_coloring(const Coloring& c) {
  std::string out;
  for (std::size_t v = 0; v < c.size(); ++v)
    out += std::to_string(v) + " " + std::to_string(c[v]) + "\n";
  return out;
}

Coloring import_coloring(std::string_view text) {
  Coloring c;
  for_each_line(text, [&](std::size_t line_no, const std::vector<std::string_view>& tok) {
    if (tok.size() != 2) throw ParseError(line_no, "expected '<node> <color>'");
    const long long v = parse_int(tok[0], line_no);
    const long long color = parse_int(tok[1], line_no);
    if (v != static_cast<long long>(c.size()))
      throw ParseError(line_no, "nodes must be listed in order starting at 0");
    if (color < 0) throw ParseError(line_no, "negative color");
    c.colors.push_back(static_cast<int>(color));
  });
  return c;
}

PlantedInstance generate_planted(int n, int k, double density, std::uint64_t seed) {
  if (k < 1) throw InvalidParameter("k must be positive");
  if (n < k) throw InvalidParameter("planted generator needs n >= k");
  if (!(density >= 0.0 && density <= 1.0)) throw InvalidParameter("density must be in [0, 1]");

  Rng rng(seed);
  std::vector<int> order(n);
  for (int v = 0; v < n; ++v) order[v] = v;
  rng.shuffle(std::span<int>(order));

  Coloring witness;
  witness.colors.assign(n, 0);
  std::vector<std::vector<int>> groups(k);
  for (int i = 0; i < n; ++i) witness.colors[order[i]] = i % k;
  for (int v = 0; v < n; ++v) groups[witness.colors[v]].push_back(v);

  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (witness.colors[u] != witness.colors[v] && rng.bernoulli(density)) edges.push_back({u, v});

  std::vector<int> pin(k);
  for (int g = 0; g < k; ++g) pin[g] = groups[g][rng.below(groups[g].size())];
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) edges.push_back({pin[a], pin[b]});

  return {ConflictGraph(n, k, std::move(edges)), std::move(witness)};
}

ConflictGraph generate_uncolorable(int n, int k, double density, std::uint64_t seed) {
  if (n < k + 1) throw InvalidParameter("uncolorable generator needs n >= k + 1");
  auto planted = generate_planted(n, k, density, seed);
  Rng rng(derive_seed(seed, "uncolorable"));
  std::vector<int> nodes(n);
  for (int v = 0; v < n; ++v) nodes[v] = v;
  rng.shuffle(std::span<int>(nodes));
  std::vector<Edge> edges(planted.graph.edges().begin(), planted.graph.edges().end());
  for (int a = 0; a <= k; ++a)
    for (int b = a + 1; b <= k; ++b) edges.push_back({nodes[a], nodes[b]});
  return ConflictGraph(n, k, std::move(edges));
}

namespace {

std::string instance_name(char prefix, int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%04d%s", prefix, index, ext);
  return buf;
}

}  // namespace

CorpusInstance regenerate(const ManifestEntry& entry) {
  CorpusInstance out;
  out.entry = entry;
  if (entry.colorable) {
    auto planted = generate_planted(entry.n, entry.k, entry.density, entry.seed);
    out.graph = std::move(planted.graph);
    out.witness = std::move(planted.witness);
  } else {
    out.graph = generate_uncolorable(entry.n, entry.k, entry.density, entry.seed);
  }
  return out;
}

std::vector<CorpusInstance> generate_corpus(const CorpusParams& p) {
  if (p.count < 0 || p.uncolorable < 0) throw InvalidParameter("counts must be non-negative");
  if (p.n_min > p.n_max) throw InvalidParameter("n_min must not exceed n_max");
  if (p.n_min < p.k + (p.uncolorable > 0 ? 1 : 0))
    throw InvalidParameter("n_min too small for k");
  std::vector<CorpusInstance> out;
  const int total = p.count + p.uncolorable;
  out.reserve(total);
  for (int i = 0; i < total; ++i) {
    const bool colorable = i < p.count;
    ManifestEntry e;
    e.seed = derive_seed(p.seed, "instance", static_cast<std::uint64_t>(i));
    Rng size_rng(derive_seed(e.seed, "size"));
    e.n = static_cast<int>(size_rng.range(p.n_min, p.n_max));
    e.k = p.k;
    e.density = p.density;
    e.colorable = colorable;
    if (colorable) {
      e.path = instance_name('g', i, ".txt");
      e.witness_path = instance_name('g', i, ".witness");
      e.planted_chromatic_number = p.k;
    } else {
      e.path = instance_name('u', i, ".txt");
    }
    out.push_back(regenerate(e));
  }
  return out;
}

std::string manifest_to_json(const CorpusManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "mpgnn-corpus-manifest/1";
  j["seed"] = m.params.seed;
  j["generator"] = {{"count", m.params.count},   {"n_min", m.params.n_min},
                    {"n_max", m.params.n_max},   {"density", m.params.density},
                    {"k", m.params.k},           {"uncolorable", m.params.uncolorable}};
  auto& list = j["instances"] = nlohmann::ordered_json::array();
  for (const auto& e : m.instances) {
    nlohmann::ordered_json row = {{"path", e.path},   {"seed", e.seed},
                                  {"n", e.n},         {"k", e.k},
                                  {"density", e.density}, {"colorable", e.colorable}};
    if (!e.witness_path.empty()) row["witness"] = e.witness_path;
    if (e.planted_chromatic_number) row["planted_chromatic_number"] = *e.planted_chromatic_number;
    list.push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

CorpusManifest manifest_from_json(std::string_view text) {
  CorpusManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.params.seed = j.at("seed").get<std::uint64_t>();
    const auto& gen = j.at("generator");
    m.params.count = gen.at("count").get<int>();
    m.params.n_min = gen.at("n_min").get<int>();
    m.params.n_max = gen.at("n_max").get<int>();
    m.params.density = gen.at("density").get<double>();
    m.params.k = gen.at("k").get<int>();
    m.params.uncolorable = gen.value("uncolorable", 0);
    for (const auto& row : j.at("instances")) {
      ManifestEntry e;
      e.path = row.at("path").get<std::string>();
      e.seed = row.at("seed").get<std::uint64_t>();
      e.n = row.at("n").get<int>();
      e.k = row.at("k").get<int>();
      e.density = row.at("density").get<double>();
      e.colorable = row.value("colorable", true);
      e.witness_path = row.value("witness", std::string{});
      if (row.contains("planted_chromatic_number"))
        e.planted_chromatic_number = row.at("planted_chromatic_number").get<int>();
      m.instances.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("invalid corpus manifest: ") + ex.what());
  }
  return m;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

CorpusManifest write_corpus(const std::filesystem::path& dir, const CorpusParams& params) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  CorpusManifest manifest;
  manifest.params = params;
  for (auto& inst : generate_corpus(params)) {
    write_file_atomic(dir / inst.entry.path,
                      export_edgelist(inst.graph, inst.entry.planted_chromatic_number));
    if (inst.witness) write_file_atomic(dir / inst.entry.witness_path, export_coloring(*inst.witness));
    manifest.instances.push_back(inst.entry);
  }
  write_file_atomic(dir / "manifest.json", manifest_to_json(manifest));
  return manifest;
}

LoadedCorpus load_corpus(const std::filesystem::path& dir) {
  LoadedCorpus out;
  out.manifest = manifest_from_json(read_file(dir / "manifest.json"));
  for (const auto& e : out.manifest.instances) {
    const auto path = dir / e.path;
    try {
      out.graphs.push_back(import_edgelist(read_file(path)));
    } catch (const ParseError& ex) {
      throw ParseError(ex.line(), path.string() + ": " + ex.what());
    }
    out.ids.push_back(std::filesystem::path(e.path).stem().string());
  }
  return out;
}

ConflictGraph load_instance(const std::filesystem::path& path, int k_for_dimacs) {
  const auto text = read_file(path);
  const auto ext = path.extension().string();
  if (ext == ".col" || ext == ".dimacs") return parse_dimacs(text, k_for_dimacs);
  return import_edgelist(text);
}

}  // namespace mpgnn
