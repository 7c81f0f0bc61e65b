#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpgnn/graph.hpp"

namespace mpgnn {

// An instance as stored on disk: the graph plus the optional planted
// chromatic number carried in the edge-list header.
struct Instance {
  ConflictGraph graph;
  std::optional<int> planted_chromatic_number;
};

// DIMACS `p edge n m` / `e u v` text, 1-indexed, `c` lines ignored.
// Throws ParseError (with line number) on malformed input.
ConflictGraph parse_dimacs(std::string_view text, int k);
std::string export_dimacs(const ConflictGraph& g);

// Native edge-list format, 0-indexed:
//   n k [planted_chromatic_number]
//   u v            (one line per edge)
//   a node color   (one line per anchor)
std::string export_edgelist(const ConflictGraph& g,
                            std::optional<int> planted_chromatic_number = std::nullopt);
ConflictGraph import_edgelist(std::string_view text);
Instance import_instance(std::string_view text);

// Coloring companion format: one `node color` line per node.
std::string export_coloring(const Coloring& c);
Coloring import_coloring(std::string_view text);

struct PlantedInstance {
  ConflictGraph graph;
  Coloring witness;
};

// k near-equal groups (shuffled membership), every cross-group pair added with
// probability `density`, plus a k-clique through one node of each group so
// the chromatic number is exactly k. Throws InvalidParameter when n < k.
PlantedInstance generate_planted(int n, int k, double density, std::uint64_t seed);

// Planted instance with an extra (k+1)-clique on random nodes: never k-colorable.
ConflictGraph generate_uncolorable(int n, int k, double density, std::uint64_t seed);

struct CorpusParams {
  int count = 200;
  int n_min = 20;
  int n_max = 200;
  double density = 0.3;
  int k = 3;
  int uncolorable = 0;  // number of (k+1)-clique instances appended after the colorable ones
  std::uint64_t seed = 42;
};

struct ManifestEntry {
  std::string path;          // relative to the corpus directory
  std::string witness_path;  // empty for uncolorable instances
  std::uint64_t seed = 0;
  int n = 0;
  int k = 0;
  double density = 0.0;
  bool colorable = true;
  std::optional<int> planted_chromatic_number;
};

struct CorpusManifest {
  CorpusParams params;
  std::vector<ManifestEntry> instances;
};

struct CorpusInstance {
  ManifestEntry entry;
  ConflictGraph graph;
  std::optional<Coloring> witness;
};

// Deterministic in params (per-instance seeds derive from params.seed and the index).
std::vector<CorpusInstance> generate_corpus(const CorpusParams& params);
CorpusInstance regenerate(const ManifestEntry& entry);

std::string manifest_to_json(const CorpusManifest& m);
CorpusManifest manifest_from_json(std::string_view text);

// Writes every instance, witness and manifest.json into dir (atomic per file).
CorpusManifest write_corpus(const std::filesystem::path& dir, const CorpusParams& params);

struct LoadedCorpus {
  CorpusManifest manifest;
  std::vector<std::string> ids;
  std::vector<ConflictGraph> graphs;
};

LoadedCorpus load_corpus(const std::filesystem::path& dir);

// Loads a single instance; `.col`/`.dimacs` files are read as DIMACS with the given k,
// anything else as the native edge-list format.
ConflictGraph load_instance(const std::filesystem::path& path, int k_for_dimacs);

std::string read_file(const std::filesystem::path& path);
// Creates missing parent directories, writes `path.tmp`, then renames it over
// `path`. Throws IoError with the path on failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace mpgnn
