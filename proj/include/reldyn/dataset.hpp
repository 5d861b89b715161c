#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "reldyn/sim.hpp"

namespace reldyn {

inline constexpr const char* kCorpusFormatVersion = "RDGNN-DS-1";

// Sidecar manifest next to the .jsonl corpus; splits partition [0, n).
struct CorpusManifest {
  std::string format_version = kCorpusFormatVersion;
  int n_episodes = 0;
  uint64_t seed = 0;
  nlohmann::json generation_config;  // DataGenConfig snapshot
  std::vector<int> train, val, test;

  nlohmann::json to_json() const;
  static CorpusManifest from_json(const nlohmann::json& j);
};

std::string manifest_path_for(const std::string& corpus_path);

nlohmann::json episode_to_json(const Episode& ep);
Episode episode_from_json(const nlohmann::json& j);

void write_corpus(const std::vector<Episode>& episodes,
                  const std::string& path, const CorpusManifest& manifest);
std::vector<Episode> read_corpus(const std::string& path,
                                 CorpusManifest* manifest = nullptr);

// Streaming reader: one episode in memory at a time.
class CorpusReader {
 public:
  explicit CorpusReader(const std::string& path);
  const CorpusManifest& manifest() const { return manifest_; }
  // Returns false at end of stream.
  bool next(Episode* out);

 private:
  std::ifstream in_;
  std::string path_;
  CorpusManifest manifest_;
  int line_no_ = 0;
};

// Seed-deterministic shuffle then partition by fractions (must sum to 1).
void split_corpus(CorpusManifest& manifest, double train_frac, double val_frac,
                  double test_frac, uint64_t seed);

}  // namespace reldyn
