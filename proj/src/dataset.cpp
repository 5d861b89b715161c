#include "reldyn/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "reldyn/rng.hpp"

namespace reldyn {

nlohmann::json CorpusManifest::to_json() const {
  return {{"format_version", format_version},
          {"n_episodes", n_episodes},
          {"seed", seed},
          {"generation_config", generation_config},
          {"splits", {{"train", train}, {"val", val}, {"test", test}}}};
}

CorpusManifest CorpusManifest::from_json(const nlohmann::json& j) {
  CorpusManifest m;
  m.format_version = j.at("format_version").get<std::string>();
  check(m.format_version == kCorpusFormatVersion,
        "corpus format version mismatch: file has ", m.format_version,
        ", expected ", kCorpusFormatVersion);
  m.n_episodes = j.at("n_episodes").get<int>();
  m.seed = j.at("seed").get<uint64_t>();
  m.generation_config = j.value("generation_config", nlohmann::json::object());
  if (j.contains("splits")) {
    m.train = j["splits"].value("train", std::vector<int>{});
    m.val = j["splits"].value("val", std::vector<int>{});
    m.test = j["splits"].value("test", std::vector<int>{});
  }
  return m;
}

std::string manifest_path_for(const std::string& corpus_path) {
  std::string base = corpus_path;
  if (base.size() >= 6 && base.substr(base.size() - 6) == ".jsonl")
    base = base.substr(0, base.size() - 6);
  return base + ".manifest.json";
}

namespace {
nlohmann::json vec3_json(const Vec3& v) { return {v.x, v.y, v.z}; }
Vec3 vec3_from(const nlohmann::json& a) {
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}
}  // namespace

nlohmann::json episode_to_json(const Episode& ep) {
  nlohmann::json j;
  j["camera"] = camera_to_json(ep.camera);
  j["objects"] = nlohmann::json::array();
  check(!ep.steps.empty(), "episode has no steps");
  for (const Cuboid& c : ep.steps.front().poses)
    j["objects"].push_back(
        {{"id", c.object_id}, {"half_extents", vec3_json(c.half_extents)}});

  j["steps"] = nlohmann::json::array();
  for (const EpisodeStep& step : ep.steps) {
    nlohmann::json sj;
    nlohmann::json clouds = nlohmann::json::object();
    for (const auto& [id, pts] : step.cloud.per_object) {
      nlohmann::json arr = nlohmann::json::array();
      if (!step.cloud.off_view.count(id))
        for (const Vec3& p : pts) arr.push_back(vec3_json(p));
      clouds[std::to_string(id)] = std::move(arr);
    }
    sj["clouds"] = std::move(clouds);
    sj["off_view"] = std::vector<int>(step.cloud.off_view.begin(),
                                      step.cloud.off_view.end());
    nlohmann::json centers = nlohmann::json::object();
    for (const Cuboid& c : step.poses)
      centers[std::to_string(c.object_id)] = vec3_json(c.center);
    sj["centers"] = std::move(centers);
    sj["relations"] = relation_matrix_to_json(step.relations);
    j["steps"].push_back(std::move(sj));
  }
  j["actions"] = nlohmann::json::array();
  for (const SkillAction& a : ep.actions) j["actions"].push_back(action_to_json(a));
  return j;
}

Episode episode_from_json(const nlohmann::json& j) {
  Episode ep;
  ep.camera = camera_from_json(j.at("camera"));
  std::map<int, Vec3> half_extents;
  for (const auto& o : j.at("objects"))
    half_extents[o.at("id").get<int>()] = vec3_from(o.at("half_extents"));

  for (const auto& sj : j.at("steps")) {
    EpisodeStep step;
    step.cloud.camera_pose = ep.camera;
    for (int id : sj.value("off_view", std::vector<int>{}))
      step.cloud.off_view.insert(id);
    for (const auto& [key, arr] : sj.at("clouds").items()) {
      int id = std::stoi(key);
      std::vector<Vec3> pts;
      for (const auto& p : arr) pts.push_back(vec3_from(p));
      if (step.cloud.off_view.count(id)) {
        check(pts.empty(), "off-view object ", id, " has stored points");
        pts.assign(static_cast<size_t>(kPointsPerObject), Vec3{});
      }
      check(static_cast<int>(pts.size()) == kPointsPerObject,
            "object ", id, " cloud has ", pts.size(), " points, expected ",
            kPointsPerObject);
      step.cloud.per_object[id] = std::move(pts);
    }
    for (const auto& [key, cj] : sj.at("centers").items()) {
      int id = std::stoi(key);
      Cuboid c;
      c.object_id = id;
      c.center = vec3_from(cj);
      check(half_extents.count(id), "step pose references unknown object ", id);
      c.half_extents = half_extents[id];
      step.poses.push_back(c);
    }
    std::sort(step.poses.begin(), step.poses.end(),
              [](const Cuboid& a, const Cuboid& b) {
                return a.object_id < b.object_id;
              });
    step.relations = relation_matrix_from_json(sj.at("relations"));
    ep.steps.push_back(std::move(step));
  }
  for (const auto& aj : j.at("actions")) ep.actions.push_back(action_from_json(aj));
  check(ep.steps.size() == ep.actions.size() + 1, "episode has ",
        ep.steps.size(), " steps for ", ep.actions.size(), " actions");
  return ep;
}

void write_corpus(const std::vector<Episode>& episodes,
                  const std::string& path, const CorpusManifest& manifest) {
  std::ofstream os(path, std::ios::trunc);
  check(os.good(), "cannot write corpus ", path);
  for (const Episode& ep : episodes) os << episode_to_json(ep).dump() << "\n";
  check(os.good(), "short write to corpus ", path);
  os.close();

  CorpusManifest m = manifest;
  m.n_episodes = static_cast<int>(episodes.size());
  std::ofstream ms(manifest_path_for(path), std::ios::trunc);
  check(ms.good(), "cannot write manifest for ", path);
  ms << m.to_json().dump(2) << "\n";
}

CorpusReader::CorpusReader(const std::string& path)
    : in_(path), path_(path) {
  check(in_.good(), "cannot open corpus ", path);
  std::ifstream ms(manifest_path_for(path));
  check(ms.good(), "cannot open manifest ", manifest_path_for(path));
  nlohmann::json mj;
  try {
    ms >> mj;
  } catch (const nlohmann::json::exception& e) {
    fail("invalid manifest ", manifest_path_for(path), ": ", e.what());
  }
  manifest_ = CorpusManifest::from_json(mj);
}

bool CorpusReader::next(Episode* out) {
  std::string line;
  if (!std::getline(in_, line)) return false;
  ++line_no_;
  try {
    *out = episode_from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    fail("corpus ", path_, " line ", line_no_, ": ", e.what());
  } catch (const Error& e) {
    fail("corpus ", path_, " line ", line_no_, ": ", e.what());
  }
  return true;
}

std::vector<Episode> read_corpus(const std::string& path,
                                 CorpusManifest* manifest) {
  CorpusReader reader(path);
  if (manifest) *manifest = reader.manifest();
  std::vector<Episode> out;
  Episode ep;
  while (reader.next(&ep)) out.push_back(std::move(ep));
  check(static_cast<int>(out.size()) == reader.manifest().n_episodes,
        "corpus ", path, " has ", out.size(), " lines, manifest says ",
        reader.manifest().n_episodes);
  return out;
}

void split_corpus(CorpusManifest& manifest, double train_frac, double val_frac,
                  double test_frac, uint64_t seed) {
  check(std::abs(train_frac + val_frac + test_frac - 1.0) < 1e-9,
        "split fractions must sum to 1, got ",
        train_frac + val_frac + test_frac);
  check(train_frac >= 0 && val_frac >= 0 && test_frac >= 0,
        "split fractions must be non-negative");
  std::vector<int> idx(static_cast<size_t>(manifest.n_episodes));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(idx);
  int n = manifest.n_episodes;
  int n_train = static_cast<int>(std::llround(train_frac * n));
  int n_val = static_cast<int>(std::llround(val_frac * n));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  manifest.train.assign(idx.begin(), idx.begin() + n_train);
  manifest.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  manifest.test.assign(idx.begin() + n_train + n_val, idx.end());
}

}  // namespace reldyn
