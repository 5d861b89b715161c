#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reldyn/scene.hpp"

namespace reldyn {

inline constexpr int kNumRelations = 7;
inline constexpr double kRelationMargin = 1e-3;  // meters, also contact gap

enum Relation : int {
  kLeft = 0,
  kRight = 1,
  kBehind = 2,
  kInFront = 3,
  kAbove = 4,
  kBelow = 5,
  kInContact = 6,
};

const std::array<std::string, kNumRelations>& relation_names();
int relation_index(const std::string& name);  // throws on unknown name

struct RelationVector {
  std::array<bool, kNumRelations> bits{};

  bool operator[](int r) const { return bits[static_cast<size_t>(r)]; }
  bool& operator[](int r) { return bits[static_cast<size_t>(r)]; }
  bool operator==(const RelationVector& o) const { return bits == o.bits; }
};

// Ordered-pair relation map over every (i, j), i != j, in a scene.
struct RelationMatrix {
  std::map<std::pair<int, int>, RelationVector> pairs;

  bool has(int i, int j) const { return pairs.count({i, j}) > 0; }
  const RelationVector& at(int i, int j) const;
  RelationVector& at(int i, int j) { return pairs[{i, j}]; }
};

struct Goal {
  struct Conjunct {
    int a = 0, b = 0;
    int relation = 0;
    bool value = true;
  };
  std::vector<Conjunct> conjuncts;
};

// Throws when the goal contradicts itself or requires mutually exclusive
// positives (left && right, behind && in_front, above && below on one pair).
void validate_goal(const Goal& goal);

// Relations between camera-aligned AABBs: contact when every per-axis gap
// is <= 1 mm; above/below additionally need a positive footprint overlap;
// the planar relations need full-extent separation along the axis.
RelationVector label_pair(const Cuboid& a, const Cuboid& b,
                          const Camera& camera);

// label_pair over every ordered pair; off-view objects get all-false rows
// against every partner.
RelationMatrix label_scene(const Scene& scene, const Camera& camera,
                           const std::set<int>& off_view = {});

// True iff every conjunct matches. Unknown pair -> error.
bool goal_satisfied(const RelationMatrix& m, const Goal& g);

nlohmann::json goal_to_json(const Goal& g);
Goal goal_from_json(const nlohmann::json& j);
nlohmann::json relation_matrix_to_json(const RelationMatrix& m);
RelationMatrix relation_matrix_from_json(const nlohmann::json& j);

}  // namespace reldyn
