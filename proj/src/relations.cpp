#include "reldyn/relations.hpp"

#include <algorithm>

namespace reldyn {

const std::array<std::string, kNumRelations>& relation_names() {
  static const std::array<std::string, kNumRelations> names = {
      "left", "right", "behind", "in_front", "above", "below", "in_contact"};
  return names;
}

int relation_index(const std::string& name) {
  const auto& names = relation_names();
  for (int i = 0; i < kNumRelations; ++i)
    if (names[static_cast<size_t>(i)] == name) return i;
  fail("unknown relation name \"", name, "\"");
}

const RelationVector& RelationMatrix::at(int i, int j) const {
  auto it = pairs.find({i, j});
  check(it != pairs.end(), "relation matrix has no pair (", i, ",", j, ")");
  return it->second;
}

void validate_goal(const Goal& goal) {
  for (size_t i = 0; i < goal.conjuncts.size(); ++i) {
    const auto& c = goal.conjuncts[i];
    check(c.a != c.b, "goal conjunct relates object ", c.a, " to itself");
    check(c.relation >= 0 && c.relation < kNumRelations,
          "goal conjunct relation index ", c.relation, " out of range");
    for (size_t j = i + 1; j < goal.conjuncts.size(); ++j) {
      const auto& d = goal.conjuncts[j];
      if (c.a == d.a && c.b == d.b && c.relation == d.relation)
        check(c.value == d.value, "goal contradicts itself on pair (", c.a,
              ",", c.b, ") relation ",
              relation_names()[static_cast<size_t>(c.relation)]);
    }
  }
  // mutually exclusive positives on the same ordered pair
  auto positive = [&](int a, int b, int r) {
    return std::any_of(goal.conjuncts.begin(), goal.conjuncts.end(),
                       [&](const Goal::Conjunct& c) {
                         return c.a == a && c.b == b && c.relation == r &&
                                c.value;
                       });
  };
  static const std::pair<int, int> exclusive[] = {
      {kLeft, kRight}, {kBehind, kInFront}, {kAbove, kBelow}};
  for (const auto& c : goal.conjuncts) {
    if (!c.value) continue;
    for (auto [r1, r2] : exclusive) {
      int other = (c.relation == r1) ? r2 : (c.relation == r2 ? r1 : -1);
      if (other >= 0 && positive(c.a, c.b, other))
        fail("goal requires mutually exclusive positives ",
             relation_names()[static_cast<size_t>(c.relation)], " and ",
             relation_names()[static_cast<size_t>(other)], " on pair (", c.a,
             ",", c.b, ")");
    }
  }
}

RelationVector label_pair(const Cuboid& a, const Cuboid& b,
                          const Camera& camera) {
  check(a.object_id != b.object_id, "label_pair on identical object id ",
        a.object_id);
  Aabb ca = camera_frame_aabb(a, camera);
  Aabb cb = camera_frame_aabb(b, camera);
  const double m = kRelationMargin;

  RelationVector r;
  double gx = interval_gap(ca.lo.x, ca.hi.x, cb.lo.x, cb.hi.x);
  double gy = interval_gap(ca.lo.y, ca.hi.y, cb.lo.y, cb.hi.y);
  double gz = interval_gap(ca.lo.z, ca.hi.z, cb.lo.z, cb.hi.z);
  r[kInContact] = gx <= m && gy <= m && gz <= m;

  bool footprint = footprint_overlap_area(ca, cb) > 0.0;
  r[kAbove] = ca.lo.z >= cb.hi.z - m && footprint;
  r[kBelow] = ca.hi.z <= cb.lo.z + m && footprint;

  r[kLeft] = ca.hi.x <= cb.lo.x + m;
  r[kRight] = ca.lo.x >= cb.hi.x - m;
  r[kBehind] = ca.lo.y >= cb.hi.y - m;
  r[kInFront] = ca.hi.y <= cb.lo.y + m;
  return r;
}

RelationMatrix label_scene(const Scene& scene, const Camera& camera,
                           const std::set<int>& off_view) {
  RelationMatrix m;
  for (const Cuboid& a : scene.objects) {
    for (const Cuboid& b : scene.objects) {
      if (a.object_id == b.object_id) continue;
      bool off = off_view.count(a.object_id) || off_view.count(b.object_id);
      m.at(a.object_id, b.object_id) =
          off ? RelationVector{} : label_pair(a, b, camera);
    }
  }
  return m;
}

bool goal_satisfied(const RelationMatrix& m, const Goal& g) {
  for (const auto& c : g.conjuncts) {
    const RelationVector& v = m.at(c.a, c.b);
    if (v[c.relation] != c.value) return false;
  }
  return true;
}

nlohmann::json goal_to_json(const Goal& g) {
  nlohmann::json j;
  j["conjuncts"] = nlohmann::json::array();
  for (const auto& c : g.conjuncts)
    j["conjuncts"].push_back(
        {{"pair", {c.a, c.b}},
         {"rel", relation_names()[static_cast<size_t>(c.relation)]},
         {"value", c.value}});
  return j;
}

Goal goal_from_json(const nlohmann::json& j) {
  Goal g;
  for (const auto& cj : j.at("conjuncts")) {
    Goal::Conjunct c;
    c.a = cj.at("pair")[0].get<int>();
    c.b = cj.at("pair")[1].get<int>();
    c.relation = relation_index(cj.at("rel").get<std::string>());
    c.value = cj.at("value").get<bool>();
    g.conjuncts.push_back(c);
  }
  validate_goal(g);
  return g;
}

nlohmann::json relation_matrix_to_json(const RelationMatrix& m) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [pair, v] : m.pairs) {
    nlohmann::json bits = nlohmann::json::array();
    for (int r = 0; r < kNumRelations; ++r) bits.push_back(v[r] ? 1 : 0);
    j.push_back({{"pair", {pair.first, pair.second}}, {"rels", bits}});
  }
  return j;
}

RelationMatrix relation_matrix_from_json(const nlohmann::json& j) {
  RelationMatrix m;
  for (const auto& e : j) {
    int a = e.at("pair")[0].get<int>();
    int b = e.at("pair")[1].get<int>();
    RelationVector v;
    const auto& bits = e.at("rels");
    check(bits.size() == kNumRelations, "relation vector needs ",
          kNumRelations, " bits, got ", bits.size());
    for (int r = 0; r < kNumRelations; ++r) v[r] = bits[static_cast<size_t>(r)].get<int>() != 0;
    m.at(a, b) = v;
  }
  return m;
}

}  // namespace reldyn
