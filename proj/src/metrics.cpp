#include "reldyn/metrics.hpp"

namespace reldyn {

namespace {
nlohmann::json counts_json(const ConfusionCounts& c) {
  nlohmann::json per = nlohmann::json::object();
  for (int r = 0; r < kNumRelations; ++r) {
    const F1Score& f = c.per_relation[static_cast<size_t>(r)];
    per[relation_names()[static_cast<size_t>(r)]] = {
        {"precision", f.precision()}, {"recall", f.recall()}, {"f1", f.f1()},
        {"tp", f.tp},                 {"fp", f.fp},           {"fn", f.fn}};
  }
  return {{"per_relation", per},
          {"macro_f1", c.macro_f1()},
          {"micro_f1", c.micro_f1()}};
}
}  // namespace

nlohmann::json F1Report::to_json() const {
  return {{"detect", counts_json(detect)}, {"predict", counts_json(predict)}};
}

RelationVector threshold_probs(const Tensor& probs) {
  check(probs.size() == kNumRelations, "expected ", kNumRelations,
        " probabilities, got ", probs.size());
  RelationVector v;
  for (int r = 0; r < kNumRelations; ++r)
    v[r] = probs.data[static_cast<size_t>(r)] >= kDecisionThreshold;
  return v;
}

RelationVector analytic_pair_relations(const Vec3& center_a, const Vec3& half_a,
                                       const Vec3& center_b, const Vec3& half_b,
                                       const Camera& camera) {
  Cuboid a, b;
  a.object_id = 0;
  a.center = center_a;
  a.half_extents = half_a;
  b.object_id = 1;
  b.center = center_b;
  b.half_extents = half_b;
  return label_pair(a, b, camera);
}

}  // namespace reldyn
