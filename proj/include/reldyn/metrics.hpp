#pragma once

#include <array>
#include <map>

#include "reldyn/model.hpp"
#include "reldyn/relations.hpp"

namespace reldyn {

inline constexpr double kDecisionThreshold = 0.5;

struct F1Score {
  long tp = 0, fp = 0, fn = 0;
  double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / (tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / (tp + fn); }
  double f1() const {
    double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

// Per-relation confusion counts for one path (detect or predict).
struct ConfusionCounts {
  std::array<F1Score, kNumRelations> per_relation;

  void add(int relation, bool predicted, bool label) {
    F1Score& s = per_relation[static_cast<size_t>(relation)];
    if (predicted && label) s.tp++;
    if (predicted && !label) s.fp++;
    if (!predicted && label) s.fn++;
  }
  void add_vector(const RelationVector& predicted, const RelationVector& label) {
    for (int r = 0; r < kNumRelations; ++r) add(r, predicted[r], label[r]);
  }
  // Unweighted mean of the 7 per-relation F1 scores.
  double macro_f1() const {
    double s = 0.0;
    for (const F1Score& f : per_relation) s += f.f1();
    return s / kNumRelations;
  }
  double micro_f1() const {
    F1Score all;
    for (const F1Score& f : per_relation) {
      all.tp += f.tp;
      all.fp += f.fp;
      all.fn += f.fn;
    }
    return all.f1();
  }
};

struct F1Report {
  ConfusionCounts detect;
  ConfusionCounts predict;
  nlohmann::json to_json() const;
};

RelationVector threshold_probs(const Tensor& probs);

// Analytic relation readout for the pose-supervised ablations: labeler rules
// on predicted centroids with the objects' true half extents.
RelationVector analytic_pair_relations(const Vec3& center_a, const Vec3& half_a,
                                       const Vec3& center_b, const Vec3& half_b,
                                       const Camera& camera);

}  // namespace reldyn
