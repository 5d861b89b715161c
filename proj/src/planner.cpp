#include "reldyn/planner.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace reldyn {

void CemConfig::validate() const {
  check(n_samples > 0, "cem n_samples must be positive");
  check(n_elites > 0 && n_elites <= n_samples, "cem needs 0 < n_elites <= n_samples");
  check(n_iterations >= 0, "cem n_iterations must be >= 0");
  check(push_init_std[0] > 0 && push_init_std[1] > 0 &&
            pick_place_init_std[0] > 0 && pick_place_init_std[1] > 0,
        "cem initial stds must be positive");
  check(!skills.empty(), "cem needs at least one skill");
}

namespace {
double clipped_log(double p) {
  p = std::min(1.0 - ad::kProbClip, std::max(ad::kProbClip, p));
  return std::log(p);
}
}  // namespace

namespace {
std::vector<Tensor> relation_probs_on_tape(RdGnnModel& model, Tape& tape,
                                           const LatentVars& vars,
                                           const GraphSpec& spec,
                                           const PlanContext& ctx) {
  if (model.config().readout == RelationReadout::Learned) {
    std::vector<Var> probs = model.classify_relations(tape, vars, spec);
    std::vector<Tensor> out;
    for (const Var& v : probs) out.push_back(tape.value(v));
    return out;
  }
  // analytic readout from the pose head
  PoseVars pose = model.regress_pose(tape, vars, spec);
  std::vector<Vec3> centers;
  for (const Var& v : pose.positions) {
    const Tensor& t = tape.value(v);
    centers.push_back({t.data[0], t.data[1], t.data[2]});
  }
  std::vector<Tensor> out;
  for (const auto& [i, j] : spec.pairs) {
    int oa = spec.object_ids[static_cast<size_t>(i)];
    int ob = spec.object_ids[static_cast<size_t>(j)];
    check(ctx.half_extents.count(oa) && ctx.half_extents.count(ob),
          "plan context lacks half extents for pair (", oa, ",", ob, ")");
    RelationVector v = analytic_pair_relations(
        centers[static_cast<size_t>(i)], ctx.half_extents.at(oa),
        centers[static_cast<size_t>(j)], ctx.half_extents.at(ob), ctx.camera);
    Tensor t = Tensor::zeros({1, kNumRelations});
    for (int r = 0; r < kNumRelations; ++r)
      t.data[static_cast<size_t>(r)] = v[r] ? 1.0 : 0.0;
    out.push_back(std::move(t));
  }
  return out;
}
}  // namespace

std::vector<Tensor> predicted_relation_probs(RdGnnModel& model,
                                             const LatentState& latent,
                                             const PlanContext& ctx) {
  Tape tape;
  LatentVars vars = model.restore(tape, latent);
  return relation_probs_on_tape(model, tape, vars, latent.spec, ctx);
}

namespace {
double goal_log_prob(const std::vector<Tensor>& pair_probs,
                     const GraphSpec& spec, const Goal& goal,
                     std::vector<double>* conjunct_probs = nullptr) {
  double score = 0.0;
  for (const auto& c : goal.conjuncts) {
    int k = spec.pair_index(spec.node_of(c.a), spec.node_of(c.b));
    double p = pair_probs[static_cast<size_t>(k)].data[static_cast<size_t>(c.relation)];
    if (conjunct_probs) conjunct_probs->push_back(p);
    score += clipped_log(c.value ? p : 1.0 - p);
  }
  return score;
}
}  // namespace

double score_action(RdGnnModel& model, const LatentState& latent,
                    const SkillAction& action, const Goal& goal,
                    const PlanContext& ctx) {
  Tape tape;
  LatentVars vars = model.restore(tape, latent);
  LatentVars next = model.dynamics(tape, vars, action, latent.spec);
  return goal_log_prob(relation_probs_on_tape(model, tape, next, latent.spec, ctx),
                       latent.spec, goal);
}

CemResult cem_optimize(RdGnnModel& model, const LatentState& latent,
                       Skill skill, int target, const Goal& goal,
                       const CemConfig& cfg, const PlanContext& ctx, Rng& rng) {
  cfg.validate();
  const double bound = cfg.bounds.axis_bound(skill);
  double mean[2] = {cfg.init_mean[0], cfg.init_mean[1]};
  double stdv[2] = {cfg.init_std(skill)[0], cfg.init_std(skill)[1]};

  auto make_action = [&](double px, double py) {
    SkillAction a;
    a.skill = skill;
    a.target = target;
    a.dx = std::clamp(px, -bound, bound);
    a.dy = std::clamp(py, -bound, bound);
    return a;
  };
  auto score_of = [&](const SkillAction& a) {
    return score_action(model, latent, a, goal, ctx);
  };

  for (int iter = 0; iter < cfg.n_iterations; ++iter) {
    std::vector<SkillAction> samples;
    samples.reserve(static_cast<size_t>(cfg.n_samples));
    for (int s = 0; s < cfg.n_samples; ++s)
      samples.push_back(make_action(rng.normal(mean[0], stdv[0]),
                                    rng.normal(mean[1], stdv[1])));

    std::vector<double> scores(samples.size());
    if (cfg.n_threads <= 1) {
      for (size_t s = 0; s < samples.size(); ++s) scores[s] = score_of(samples[s]);
    } else {
      // each sample is pure; slot-indexed writes keep results identical to
      // the sequential evaluation
      std::vector<std::thread> pool;
      for (int t = 0; t < cfg.n_threads; ++t)
        pool.emplace_back([&, t]() {
          for (size_t s = static_cast<size_t>(t); s < samples.size();
               s += static_cast<size_t>(cfg.n_threads))
            scores[s] = score_of(samples[s]);
        });
      for (auto& th : pool) th.join();
    }

    // elites by (score desc, sample index asc)
    std::vector<size_t> order(samples.size());
    for (size_t s = 0; s < order.size(); ++s) order[s] = s;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    double m[2] = {0, 0}, v[2] = {0, 0};
    for (int e = 0; e < cfg.n_elites; ++e) {
      const SkillAction& a = samples[order[static_cast<size_t>(e)]];
      m[0] += a.dx;
      m[1] += a.dy;
    }
    m[0] /= cfg.n_elites;
    m[1] /= cfg.n_elites;
    for (int e = 0; e < cfg.n_elites; ++e) {
      const SkillAction& a = samples[order[static_cast<size_t>(e)]];
      v[0] += (a.dx - m[0]) * (a.dx - m[0]);
      v[1] += (a.dy - m[1]) * (a.dy - m[1]);
    }
    mean[0] = m[0];
    mean[1] = m[1];
    stdv[0] = std::max(std::sqrt(v[0] / cfg.n_elites), cfg.std_floor);
    stdv[1] = std::max(std::sqrt(v[1] / cfg.n_elites), cfg.std_floor);
  }

  CemResult out;
  out.params[0] = std::clamp(mean[0], -bound, bound);
  out.params[1] = std::clamp(mean[1], -bound, bound);
  out.score = score_of(make_action(out.params[0], out.params[1]));
  out.final_std[0] = stdv[0];
  out.final_std[1] = stdv[1];
  return out;
}

PlanStepResult plan_step(RdGnnModel& model, const LatentState& latent,
                         const Goal& goal, const CemConfig& cfg,
                         const PlanContext& ctx, Rng& rng) {
  cfg.validate();
  validate_goal(goal);

  bool have_best = false;
  CemResult best;
  Skill best_skill = Skill::Push;
  int best_target = -1;

  uint64_t run = 0;
  for (Skill skill : cfg.skills) {
    for (int target : latent.spec.object_ids) {
      Rng run_rng = rng.child(run++);
      CemResult r = cem_optimize(model, latent, skill, target, goal, cfg, ctx,
                                 run_rng);
      if (!have_best || r.score > best.score) {
        have_best = true;
        best = r;
        best_skill = skill;
        best_target = target;
      }
    }
  }
  check(have_best, "plan_step had no (skill, target) candidates");

  PlanStepResult out;
  out.step.action.skill = best_skill;
  out.step.action.target = best_target;
  out.step.action.dx = best.params[0];
  out.step.action.dy = best.params[1];
  out.step.predicted_score = best.score;
  out.step.final_std[0] = best.final_std[0];
  out.step.final_std[1] = best.final_std[1];

  Tape tape;
  LatentVars vars = model.restore(tape, latent);
  LatentVars next = model.dynamics(tape, vars, out.step.action, latent.spec);
  out.next_latent = model.snapshot(tape, next, latent.spec);

  PlanContext probe = ctx;
  goal_log_prob(predicted_relation_probs(model, out.next_latent, probe),
                latent.spec, goal, &out.step.conjunct_probs);
  return out;
}

PlanResult plan_skeleton(RdGnnModel& model, const SegmentedCloud& cloud,
                         const PlanSkeleton& skeleton, const CemConfig& cfg,
                         Rng& rng) {
  check(skeleton.length() >= 1, "plan skeleton must have at least one subgoal");
  GraphSpec spec = GraphSpec::for_cloud(cloud);

  PlanContext ctx;
  ctx.camera = cloud.camera_pose;
  // Half extents estimated from the observed points (used only by the
  // analytic-readout ablations; the observation is all the planner sees).
  for (const auto& [id, pts] : cloud.per_object) {
    Vec3 lo = pts.front(), hi = pts.front();
    for (const Vec3& p : pts) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    ctx.half_extents[id] = (hi - lo) * 0.5;
  }

  Tape tape;
  LatentVars x0 = model.encode(tape, cloud, spec);
  LatentState state = model.snapshot(tape, x0, spec);

  PlanResult result;
  for (int h = 0; h < skeleton.length(); ++h) {
    Rng step_rng = rng.child(static_cast<uint64_t>(h));
    PlanStepResult sr = plan_step(model, state, skeleton.subgoals[static_cast<size_t>(h)],
                                  cfg, ctx, step_rng);
    result.steps.push_back(sr.step);
    state = sr.next_latent;
  }
  return result;
}

PlanResult execute_and_verify(RdGnnModel& model, const Scene& scene,
                              const PlanSkeleton& skeleton, PlanResult result,
                              const CemConfig& cfg, Rng& rng) {
  check(!result.executed, "plan result was already executed");
  check(skeleton.length() == static_cast<int>(result.steps.size()),
        "skeleton length ", skeleton.length(), " vs ", result.steps.size(),
        " planned steps");

  Scene current = scene;
  for (size_t h = 0; h < result.steps.size(); ++h) {
    PlanStep& step = result.steps[h];
    SkillAction action = step.action;
    if (cfg.execution_mode == CemConfig::ExecutionMode::Sample3Sigma) {
      double bound = cfg.bounds.axis_bound(action.skill);
      auto draw = [&](double mean, double sigma) {
        double v = rng.normal(mean, sigma);
        v = std::clamp(v, mean - 3.0 * sigma, mean + 3.0 * sigma);
        return std::clamp(v, -bound, bound);
      };
      action.dx = draw(step.action.dx, step.final_std[0]);
      action.dy = draw(step.action.dy, step.final_std[1]);
    }
    current = apply_action(current, action);

    SegmentedCloud cloud = render_cloud(current);
    RelationMatrix analytic = label_scene(current, current.camera, cloud.off_view);
    step.achieved_analytic = goal_satisfied(analytic, skeleton.subgoals[h]);

    GraphSpec spec = GraphSpec::for_cloud(cloud);
    Tape tape;
    LatentVars latent = model.encode(tape, cloud, spec);
    LatentState ls = model.snapshot(tape, latent, spec);
    PlanContext ctx;
    ctx.camera = current.camera;
    for (const Cuboid& c : current.objects) ctx.half_extents[c.object_id] = c.half_extents;
    std::vector<Tensor> probs = predicted_relation_probs(model, ls, ctx);
    RelationMatrix learned;
    for (int k = 0; k < spec.n_pairs(); ++k) {
      auto [i, j] = spec.pairs[static_cast<size_t>(k)];
      learned.at(spec.object_ids[static_cast<size_t>(i)],
                 spec.object_ids[static_cast<size_t>(j)]) =
          threshold_probs(probs[static_cast<size_t>(k)]);
    }
    step.achieved_learned = goal_satisfied(learned, skeleton.subgoals[h]);
  }
  result.executed = true;
  result.final_scene = current;
  return result;
}

nlohmann::json plan_result_to_json(const PlanResult& r,
                                   const PlanSkeleton& skeleton) {
  nlohmann::json steps = nlohmann::json::array();
  for (size_t h = 0; h < r.steps.size(); ++h) {
    const PlanStep& s = r.steps[h];
    steps.push_back({{"action", action_to_json(s.action)},
                     {"predicted_score", s.predicted_score},
                     {"conjunct_probs", s.conjunct_probs},
                     {"subgoal", goal_to_json(skeleton.subgoals[h])},
                     {"achieved_analytic", s.achieved_analytic},
                     {"achieved_learned", s.achieved_learned}});
  }
  nlohmann::json j = {{"steps", steps}, {"executed", r.executed}};
  if (r.executed) j["final_scene"] = scene_to_json(r.final_scene);
  return j;
}

PlanSkeleton skeleton_from_json(const nlohmann::json& j) {
  PlanSkeleton s;
  const nlohmann::json& list = j.is_array() ? j : j.at("subgoals");
  for (const auto& gj : list) s.subgoals.push_back(goal_from_json(gj));
  check(!s.subgoals.empty(), "skeleton has no subgoals");
  return s;
}

nlohmann::json skeleton_to_json(const PlanSkeleton& s) {
  nlohmann::json list = nlohmann::json::array();
  for (const Goal& g : s.subgoals) list.push_back(goal_to_json(g));
  return {{"subgoals", list}};
}

}  // namespace reldyn
