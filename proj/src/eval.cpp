#include "reldyn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace reldyn {

F1Report f1_eval(const std::vector<Episode>& corpus,
                 const std::vector<int>& indices, RdGnnModel& model) {
  F1Report report;
  ForwardOptions opts;
  opts.rel = opts.dyn = opts.rel_prime = opts.pose = false;
  opts.collect_metrics = true;
  for (int idx : indices) {
    check(idx >= 0 && idx < static_cast<int>(corpus.size()),
          "f1_eval index ", idx, " out of range");
    const Episode& ep = corpus[static_cast<size_t>(idx)];
    Tape tape;
    GraphSpec spec = GraphSpec::for_cloud(ep.steps.front().cloud);
    EpisodeLosses l = episode_forward(tape, model, ep, spec, opts);
    accumulate_episode_metrics(report.detect, report.predict, ep, l, model);
  }
  return report;
}

namespace {
struct Candidate {
  int a, b, relation;
  bool value;
  bool differs;
};

Goal goal_from_transition(const RelationMatrix& before,
                          const RelationMatrix& after, int n_relations,
                          Rng& rng, bool* trivial) {
  std::vector<Candidate> differing, same;
  for (const auto& [pair, v] : after.pairs) {
    const RelationVector* prev =
        before.has(pair.first, pair.second) ? &before.at(pair.first, pair.second)
                                            : nullptr;
    for (int r = 0; r < kNumRelations; ++r) {
      Candidate c{pair.first, pair.second, r, v[r], prev && (*prev)[r] != v[r]};
      (c.differs ? differing : same).push_back(c);
    }
  }
  rng.shuffle(differing);
  rng.shuffle(same);

  Goal g;
  bool fell_back = false;
  for (int k = 0; k < n_relations; ++k) {
    if (k < static_cast<int>(differing.size())) {
      const Candidate& c = differing[static_cast<size_t>(k)];
      g.conjuncts.push_back({c.a, c.b, c.relation, c.value});
    } else {
      size_t j = static_cast<size_t>(k) - differing.size();
      if (j >= same.size()) break;
      const Candidate& c = same[j];
      g.conjuncts.push_back({c.a, c.b, c.relation, c.value});
      fell_back = true;
    }
  }
  if (trivial) *trivial = fell_back || g.conjuncts.empty();
  validate_goal(g);
  return g;
}
}  // namespace

Goal goal_sampler(const Scene& scene, int n_relations, Rng& rng,
                  const DataGenConfig& action_cfg, int n_actions,
                  bool* trivial) {
  check(scene.objects.size() >= 2, "goal sampling needs at least 2 objects");
  check(n_relations >= 0, "n_relations must be non-negative");
  SegmentedCloud cloud0 = render_cloud(scene);
  RelationMatrix before = label_scene(scene, scene.camera, cloud0.off_view);

  Scene current = scene;
  for (int k = 0; k < n_actions; ++k) {
    SegmentedCloud cloud = k == 0 ? cloud0 : render_cloud(current);
    SkillAction a = sample_action(rng, current, cloud.off_view, action_cfg);
    current = apply_action(current, a);
  }
  SegmentedCloud cloud1 = render_cloud(current);
  RelationMatrix after = label_scene(current, current.camera, cloud1.off_view);
  return goal_from_transition(before, after, n_relations, rng, trivial);
}

PlanSkeleton sample_skeleton(const Scene& scene, int n_steps, int n_relations,
                             Rng& rng, const DataGenConfig& action_cfg,
                             bool* trivial) {
  check(n_steps >= 1, "skeleton needs at least one step");
  PlanSkeleton skeleton;
  bool any_trivial = false;
  Scene current = scene;
  for (int h = 0; h < n_steps; ++h) {
    SegmentedCloud cloud = render_cloud(current);
    RelationMatrix before = label_scene(current, current.camera, cloud.off_view);
    SkillAction a = sample_action(rng, current, cloud.off_view, action_cfg);
    Scene next = apply_action(current, a);
    SegmentedCloud next_cloud = render_cloud(next);
    RelationMatrix after = label_scene(next, next.camera, next_cloud.off_view);
    bool t = false;
    skeleton.subgoals.push_back(
        goal_from_transition(before, after, n_relations, rng, &t));
    any_trivial = any_trivial || t;
    current = next;
  }
  if (trivial) *trivial = any_trivial;
  return skeleton;
}

void SweepSpec::validate() const {
  check(axis == "n_objects" || axis == "n_goal_relations" || axis == "n_steps",
        "unknown sweep axis \"", axis, "\"");
  check(!values.empty(), "sweep needs at least one axis value");
  check(trials > 0, "sweep trials must be positive");
  check(!skills.empty(), "sweep needs at least one skill");
}

double SweepResult::success_rate(int value) const {
  long n = 0, s = 0;
  for (const TrialRow& r : rows)
    if (r.value == value) {
      n += 1;
      s += r.success ? 1 : 0;
    }
  return n == 0 ? 0.0 : static_cast<double>(s) / static_cast<double>(n);
}

std::string SweepResult::to_csv() const {
  std::ostringstream os;
  os << "axis,value,trial,seed,n_steps,subgoals_achieved,success,trivial_goal\n";
  for (const TrialRow& r : rows)
    os << spec.axis << "," << r.value << "," << r.trial << "," << r.seed << ","
       << r.n_steps << "," << r.subgoals_achieved << "," << (r.success ? 1 : 0)
       << "," << (r.trivial_goal ? 1 : 0) << "\n";
  return os.str();
}

SweepResult run_sweep(const SweepSpec& spec, RdGnnModel& model,
                      const CemConfig& cem) {
  spec.validate();
  SweepResult result;
  result.spec = spec;

  DataGenConfig action_cfg;
  action_cfg.bounds = cem.bounds;
  bool has_push = std::count(spec.skills.begin(), spec.skills.end(), Skill::Push) > 0;
  bool has_pick =
      std::count(spec.skills.begin(), spec.skills.end(), Skill::PickPlace) > 0;
  action_cfg.push_fraction = has_push && has_pick ? 0.5 : (has_push ? 1.0 : 0.0);

  CemConfig trial_cem = cem;
  trial_cem.skills = spec.skills;

  result.rows.resize(spec.values.size() * static_cast<size_t>(spec.trials));
  auto run_trial = [&](size_t vi, int trial) {
    int value = spec.values[vi];
    int n_objects = spec.axis == "n_objects" ? value : spec.default_objects;
    int n_relations =
        spec.axis == "n_goal_relations" ? value : spec.default_relations;
    int n_steps = spec.axis == "n_steps" ? value : spec.default_steps;

    // scene depends only on (seed, trial): matched scenes across values
    uint64_t trial_seed = derive_seed(spec.seed, static_cast<uint64_t>(trial));
    Rng scene_rng = Rng(trial_seed).child(0);
    Rng goal_rng = Rng(trial_seed).child(1 + static_cast<uint64_t>(vi));
    Rng plan_rng = Rng(trial_seed).child(1000 + static_cast<uint64_t>(vi));

    TrialRow row;
    row.value = value;
    row.trial = trial;
    row.seed = trial_seed;
    row.n_steps = n_steps;

    Scene scene = sample_scene(scene_rng, n_objects, 1 + scene_rng.uniform_int(2));
    PlanSkeleton skeleton = sample_skeleton(scene, n_steps, n_relations,
                                            goal_rng, action_cfg,
                                            &row.trivial_goal);
    SegmentedCloud cloud = render_cloud(scene);
    PlanResult plan = plan_skeleton(model, cloud, skeleton, trial_cem, plan_rng);
    plan = execute_and_verify(model, scene, skeleton, std::move(plan),
                              trial_cem, plan_rng);
    row.subgoals_achieved = 0;
    for (const PlanStep& s : plan.steps)
      row.subgoals_achieved += s.achieved_analytic ? 1 : 0;
    row.success = row.subgoals_achieved == static_cast<int>(plan.steps.size());
    result.rows[vi * static_cast<size_t>(spec.trials) +
                static_cast<size_t>(trial)] = row;
  };

  if (spec.n_threads <= 1) {
    for (size_t vi = 0; vi < spec.values.size(); ++vi)
      for (int trial = 0; trial < spec.trials; ++trial) run_trial(vi, trial);
  } else {
    std::vector<std::thread> pool;
    long total = static_cast<long>(spec.values.size()) * spec.trials;
    for (int t = 0; t < spec.n_threads; ++t)
      pool.emplace_back([&, t]() {
        for (long k = t; k < total; k += spec.n_threads)
          run_trial(static_cast<size_t>(k) / static_cast<size_t>(spec.trials),
                    static_cast<int>(k % spec.trials));
      });
    for (auto& th : pool) th.join();
  }
  return result;
}

namespace {
std::string svg_plot(const std::string& axis,
                     const std::vector<std::pair<int, double>>& points) {
  const int W = 640, H = 420, ML = 70, MR = 30, MT = 30, MB = 60;
  double xmin = points.front().first, xmax = points.back().first;
  if (xmax == xmin) xmax = xmin + 1;
  auto px = [&](double v) {
    return ML + (v - xmin) / (xmax - xmin) * (W - ML - MR);
  };
  auto py = [&](double v) { return H - MB - v * (H - MT - MB); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR
     << "\" y2=\"" << H - MB << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML
     << "\" y2=\"" << H - MB << "\" stroke=\"black\"/>\n";
  for (int g = 0; g <= 4; ++g) {
    double v = g / 4.0;
    os << "<text x=\"" << ML - 10 << "\" y=\"" << py(v) + 4
       << "\" text-anchor=\"end\" font-size=\"12\">" << v << "</text>\n";
    os << "<line x1=\"" << ML - 4 << "\" y1=\"" << py(v) << "\" x2=\"" << ML
       << "\" y2=\"" << py(v) << "\" stroke=\"black\"/>\n";
  }
  os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (const auto& [x, y] : points) os << px(x) << "," << py(y) << " ";
  os << "\"/>\n";
  for (const auto& [x, y] : points) {
    os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y)
       << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    os << "<text x=\"" << px(x) << "\" y=\"" << H - MB + 20
       << "\" text-anchor=\"middle\" font-size=\"12\">" << x << "</text>\n";
  }
  os << "<text x=\"" << (ML + W - MR) / 2 << "\" y=\"" << H - 15
     << "\" text-anchor=\"middle\" font-size=\"14\">" << axis << "</text>\n";
  os << "<text x=\"18\" y=\"" << (MT + H - MB) / 2
     << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
     << (MT + H - MB) / 2 << ")\">success rate</text>\n";
  os << "</svg>\n";
  return os.str();
}
}  // namespace

std::string sweep_svg(const SweepResult& result) {
  std::vector<std::pair<int, double>> points;
  for (int v : result.spec.values) points.emplace_back(v, result.success_rate(v));
  std::sort(points.begin(), points.end());
  return svg_plot(result.spec.axis, points);
}

std::string sweep_csv_to_svg(const std::string& csv_text) {
  std::istringstream is(csv_text);
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "empty sweep CSV");
  std::string axis = "value";
  std::map<int, std::pair<long, long>> tally;  // value -> (successes, trials)
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ',')) cols.push_back(col);
    check(cols.size() >= 8, "bad sweep CSV row: ", line);
    axis = cols[0];
    int value = std::stoi(cols[1]);
    tally[value].second += 1;
    tally[value].first += std::stoi(cols[6]);
  }
  check(!tally.empty(), "sweep CSV has no data rows");
  std::vector<std::pair<int, double>> points;
  for (const auto& [v, t] : tally)
    points.emplace_back(v, static_cast<double>(t.first) / t.second);
  return svg_plot(axis, points);
}

}  // namespace reldyn
