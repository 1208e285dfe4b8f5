#pragma once

#include <atomic>
#include <thread>

#include "rmpflow/simlab.hpp"

namespace rmpflow {

inline SuiteSummary run_suite(const SuiteSpec& spec) {
  SuiteSummary out;
  Rng rng(spec.seed);
  for (const auto& scene : spec.scenes)
    out.targets.push_back(
        sample_targets(scene, spec.targets_per_scene, rng, spec.target_lo, spec.target_hi));

  struct Job {
    int method_index, scene_index, target_index;
  };
  std::vector<Job> jobs;
  for (int m = 0; m < static_cast<int>(spec.methods.size()); ++m)
    for (int s = 0; s < static_cast<int>(spec.scenes.size()); ++s)
      for (int t = 0; t < spec.targets_per_scene; ++t) jobs.push_back({m, s, t});

  std::vector<TrialRecord> records(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      Scene scene = spec.scenes[job.scene_index];
      scene.goal = out.targets[job.scene_index][job.target_index];
      TrialRecord rec;
      rec.scene_index = job.scene_index;
      rec.target_index = job.target_index;
      rec.method = spec.methods[job.method_index].label();
      rec.target = scene.goal;
      try {
        RmpTree tree = build_method_tree(scene, spec, spec.methods[job.method_index]);
        auto [traj, metrics] =
            run_trial(tree, scene.rest_posture, Vector::Zero(scene.arm.dof()),
                      spec.integrator, arm_trial_context(scene));
        rec.metrics = std::move(metrics);
        rec.trajectory = std::move(traj);
      } catch (const std::exception& e) {
        rec.metrics.failed = true;
        rec.metrics.failure_reason = e.what();
      }
      records[i] = std::move(rec);
    }
  };

  const int nworkers = std::max(1, std::min<int>(spec.jobs, static_cast<int>(jobs.size())));
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nworkers);
    for (int i = 0; i < nworkers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const auto& method : spec.methods) {
    const std::string label = method.label();
    MethodSummary summary;
    std::vector<double> times, lengths, dists, intensities;
    for (const auto& rec : records) {
      if (rec.method != label) continue;
      ++summary.trials;
      if (rec.metrics.failed) {
        ++summary.failures;
        continue;
      }
      times.push_back(rec.metrics.time_to_goal);
      lengths.push_back(rec.metrics.cspace_path_length);
      dists.push_back(rec.metrics.min_goal_distance);
      if (rec.metrics.collided) intensities.push_back(rec.metrics.collision_intensity);
    }
    summary.time_to_goal = metric_stat(times);
    summary.path_length = metric_stat(lengths);
    summary.goal_distance = metric_stat(dists);
    summary.collision_intensity = metric_stat(intensities);
    const int effective = summary.trials - summary.failures;
    summary.collided_fraction =
        effective > 0 ? static_cast<double>(intensities.size()) / effective : 0.0;
    out.by_method.emplace_back(label, summary);
  }
  out.records = std::move(records);
  return out;
}

}  // namespace rmpflow
