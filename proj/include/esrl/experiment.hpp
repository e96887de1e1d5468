#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "esrl/checkpoint.hpp"
#include "esrl/config.hpp"
#include "esrl/runner.hpp"
#include "esrl/stats.hpp"
#include "esrl/train.hpp"

namespace esrl {

inline constexpr std::uint64_t kCliEvalTag = 0x0d;

// Evaluates a single checkpoint file or every member of a run directory;
// run-directory reports name the member with the best mean distance.
inline json eval_checkpoint(const std::string& path, const std::string& env_id,
                            int episodes, std::uint64_t seed, double rtg_target,
                            const std::string& traj_dir = "") {
  if (episodes < 1) throw ValidationError("episodes must be >= 1");
  std::vector<std::pair<int, Checkpoint>> members;
  double rtg = rtg_target;
  std::string env_name = env_id;
  if (fs::is_directory(path)) {
    const RunPaths rp{path};
    const RunConfig cfg = RunConfig::load(rp.config_file(), nullptr, false);
    if (env_name.empty()) env_name = cfg.env;
    if (std::isnan(rtg)) rtg = cfg.rtg_target;
    for (int m = 0;; ++m) {
      const std::string f = rp.member_file(m);
      if (!fs::exists(f)) break;
      members.emplace_back(m, Checkpoint::load(f));
    }
    if (members.empty()) throw ValidationError("no member checkpoints in " + path);
  } else {
    if (env_name.empty()) throw ValidationError("--env is required for a bare checkpoint");
    if (std::isnan(rtg)) rtg = 0.0;
    members.emplace_back(0, Checkpoint::load(path));
  }

  const EnvSpec env = EnvSpec::by_id(env_name);
  json report;
  report["env"] = env_name;
  report["episodes"] = episodes;
  report["members"] = json::array();
  int best = -1;
  double best_dist = -1.0;
  for (auto& [idx, ck] : members) {
    if (ck.spec.obs_dim != EnvSpec::kObsDim || ck.spec.act_dim != EnvSpec::kActDim)
      throw ValidationError("checkpoint dims do not match the environment");
    PolicyEvaluator ev(ck.spec, env, ck.normalizer, rtg);
    std::vector<std::uint64_t> seeds;
    for (int e = 0; e < episodes; ++e)
      seeds.push_back(mix_key({seed, kCliEvalTag, static_cast<std::uint64_t>(idx),
                               static_cast<std::uint64_t>(e)}));
    EvalSummary s;
    if (!traj_dir.empty()) {
      fs::create_directories(traj_dir);
      for (int e = 0; e < episodes; ++e) {
        std::ofstream traj(traj_dir + "/member" + std::to_string(idx) + "_ep" +
                           std::to_string(e) + ".txt");
        const auto r = ev.run_episode(ck.theta, seeds[e], &traj);
        s.episodes.push_back(r);
        s.mean_return += r.ret / episodes;
        s.mean_steps += static_cast<double>(r.steps) / episodes;
        s.mean_distance += r.distance_traveled / episodes;
        s.mean_bc.x += r.bc.x / episodes;
        s.mean_bc.y += r.bc.y / episodes;
      }
    } else {
      s = ev.evaluate(ck.theta, seeds);
    }
    report["members"].push_back(json{{"member", idx},
                                     {"pretrained", ck.pretrained},
                                     {"mean_return", s.mean_return},
                                     {"mean_steps", s.mean_steps},
                                     {"mean_distance", s.mean_distance},
                                     {"bc_x", s.mean_bc.x},
                                     {"bc_y", s.mean_bc.y}});
    if (s.mean_distance > best_dist) {
      best_dist = s.mean_distance;
      best = idx;
    }
  }
  report["best_member"] = best;
  report["best_mean_distance"] = best_dist;
  return report;
}

// ---- archive transfer ----

inline void archive_export(const std::string& run_dir, const std::string& out_path) {
  const RunPaths rp{run_dir};
  if (!fs::exists(rp.archive_file()))
    throw ValidationError("run has no behavior archive: " + run_dir);
  Archive::load(rp.archive_file()).save(out_path);
}

// Stages an archive file so a future run in `run_dir` starts from it.
inline void archive_import(const std::string& src_path, const std::string& run_dir) {
  const Archive a = Archive::load(src_path);
  fs::create_directories(run_dir);
  const RunPaths rp{run_dir};
  if (fs::exists(rp.run_state()))
    throw ValidationError("run directory already holds a run: " + run_dir);
  a.save(rp.imported_archive());
}

// ---- figure-data export ----

// Emits the three figure families: per-iteration fitness quartiles across
// runs, per-iteration population-runtime mean with a 97.5% percentile
// interval (pooled across runs), and the final best-member distances.
inline void plot_export(const std::vector<std::string>& run_dirs,
                        const std::string& out_dir) {
  if (run_dirs.empty()) throw ValidationError("plot-export needs at least one run");
  fs::create_directories(out_dir);

  std::vector<std::vector<IterationRecord>> logs;
  std::size_t common = std::numeric_limits<std::size_t>::max();
  for (const auto& dir : run_dirs) {
    logs.push_back(load_runlog(RunPaths{dir}.runlog()));
    if (logs.back().empty()) throw ValidationError("empty run log in " + dir);
    common = std::min(common, logs.back().size());
  }

  {
    std::ofstream out(out_dir + "/fitness_quartiles.csv");
    out << "iteration,q25,median,q75\n";
    for (std::size_t i = 0; i < common; ++i) {
      std::vector<double> fits;
      for (const auto& lg : logs) fits.push_back(lg[i].eval_fitness);
      out << logs[0][i].iteration << "," << format_double(quantile(fits, 0.25)) << ","
          << format_double(median(fits)) << "," << format_double(quantile(fits, 0.75))
          << "\n";
    }
  }

  {
    // pool every population step count of the iteration across runs
    std::map<std::int64_t, std::vector<double>> pooled;
    for (const auto& dir : run_dirs) {
      std::ifstream steps(RunPaths{dir}.steps_file());
      if (!steps) throw ValidationError("missing steps file in " + dir);
      std::string line;
      while (std::getline(steps, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::int64_t iter;
        ls >> iter;
        double v;
        while (ls >> v) pooled[iter].push_back(v);
      }
    }
    std::ofstream out(out_dir + "/steps_interval.csv");
    out << "iteration,mean,p_lo,p_hi\n";
    for (std::size_t i = 0; i < common; ++i) {
      const auto it = pooled.find(logs[0][i].iteration);
      if (it == pooled.end() || it->second.empty()) continue;
      const Interval iv = percentile_interval(it->second, 0.975);
      out << it->first << "," << format_double(mean_of(it->second)) << ","
          << format_double(iv.lo) << "," << format_double(iv.hi) << "\n";
    }
  }

  {
    std::ofstream out(out_dir + "/final_distance.csv");
    out << "run,best_member,mean_distance\n";
    for (const auto& dir : run_dirs) {
      const std::string fm = RunPaths{dir}.final_members();
      if (!fs::exists(fm))
        throw ValidationError("run has no final member evaluation: " + dir);
      std::ifstream in(fm);
      std::string line;
      int best = -1;
      double best_dist = -1;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const double d = j.at("mean_distance").get<double>();
        if (d > best_dist) {
          best_dist = d;
          best = j.at("member").get<int>();
        }
      }
      out << fs::path(dir).filename().string() << "," << best << ","
          << format_double(best_dist) << "\n";
    }
  }
}

}  // namespace esrl
