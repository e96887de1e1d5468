#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "esrl/checkpoint.hpp"
#include "esrl/config.hpp"
#include "esrl/coordinator.hpp"
#include "esrl/runner.hpp"
#include "esrl/stats.hpp"

namespace esrl {

namespace fs = std::filesystem;

struct RunPaths {
  std::string dir;
  std::string config_file() const { return dir + "/config.txt"; }
  std::string runlog() const { return dir + "/runlog.jsonl"; }
  std::string steps_file() const { return dir + "/steps.txt"; }
  std::string state_dir() const { return dir + "/state"; }
  std::string run_state() const { return state_dir() + "/run_state.txt"; }
  std::string archive_file() const { return state_dir() + "/archive.txt"; }
  std::string member_file(int i) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "/member_%02d.ckpt", i);
    return state_dir() + buf;
  }
  std::string imported_archive() const { return dir + "/imported_archive.txt"; }
  std::string final_members() const { return dir + "/final_members.jsonl"; }
};

struct IterationRecord {
  std::int64_t iteration = 0;
  int member = 0;
  double pop_fitness_mean = 0;
  double pop_steps_mean = 0;
  double pop_steps_p025 = 0, pop_steps_p975 = 0;
  double eval_fitness = 0;
  double eval_steps = 0;
  double eval_distance = 0;
  double eval_bc_x = 0, eval_bc_y = 0;
  double novelty_of_mean = 0;
  std::size_t archive_size = 0;
  int dropped = 0;
  double wall_ms = 0;

  json to_json() const {
    return json{{"iter", iteration},
                {"member", member},
                {"pop_fit_mean", pop_fitness_mean},
                {"pop_steps_mean", pop_steps_mean},
                {"pop_steps_p025", pop_steps_p025},
                {"pop_steps_p975", pop_steps_p975},
                {"eval_fit", eval_fitness},
                {"eval_steps", eval_steps},
                {"eval_dist", eval_distance},
                {"eval_bc_x", eval_bc_x},
                {"eval_bc_y", eval_bc_y},
                {"novelty", novelty_of_mean},
                {"archive", archive_size},
                {"dropped", dropped},
                {"wall_ms", wall_ms}};
  }

  static IterationRecord from_json(const json& j) {
    IterationRecord r;
    r.iteration = j.at("iter").get<std::int64_t>();
    r.member = j.at("member").get<int>();
    r.pop_fitness_mean = j.at("pop_fit_mean").get<double>();
    r.pop_steps_mean = j.at("pop_steps_mean").get<double>();
    r.pop_steps_p025 = j.at("pop_steps_p025").get<double>();
    r.pop_steps_p975 = j.at("pop_steps_p975").get<double>();
    r.eval_fitness = j.at("eval_fit").get<double>();
    r.eval_steps = j.at("eval_steps").get<double>();
    r.eval_distance = j.at("eval_dist").get<double>();
    r.eval_bc_x = j.value("eval_bc_x", 0.0);
    r.eval_bc_y = j.value("eval_bc_y", 0.0);
    r.novelty_of_mean = j.at("novelty").get<double>();
    r.archive_size = j.at("archive").get<std::size_t>();
    r.dropped = j.value("dropped", 0);
    r.wall_ms = j.at("wall_ms").get<double>();
    return r;
  }
};

struct MemberState {
  EsState es;
  BehaviorCharacteristic bc;
  double novelty = 0.0;
};

// Owns one run: metapopulation, archive, logs, checkpoints. All randomness is
// keyed by (seed, iteration, purpose), so a resumed run and an uninterrupted
// one produce identical bytes.
class Trainer {
 public:
  Trainer(RunConfig cfg, std::string run_dir)
      : cfg_(std::move(cfg)), paths_{std::move(run_dir)} {
    cfg_.validate();
    spec_ = cfg_.policy_spec();
    env_ = cfg_.env_spec();
    run_id_ = fs::path(paths_.dir).filename().string();
    if (run_id_.empty()) run_id_ = "run";
  }

  const RunConfig& config() const { return cfg_; }
  const RunPaths& paths() const { return paths_; }
  const std::vector<MemberState>& members() const { return members_; }
  const Archive& archive() const { return archive_; }
  std::int64_t completed_iterations() const { return iteration_; }
  bool uses_novelty() const { return cfg_.algorithm != Algorithm::Es; }

  std::shared_ptr<const NoiseTable> noise_table() {
    if (!table_) table_ = std::make_shared<NoiseTable>(cfg_.seed, cfg_.noise_len);
    return table_;
  }

  WorkerSetup worker_setup() {
    WorkerSetup s;
    s.run_id = run_id_;
    s.run_seed = cfg_.seed;
    s.policy = spec_;
    s.env = env_;
    s.noise_seed = cfg_.seed;
    s.noise_len = cfg_.noise_len;
    s.normalizer = normalizer_;
    return s;
  }

  void init_new_run() {
    if (fs::exists(paths_.run_state()))
      throw ValidationError("run directory already holds a run: " + paths_.dir);
    fs::create_directories(paths_.state_dir());

    if (cfg_.normalize_obs)
      normalizer_ = ObsNormalizer::fit(collect_reference_observations(env_, cfg_.seed, 1000));

    Vec seed_theta;
    bool pretrained_flag = false;
    if (!cfg_.pretrained.empty()) {
      Checkpoint ck = Checkpoint::load(cfg_.pretrained);
      if (!(ck.spec == spec_))
        throw ValidationError("pretrained checkpoint architecture does not match config");
      seed_theta = ck.theta;
      pretrained_flag = true;
      if (ck.normalizer && cfg_.normalize_obs)
        throw ValidationError("pretrained runs disable observation normalization");
    }
    pretrained_run_ = pretrained_flag;

    members_.clear();
    for (int m = 0; m < cfg_.metapop_size; ++m) {
      Vec theta = seed_theta.empty()
                      ? init_params(spec_, mix_key({cfg_.seed, seed_tag::weight_init,
                                                    static_cast<std::uint64_t>(m)}))
                      : seed_theta;
      members_.push_back(
          {EsState::make(std::move(theta), cfg_.sigma, cfg_.lr, cfg_.weight_decay,
                         cfg_.pop_pairs),
           {}, 0.0});
    }

    archive_ = Archive{};
    archive_.k = cfg_.k;
    if (!cfg_.archive_import.empty()) {
      import_archive_entries(cfg_.archive_import);
    } else if (fs::exists(paths_.imported_archive())) {
      import_archive_entries(paths_.imported_archive());
    }

    iteration_ = 0;
    {
      std::ofstream cfg_out(paths_.config_file());
      cfg_out << cfg_.to_text();
      std::ofstream(paths_.runlog());
      std::ofstream(paths_.steps_file());
    }

    // Seed the archive with the initial means' behaviors so novelty is finite
    // from iteration 1 on.
    if (uses_novelty()) {
      PolicyEvaluator ev(spec_, env_, normalizer_, cfg_.rtg_target);
      for (int m = 0; m < cfg_.metapop_size; ++m) {
        std::vector<std::uint64_t> seeds;
        for (int e = 0; e < cfg_.eval_episodes; ++e)
          seeds.push_back(mix_key({cfg_.seed, seed_tag::init_eval,
                                   static_cast<std::uint64_t>(m),
                                   static_cast<std::uint64_t>(e)}));
        const auto sum = ev.evaluate(members_[m].es.theta, seeds);
        members_[m].bc = sum.mean_bc;
        archive_.add(sum.mean_bc);
      }
    }
    save_state();
  }

  void resume() {
    if (!fs::exists(paths_.run_state()))
      throw ValidationError("no resumable state in " + paths_.dir);
    {
      std::ifstream in(paths_.config_file());
      if (!in) throw ValidationError("missing config.txt in " + paths_.dir);
      std::stringstream buf;
      buf << in.rdbuf();
      std::set<std::string> keys;
      RunConfig stored = RunConfig::parse(buf.str(), keys);
      RunConfig want = cfg_;
      const int want_iters = want.iterations;
      want.iterations = stored.iterations;
      if (stored.to_text() != want.to_text())
        throw ValidationError("config does not match the stored run; refusing to resume");
      cfg_.iterations = want_iters;
    }
    std::ifstream rs(paths_.run_state());
    std::string key;
    std::int64_t it = 0;
    bool pre = false;
    while (rs >> key) {
      if (key == "iteration") rs >> it;
      else if (key == "pretrained_run") rs >> pre;
      else throw ValidationError("unknown run_state key: " + key);
    }
    iteration_ = it;
    pretrained_run_ = pre;
    if (cfg_.iterations < iteration_)
      throw ValidationError("run already past the requested iteration count");

    members_.clear();
    for (int m = 0; m < cfg_.metapop_size; ++m) {
      Checkpoint ck = Checkpoint::load(paths_.member_file(m));
      if (!(ck.spec == spec_)) throw ValidationError("member checkpoint spec mismatch");
      if (!ck.optimizer) throw ValidationError("member checkpoint lacks optimizer state");
      EsState es = EsState::make(std::move(ck.theta), cfg_.sigma, cfg_.lr,
                                 cfg_.weight_decay, cfg_.pop_pairs);
      es.adam_m = std::move(ck.optimizer->m);
      es.adam_v = std::move(ck.optimizer->v);
      es.adam_t = ck.optimizer->t;
      if (ck.normalizer) normalizer_ = ck.normalizer;
      members_.push_back({std::move(es), {}, 0.0});
    }
    if (uses_novelty()) {
      archive_ = Archive::load(paths_.archive_file());
      archive_.k = cfg_.k;
      load_member_bcs();
    }
  }

  // One full iteration; returns its log record.
  IterationRecord run_iteration(WorkerPool& pool) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::int64_t iter = iteration_ + 1;

    int sel = 0;
    if (uses_novelty()) {
      Vec novelties(members_.size());
      for (std::size_t m = 0; m < members_.size(); ++m) {
        members_[m].novelty = archive_.novelty(members_[m].bc);
        novelties[m] = members_[m].novelty;
      }
      CounterRng rng(mix_key({cfg_.seed, seed_tag::member_select,
                              static_cast<std::uint64_t>(iter)}));
      sel = static_cast<int>(select_member(novelties, rng.next_unit()));
    }
    MemberState& member = members_[sel];

    const TaskAnnouncement ann =
        make_announcement(run_id_, cfg_.seed, iter, sel, member.es, cfg_.rtg_target,
                          archive_.version, env_.id, noise_table()->size());
    IterationOutcome outcome = pool.run_iteration(ann, member.es.theta);
    if (outcome.reports.empty())
      throw std::runtime_error("iteration " + std::to_string(iter) +
                               ": every pair was dropped");

    const AggregateResult agg =
        aggregate(outcome.reports, cfg_.algorithm, archive_, cfg_.w);
    const Vec grad = estimate_update(agg.terms, *noise_table(), member.es.sigma,
                                     member.es.theta.size());
    adam_step(member.es, grad);

    PolicyEvaluator ev(spec_, env_, normalizer_, cfg_.rtg_target);
    std::vector<std::uint64_t> seeds;
    for (int e = 0; e < cfg_.eval_episodes; ++e)
      seeds.push_back(mean_eval_seed(cfg_.seed, iter, e));
    const EvalSummary sum = ev.evaluate(member.es.theta, seeds);

    IterationRecord rec;
    rec.iteration = iter;
    rec.member = sel;
    rec.pop_fitness_mean = agg.pop_fitness_mean;
    {
      Vec steps(agg.pop_steps.begin(), agg.pop_steps.end());
      rec.pop_steps_mean = mean_of(steps);
      const Interval iv = percentile_interval(steps, 0.975);
      rec.pop_steps_p025 = iv.lo;
      rec.pop_steps_p975 = iv.hi;
    }
    rec.eval_fitness = sum.mean_return;
    rec.eval_steps = sum.mean_steps;
    rec.eval_distance = sum.mean_distance;
    rec.eval_bc_x = sum.mean_bc.x;
    rec.eval_bc_y = sum.mean_bc.y;
    rec.dropped = static_cast<int>(outcome.dropped_pairs.size());

    member.bc = sum.mean_bc;
    if (uses_novelty()) {
      rec.novelty_of_mean = archive_.novelty(sum.mean_bc);
      archive_.add(sum.mean_bc);
      member.novelty = rec.novelty_of_mean;
    }
    rec.archive_size = archive_.entries.size();
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();

    append_log(rec, agg.pop_steps);
    iteration_ = iter;
    if (iter % cfg_.checkpoint_every == 0 || iter == cfg_.iterations) save_state();
    return rec;
  }

  // Runs from the current iteration to the configured horizon. The optional
  // callback sees each record and may stop the run early by returning false.
  template <typename StopFn>
  void run(WorkerPool& pool, StopFn&& on_record) {
    while (iteration_ < cfg_.iterations) {
      const IterationRecord rec = run_iteration(pool);
      if (!on_record(rec)) {
        save_state();
        break;
      }
    }
    write_final_members();
  }

  void run(WorkerPool& pool) {
    run(pool, [](const IterationRecord&) { return true; });
  }

  void save_state() {
    fs::create_directories(paths_.state_dir());
    for (std::size_t m = 0; m < members_.size(); ++m) {
      Checkpoint ck;
      ck.spec = spec_;
      ck.theta = members_[m].es.theta;
      ck.pretrained = pretrained_run_;
      ck.optimizer =
          AdamBlob{members_[m].es.adam_m, members_[m].es.adam_v, members_[m].es.adam_t};
      ck.normalizer = normalizer_;
      ck.save(paths_.member_file(static_cast<int>(m)));
    }
    if (uses_novelty()) {
      archive_.save(paths_.archive_file());
      save_member_bcs();
    }
    std::ofstream rs(paths_.run_state());
    rs << "iteration " << iteration_ << "\npretrained_run " << (pretrained_run_ ? 1 : 0)
       << "\n";
  }

  void write_final_members() {
    PolicyEvaluator ev(spec_, env_, normalizer_, cfg_.rtg_target);
    std::ofstream out(paths_.final_members());
    for (std::size_t m = 0; m < members_.size(); ++m) {
      std::vector<std::uint64_t> seeds;
      for (int e = 0; e < cfg_.eval_episodes; ++e)
        seeds.push_back(mix_key({cfg_.seed, seed_tag::final_eval,
                                 static_cast<std::uint64_t>(m),
                                 static_cast<std::uint64_t>(e)}));
      const EvalSummary s = ev.evaluate(members_[m].es.theta, seeds);
      out << json{{"member", m},
                  {"mean_return", s.mean_return},
                  {"mean_steps", s.mean_steps},
                  {"mean_distance", s.mean_distance},
                  {"bc_x", s.mean_bc.x},
                  {"bc_y", s.mean_bc.y}}
                 .dump()
          << "\n";
    }
  }

 private:
  void import_archive_entries(const std::string& path) {
    const Archive imported = Archive::load(path);
    for (const auto& e : imported.entries) archive_.add(e);
  }

  void save_member_bcs() {
    std::ofstream out(paths_.state_dir() + "/member_bcs.txt");
    for (const auto& m : members_)
      out << format_double(m.bc.x) << " " << format_double(m.bc.y) << "\n";
  }

  void load_member_bcs() {
    std::ifstream in(paths_.state_dir() + "/member_bcs.txt");
    if (!in) throw ValidationError("missing member_bcs.txt in run state");
    for (auto& m : members_) {
      std::string x, y;
      if (!(in >> x >> y)) throw ValidationError("member_bcs.txt truncated");
      m.bc = {parse_double(x), parse_double(y)};
    }
  }

  void append_log(const IterationRecord& rec, const std::vector<int>& pop_steps) {
    std::ofstream log(paths_.runlog(), std::ios::app);
    log << rec.to_json().dump() << "\n";
    std::ofstream steps(paths_.steps_file(), std::ios::app);
    steps << rec.iteration;
    for (int s : pop_steps) steps << " " << s;
    steps << "\n";
  }

  RunConfig cfg_;
  RunPaths paths_;
  PolicySpec spec_;
  EnvSpec env_;
  std::string run_id_;
  std::vector<MemberState> members_;
  Archive archive_;
  std::optional<ObsNormalizer> normalizer_;
  std::shared_ptr<const NoiseTable> table_;
  std::int64_t iteration_ = 0;
  bool pretrained_run_ = false;
};

// Builds the pool the config asks for and drives a full run.
inline void train_run(const RunConfig& cfg, const std::string& run_dir,
                      const std::string& listen = "", bool resume = false,
                      std::ostream* progress = nullptr) {
  Trainer tr(cfg, run_dir);
  if (resume)
    tr.resume();
  else
    tr.init_new_run();

  std::unique_ptr<WorkerPool> pool;
  std::unique_ptr<TcpListener> listener;
  if (!listen.empty()) {
    if (cfg.workers < 1)
      throw ValidationError("listening mode needs workers >= 1");
    listener = std::make_unique<TcpListener>(HostPort::parse(listen));
    if (progress)
      (*progress) << "listening on port " << listener->port() << " for " << cfg.workers
                  << " worker(s)\n";
    pool = std::make_unique<TcpPool>(*listener, cfg.workers, tr.worker_setup(),
                                     cfg.straggler_ms);
  } else if (cfg.workers > 0) {
    pool = std::make_unique<ThreadedPool>(cfg.workers, tr.worker_setup(),
                                          tr.noise_table(), cfg.straggler_ms);
  } else {
    pool = std::make_unique<SequentialPool>(tr.worker_setup(), tr.noise_table());
  }

  tr.run(*pool, [&](const IterationRecord& rec) {
    if (progress)
      (*progress) << "iter " << rec.iteration << " member " << rec.member << " fit "
                  << rec.eval_fitness << " dist " << rec.eval_distance << " steps "
                  << rec.eval_steps << "\n";
    return true;
  });
}

inline std::vector<IterationRecord> load_runlog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read run log: " + path);
  std::vector<IterationRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(IterationRecord::from_json(json::parse(line)));
  }
  return out;
}

}  // namespace esrl
