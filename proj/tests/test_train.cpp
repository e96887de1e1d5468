#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "esrl/experiment.hpp"
#include "esrl/pretrain.hpp"
#include "esrl/train.hpp"

using namespace esrl;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("esrl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

RunConfig small_config(Algorithm alg, std::uint64_t seed = 1) {
  RunConfig cfg;
  cfg.algorithm = alg;
  cfg.policy = PolicyKind::Mlp;
  cfg.mlp_hidden = {4};
  cfg.iterations = 5;
  cfg.pop_pairs = 8;
  cfg.metapop_size = alg == Algorithm::Es ? 1 : 2;
  cfg.eval_episodes = 2;
  cfg.checkpoint_every = 100;
  cfg.noise_len = 20000;
  cfg.seed = seed;
  cfg.max_steps = 60;
  cfg.validate();
  return cfg;
}

Vec run_to_end(const RunConfig& cfg, const std::string& dir, WorkerPool* ext = nullptr) {
  Trainer tr(cfg, dir);
  tr.init_new_run();
  if (ext) {
    tr.run(*ext);
  } else {
    SequentialPool pool(tr.worker_setup(), tr.noise_table());
    tr.run(pool);
  }
  return tr.members()[0].es.theta;
}

}  // namespace

TEST_CASE("config parsing, unknown keys, and cross-field rules") {
  std::set<std::string> keys;
  RunConfig cfg = RunConfig::parse(
      "algorithm nsr-es\npolicy dt\nenv deceptive-maze\n"
      "iterations 10\n# comment\nw = 0.5\nmlp_hidden 8,8\n",
      keys);
  CHECK(keys.contains("algorithm"));
  cfg.resolve(keys);
  CHECK(cfg.pop_pairs == 400);  // transformer quadruples the default population

  std::set<std::string> keys2;
  RunConfig cfg2 = RunConfig::parse("policy dt\npop_pairs 50\n", keys2);
  cfg2.resolve(keys2);
  CHECK(cfg2.pop_pairs == 50);  // explicit override wins

  std::set<std::string> keys3;
  RunConfig cfg3 = RunConfig::parse("algorithm es\nmetapop_size 7\n", keys3);
  cfg3.resolve(keys3);
  CHECK(cfg3.metapop_size == 1);  // plain ES carries one mean

  CHECK_THROWS_AS(RunConfig::parse("no_such_key 1\n", keys3), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("iterations\n", keys3), ValidationError);
}

TEST_CASE("pretrained seeds force the reduced hyperparameters") {
  std::set<std::string> keys;
  RunConfig cfg = RunConfig::parse("pretrained some.ckpt\n", keys);
  cfg.resolve(keys);
  CHECK(cfg.sigma == 0.01);
  CHECK(cfg.lr == 0.01);
  CHECK_FALSE(cfg.normalize_obs);

  std::set<std::string> k2;
  RunConfig c2 = RunConfig::parse("pretrained some.ckpt\nsigma 0.05\n", k2);
  CHECK_THROWS_AS(c2.resolve(k2), ValidationError);

  std::set<std::string> k3;
  RunConfig c3 = RunConfig::parse("pretrained some.ckpt\nnormalize_obs true\n", k3);
  CHECK_THROWS_AS(c3.resolve(k3), ValidationError);

  std::set<std::string> k4;
  RunConfig c4 = RunConfig::parse("pretrained some.ckpt\nsigma 0.01\nlr 0.01\n", k4);
  c4.resolve(k4);  // explicitly restating the forced values is fine
  CHECK(c4.sigma == 0.01);
}

TEST_CASE("checkpoint files round-trip exactly") {
  const std::string dir = fresh_dir("ckpt");
  Checkpoint ck;
  ck.spec.kind = PolicyKind::Mlp;
  ck.spec.obs_dim = 4;
  ck.spec.act_dim = 2;
  ck.spec.mlp_hidden = {4};
  CounterRng rng(2);
  ck.theta.resize(ck.spec.param_count());
  for (auto& x : ck.theta) x = rng.next_normal();
  ck.pretrained = true;
  AdamBlob blob;
  blob.m.assign(ck.theta.size(), 0.25);
  blob.v.assign(ck.theta.size(), 1e-9);
  blob.t = 42;
  ck.optimizer = blob;
  ObsNormalizer n;
  n.mean = {0.5, -0.25, 1.0 / 3.0, 0.0};
  n.std = {1.0, 2.0, 0.5, 1e-6};
  n.frozen = true;
  ck.normalizer = n;

  const std::string path = dir + "/a.ckpt";
  ck.save(path);
  const Checkpoint back = Checkpoint::load(path);
  CHECK(back.spec == ck.spec);
  CHECK(back.theta == ck.theta);
  CHECK(back.pretrained);
  REQUIRE(back.optimizer);
  CHECK(back.optimizer->m == blob.m);
  CHECK(back.optimizer->v == blob.v);
  CHECK(back.optimizer->t == 42);
  REQUIRE(back.normalizer);
  CHECK(back.normalizer->mean == n.mean);
  CHECK(back.normalizer->std == n.std);

  CHECK_THROWS_AS(Checkpoint::load(dir + "/missing.ckpt"), ValidationError);
}

TEST_CASE("training smoke run: logs, archive bookkeeping, reproducibility") {
  const RunConfig cfg = small_config(Algorithm::NsrEs);
  const std::string d1 = fresh_dir("smoke1");
  const std::string d2 = fresh_dir("smoke2");
  const Vec t1 = run_to_end(cfg, d1);
  const Vec t2 = run_to_end(cfg, d2);
  CHECK(t1 == t2);  // exact reproducibility from (config, seed)

  const auto log1 = load_runlog(RunPaths{d1}.runlog());
  const auto log2 = load_runlog(RunPaths{d2}.runlog());
  REQUIRE(log1.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(log1[i].iteration == static_cast<std::int64_t>(i + 1));
    CHECK(log1[i].eval_fitness == log2[i].eval_fitness);
    CHECK(log1[i].pop_fitness_mean == log2[i].pop_fitness_mean);
    CHECK(log1[i].novelty_of_mean == log2[i].novelty_of_mean);
  }
  // archive: M initial means + one mean per iteration
  CHECK(log1.back().archive_size == 2 + 5);

  Trainer check(cfg, d1);
  check.resume();
  CHECK(check.archive().entries.size() == 7);
  CHECK(fs::exists(RunPaths{d1}.final_members()));
}

TEST_CASE("es runs keep no archive and a single member") {
  const RunConfig cfg = small_config(Algorithm::Es);
  const std::string dir = fresh_dir("es_smoke");
  run_to_end(cfg, dir);
  const auto log = load_runlog(RunPaths{dir}.runlog());
  REQUIRE(log.size() == 5);
  for (const auto& r : log) {
    CHECK(r.archive_size == 0);
    CHECK(r.member == 0);
    CHECK(r.novelty_of_mean == 0.0);
  }
}

TEST_CASE("resume reproduces an uninterrupted run bitwise") {
  RunConfig cfg = small_config(Algorithm::NsEs, 9);
  cfg.iterations = 6;
  cfg.checkpoint_every = 3;

  const std::string full_dir = fresh_dir("resume_full");
  const Vec full = run_to_end(cfg, full_dir);

  const std::string part_dir = fresh_dir("resume_part");
  RunConfig first = cfg;
  first.iterations = 3;
  {
    Trainer tr(first, part_dir);
    tr.init_new_run();
    SequentialPool pool(tr.worker_setup(), tr.noise_table());
    tr.run(pool);
  }
  {
    Trainer tr(cfg, part_dir);  // same config, extended horizon
    tr.resume();
    CHECK(tr.completed_iterations() == 3);
    SequentialPool pool(tr.worker_setup(), tr.noise_table());
    tr.run(pool);
    CHECK(tr.members()[0].es.theta == full);
    Trainer fullback(cfg, full_dir);
    fullback.resume();
    for (std::size_t m = 0; m < tr.members().size(); ++m)
      CHECK(tr.members()[m].es.theta == fullback.members()[m].es.theta);
  }
  const auto la = load_runlog(RunPaths{full_dir}.runlog());
  const auto lb = load_runlog(RunPaths{part_dir}.runlog());
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i)
    CHECK(la[i].eval_fitness == lb[i].eval_fitness);
}

TEST_CASE("resume refuses a mismatched config") {
  const RunConfig cfg = small_config(Algorithm::NsEs, 3);
  const std::string dir = fresh_dir("resume_refuse");
  run_to_end(cfg, dir);
  RunConfig other = cfg;
  other.sigma = 0.1;
  Trainer tr(other, dir);
  CHECK_THROWS_AS(tr.resume(), ValidationError);
}

TEST_CASE("worker-count invariance: 1, 2 and 4 workers match sequential bitwise") {
  const RunConfig cfg = small_config(Algorithm::NsrEs, 21);
  const std::string base_dir = fresh_dir("pool_seq");
  const Vec base = run_to_end(cfg, base_dir);
  for (int workers : {1, 2, 4}) {
    const std::string dir = fresh_dir("pool_w" + std::to_string(workers));
    Trainer tr(cfg, dir);
    tr.init_new_run();
    ThreadedPool pool(workers, tr.worker_setup(), tr.noise_table(), cfg.straggler_ms);
    tr.run(pool);
    CHECK(tr.members()[0].es.theta == base);
  }
}

TEST_CASE("pretrain: self-cloning scores zero at iteration 0") {
  const std::string dir = fresh_dir("pre_self");
  RunConfig cfg = small_config(Algorithm::Es, 4);
  cfg.iterations = 1;
  cfg.pretrain_episodes = 3;
  cfg.pretrain_batch = 16;

  PolicySpec spec = cfg.policy_spec();
  Checkpoint teacher;
  teacher.spec = spec;
  teacher.theta = init_params(spec, 99);
  const std::string teacher_path = dir + "/teacher.ckpt";
  teacher.save(teacher_path);

  const auto out = pretrain(teacher_path, spec, cfg, dir + "/out", teacher_path);
  REQUIRE_FALSE(out.mean_fitness.empty());
  CHECK(std::abs(out.mean_fitness[0]) <= 1e-12);

  const Checkpoint student = Checkpoint::load(out.checkpoint_path);
  CHECK(student.pretrained);
  CHECK(student.spec == spec);
}

TEST_CASE("pretrain: dt student self-clones a dt teacher exactly") {
  const std::string dir = fresh_dir("pre_dt");
  RunConfig cfg = small_config(Algorithm::Es, 6);
  cfg.policy = PolicyKind::DecisionTransformer;
  cfg.iterations = 1;
  cfg.pop_pairs = 4;
  cfg.pretrain_episodes = 2;
  cfg.pretrain_batch = 8;
  cfg.max_steps = 30;
  cfg.noise_len = 20000;

  const PolicySpec spec = cfg.policy_spec();
  Checkpoint teacher;
  teacher.spec = spec;
  teacher.theta = init_params(spec, 123);
  const std::string teacher_path = dir + "/teacher.ckpt";
  teacher.save(teacher_path);

  const auto out = pretrain(teacher_path, spec, cfg, dir + "/out", teacher_path);
  CHECK(std::abs(out.mean_fitness[0]) <= 1e-12);
}

TEST_CASE("pretrain: dataset regeneration is deterministic") {
  const std::string dir = fresh_dir("pre_det");
  RunConfig cfg = small_config(Algorithm::Es, 12);
  cfg.iterations = 3;
  cfg.pretrain_episodes = 2;
  cfg.pretrain_batch = 8;
  const PolicySpec spec = cfg.policy_spec();
  Checkpoint teacher;
  teacher.spec = spec;
  teacher.theta = init_params(spec, 7);
  teacher.save(dir + "/t.ckpt");
  const auto a = pretrain(dir + "/t.ckpt", spec, cfg, dir + "/a");
  const auto b = pretrain(dir + "/t.ckpt", spec, cfg, dir + "/b");
  CHECK(a.mean_fitness == b.mean_fitness);
}

TEST_CASE("pretrain: constant-action teacher is imitated quickly") {
  const std::string dir = fresh_dir("pre_const");
  RunConfig cfg = small_config(Algorithm::Es, 8);
  cfg.iterations = 200;
  cfg.pop_pairs = 30;
  cfg.sigma = 0.05;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  cfg.pretrain_episodes = 4;
  cfg.pretrain_batch = 32;
  cfg.max_steps = 40;

  const PolicySpec spec = cfg.policy_spec();
  MlpWeights w;
  w.layers.push_back(LinearLayer::zeros(4, 4));
  w.layers.push_back(LinearLayer::zeros(2, 4));
  w.layers[1].b = {0.4, -0.3};  // constant action tanh(0.4), tanh(-0.3)
  Checkpoint teacher;
  teacher.spec = spec;
  teacher.theta = vectorize(spec, w);
  teacher.save(dir + "/t.ckpt");

  const auto out = pretrain(dir + "/t.ckpt", spec, cfg, dir + "/out");
  CHECK(out.mean_fitness.back() > -1e-3);  // MSE below 1e-3
  CHECK(out.mean_fitness.front() < -1e-3); // and it actually had to learn
}

TEST_CASE("pretrain rejects incompatible students") {
  const std::string dir = fresh_dir("pre_bad");
  RunConfig cfg = small_config(Algorithm::Es, 10);
  const PolicySpec spec = cfg.policy_spec();
  Checkpoint teacher;
  teacher.spec = spec;
  teacher.theta = init_params(spec, 1);
  teacher.save(dir + "/t.ckpt");
  PolicySpec bad = spec;
  bad.act_dim = 3;
  CHECK_THROWS_AS(pretrain(dir + "/t.ckpt", bad, cfg, dir + "/out"), ValidationError);
}

TEST_CASE("archive export, import, and seeding bookkeeping") {
  const RunConfig cfg = small_config(Algorithm::NsEs, 31);
  const std::string src = fresh_dir("arch_src");
  run_to_end(cfg, src);

  const std::string exported = fresh_dir("arch_files") + "/a.txt";
  archive_export(src, exported);
  const Archive a = Archive::load(exported);
  CHECK(a.entries.size() == 2 + 5);

  const std::string dst = fresh_dir("arch_dst");
  archive_import(exported, dst);
  RunConfig cfg2 = small_config(Algorithm::NsEs, 32);
  cfg2.iterations = 1;
  Trainer tr(cfg2, dst);
  tr.init_new_run();
  // imported entries + M initial means
  CHECK(tr.archive().entries.size() == a.entries.size() + 2);
  SequentialPool pool(tr.worker_setup(), tr.noise_table());
  tr.run(pool);
  const auto log = load_runlog(RunPaths{dst}.runlog());
  CHECK(log.at(0).archive_size == a.entries.size() + 2 + 1);

  // a fresh import into an occupied run dir must refuse
  CHECK_THROWS_AS(archive_import(exported, dst), ValidationError);

  // novelty of an archived point drops when queried against the seeded archive
  Archive seeded = tr.archive();
  Archive control;
  control.k = seeded.k;
  control.add({5.0, 5.0});
  const auto probe = a.entries.front();
  CHECK(seeded.novelty(probe) < control.novelty(probe));
}

TEST_CASE("eval_checkpoint picks the best member by mean distance") {
  const RunConfig cfg = small_config(Algorithm::NsrEs, 41);
  const std::string dir = fresh_dir("eval_run");
  run_to_end(cfg, dir);

  const json r1 = eval_checkpoint(dir, "", 4, 5, std::nan(""));
  const json r2 = eval_checkpoint(dir, "", 4, 5, std::nan(""));
  CHECK(r1 == r2);
  REQUIRE(r1.at("members").size() == 2);
  double best = -1;
  int best_idx = -1;
  for (const auto& m : r1.at("members")) {
    if (m.at("mean_distance").get<double>() > best) {
      best = m.at("mean_distance").get<double>();
      best_idx = m.at("member").get<int>();
    }
  }
  CHECK(r1.at("best_member").get<int>() == best_idx);

  // single checkpoint file
  const json r3 =
      eval_checkpoint(RunPaths{dir}.member_file(0), "deceptive-maze", 3, 5, std::nan(""));
  CHECK(r3.at("members").size() == 1);
  CHECK_THROWS_AS(eval_checkpoint(RunPaths{dir}.member_file(0), "", 3, 5, std::nan("")),
                  ValidationError);
}

TEST_CASE("plot export: quartiles, pooled step intervals, final distances") {
  // synthesize three runs with known values
  std::vector<std::string> dirs;
  for (int r = 0; r < 3; ++r) {
    const std::string dir = fresh_dir("plot_run" + std::to_string(r));
    dirs.push_back(dir);
    std::ofstream log(RunPaths{dir}.runlog());
    std::ofstream steps(RunPaths{dir}.steps_file());
    for (int it = 1; it <= 4; ++it) {
      IterationRecord rec;
      rec.iteration = it;
      rec.eval_fitness = 10.0 * (r + 1);  // constant per run
      rec.eval_distance = r + it * 0.1;
      log << rec.to_json().dump() << "\n";
      steps << it;
      for (int sidx = 0; sidx < 8; ++sidx) steps << " " << (sidx + 1);  // 1..8 pooled
      steps << "\n";
    }
    std::ofstream fin(RunPaths{dir}.final_members());
    fin << json{{"member", 0}, {"mean_return", 0.0}, {"mean_steps", 1.0},
                {"mean_distance", 1.0 + r}, {"bc_x", 0.0}, {"bc_y", 0.0}}
               .dump()
        << "\n";
    fin << json{{"member", 1}, {"mean_return", 0.0}, {"mean_steps", 1.0},
                {"mean_distance", 2.0 + r}, {"bc_x", 0.0}, {"bc_y", 0.0}}
               .dump()
        << "\n";
  }
  const std::string out = fresh_dir("plot_out");
  plot_export(dirs, out);

  std::ifstream fq(out + "/fitness_quartiles.csv");
  std::string header, line;
  std::getline(fq, header);
  CHECK(header == "iteration,q25,median,q75");
  std::getline(fq, line);
  CHECK(line == "1,15,20,25");  // quartiles of {10,20,30}

  std::ifstream si(out + "/steps_interval.csv");
  std::getline(si, header);
  std::getline(si, line);
  // pooled data is 1..8 three times; mean 4.5, interval [1.2875, 7.7125]
  std::istringstream ls(line);
  std::string tok;
  std::getline(ls, tok, ',');
  CHECK(tok == "1");
  std::getline(ls, tok, ',');
  CHECK_THAT(parse_double(tok), Catch::Matchers::WithinAbs(4.5, 1e-12));

  std::ifstream fd(out + "/final_distance.csv");
  std::getline(fd, header);
  std::getline(fd, line);
  CHECK(line.find(",1,") != std::string::npos);  // member 1 always farther
}

TEST_CASE("single-run plot export: medians equal the run's own values") {
  const std::string dir = fresh_dir("plot_single");
  std::ofstream log(RunPaths{dir}.runlog());
  std::ofstream steps(RunPaths{dir}.steps_file());
  for (int it = 1; it <= 3; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    rec.eval_fitness = 0.5 * it;
    log << rec.to_json().dump() << "\n";
    steps << it << " 3 4\n";
  }
  std::ofstream fin(RunPaths{dir}.final_members());
  fin << json{{"member", 0}, {"mean_return", 0.0}, {"mean_steps", 1.0},
              {"mean_distance", 1.5}, {"bc_x", 0.0}, {"bc_y", 0.0}}
             .dump()
      << "\n";
  log.close();
  steps.close();
  fin.close();

  const std::string out = fresh_dir("plot_single_out");
  plot_export({dir}, out);
  std::ifstream fq(out + "/fitness_quartiles.csv");
  std::string header, l1, l2;
  std::getline(fq, header);
  std::getline(fq, l1);
  CHECK(l1 == "1,0.5,0.5,0.5");
}
