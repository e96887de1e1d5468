// Command-line front end: train / worker / eval / pretrain / archive /
// plot-export. Exit codes: 0 success, 2 validation error, 3 runtime error.

#include <CLI11.hpp>
#include <cmath>
#include <iostream>

#include "esrl/channel.hpp"
#include "esrl/config.hpp"
#include "esrl/experiment.hpp"
#include "esrl/pretrain.hpp"
#include "esrl/train.hpp"
#include "esrl/worker.hpp"

using namespace esrl;

namespace {

std::string default_run_dir(const RunConfig& cfg) {
  return "runs/" + to_string(cfg.algorithm) + "_" +
         (cfg.policy == PolicyKind::Mlp ? "ff" : "dt") + "_s" + std::to_string(cfg.seed);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Derivative-free policy training with novelty-driven evolution strategies"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "run a training experiment");
  std::string train_config, train_out, train_listen;
  std::int64_t train_seed = -1;
  int train_workers = -1;
  bool train_resume = false, train_quiet = false;
  train_cmd->add_option("--config", train_config, "run configuration file")->required();
  train_cmd->add_option("--seed", train_seed, "override the config seed");
  train_cmd->add_option("--workers", train_workers, "override the worker count");
  train_cmd->add_option("--listen", train_listen, "host:port to serve TCP workers on");
  train_cmd->add_option("--out", train_out, "run directory (default runs/<alg>_<policy>_s<seed>)");
  train_cmd->add_flag("--resume", train_resume, "continue from the run's latest state");
  train_cmd->add_flag("--quiet", train_quiet, "suppress per-iteration progress");

  // worker
  auto* worker_cmd = app.add_subcommand("worker", "serve evaluations for a coordinator");
  std::string worker_connect;
  worker_cmd->add_option("--connect", worker_connect, "coordinator host:port")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or run directory");
  std::string eval_ckpt, eval_env, eval_traj;
  int eval_episodes = 10;
  std::int64_t eval_seed = 1;
  double eval_rtg = std::nan("");
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file or run directory")->required();
  eval_cmd->add_option("--env", eval_env, "environment id");
  eval_cmd->add_option("--episodes", eval_episodes, "episodes per member");
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
  eval_cmd->add_option("--rtg", eval_rtg, "return-to-go target for transformer policies");
  eval_cmd->add_option("--traj-dir", eval_traj, "write per-episode trajectory logs here");

  // pretrain
  auto* pre_cmd = app.add_subcommand("pretrain", "clone a teacher into a student policy");
  std::string pre_teacher, pre_student, pre_config, pre_out, pre_init;
  pre_cmd->add_option("--teacher", pre_teacher, "teacher checkpoint")->required();
  pre_cmd->add_option("--student-spec", pre_student, "student policy spec file")->required();
  pre_cmd->add_option("--config", pre_config, "run configuration file")->required();
  pre_cmd->add_option("--out", pre_out, "output directory")->required();
  pre_cmd->add_option("--init-from", pre_init, "checkpoint to initialize the student from");

  // archive
  auto* arch_cmd = app.add_subcommand("archive", "export or import behavior archives");
  auto* arch_export = arch_cmd->add_subcommand("export", "write a run's archive to a file");
  std::string ax_run, ax_out;
  arch_export->add_option("--run", ax_run, "run directory")->required();
  arch_export->add_option("--out", ax_out, "output archive file")->required();
  auto* arch_import = arch_cmd->add_subcommand("import", "stage an archive for a new run");
  std::string ai_path, ai_run;
  arch_import->add_option("--path", ai_path, "archive file")->required();
  arch_import->add_option("--run", ai_run, "run directory to seed")->required();
  arch_cmd->require_subcommand(1);

  // plot-export
  auto* plot_cmd = app.add_subcommand("plot-export", "emit figure tables from run logs");
  std::vector<std::string> plot_runs;
  std::string plot_out;
  plot_cmd->add_option("--runs", plot_runs, "run directories")->required()->expected(-1);
  plot_cmd->add_option("--out", plot_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*train_cmd) {
    RunConfig cfg = RunConfig::load(train_config);
    if (train_seed >= 0) cfg.seed = static_cast<std::uint64_t>(train_seed);
    if (train_workers >= 0) cfg.workers = train_workers;
    cfg.validate();
    const std::string out = train_out.empty() ? default_run_dir(cfg) : train_out;
    train_run(cfg, out, train_listen, train_resume,
              train_quiet ? nullptr : &std::cout);
    std::cout << "run directory: " << out << "\n";
    return 0;
  }
  if (*worker_cmd) {
    auto ch = tcp_connect(HostPort::parse(worker_connect));
    worker_main(*ch);
    return 0;
  }
  if (*eval_cmd) {
    const json report = eval_checkpoint(eval_ckpt, eval_env, eval_episodes,
                                        static_cast<std::uint64_t>(eval_seed), eval_rtg,
                                        eval_traj);
    std::cout << report.dump(2) << "\n";
    return 0;
  }
  if (*pre_cmd) {
    RunConfig cfg = RunConfig::load(pre_config);
    std::ifstream spec_in(pre_student);
    if (!spec_in) throw ValidationError("cannot read student spec: " + pre_student);
    std::stringstream buf;
    buf << spec_in.rdbuf();
    const PolicySpec student = PolicySpec::from_text(buf.str());
    const auto outcome = pretrain(pre_teacher, student, cfg, pre_out, pre_init, &std::cout);
    std::cout << "student checkpoint: " << outcome.checkpoint_path << "\n";
    return 0;
  }
  if (*arch_export) {
    archive_export(ax_run, ax_out);
    std::cout << "archive written to " << ax_out << "\n";
    return 0;
  }
  if (*arch_import) {
    archive_import(ai_path, ai_run);
    std::cout << "archive staged in " << ai_run << "\n";
    return 0;
  }
  if (*plot_cmd) {
    plot_export(plot_runs, plot_out);
    std::cout << "tables written to " << plot_out << "\n";
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
