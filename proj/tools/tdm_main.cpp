#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tdm/checkpoint.hpp"
#include "tdm/config.hpp"
#include "tdm/data_io.hpp"
#include "tdm/diffusion.hpp"
#include "tdm/evaluation.hpp"
#include "tdm/gradcheck.hpp"
#include "tdm/plot.hpp"
#include "tdm/pose_tensor.hpp"
#include "tdm/rng.hpp"
#include "tdm/training.hpp"

namespace fs = std::filesystem;
using namespace tdm;

namespace {

// exit code 2: bad usage, config, or input files; 1: runtime failure
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

std::vector<std::string> split_text(const std::string& text) {
  std::istringstream iss(text);
  std::vector<std::string> tokens;
  std::string tok;
  while (iss >> tok) tokens.push_back(tok);
  return tokens;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& resume) {
  require_file(config_path, "config");
  RunConfig cfg = load_run_config(config_path, overrides);
  if (cfg.dataset_path.empty())
    throw UsageError("config field 'data.dataset' must name the training dataset");
  require_file(cfg.dataset_path, "dataset");
  if (!resume.empty()) require_file(resume, "checkpoint");

  const SkeletonTopology topo = cfg.load_topology();
  const Dataset dataset = load_dataset(cfg.dataset_path, nullptr, topo);
  for (const auto& w : dataset.warnings) std::cerr << "warning: " << w << "\n";
  if (dataset.empty()) throw UsageError("dataset '" + cfg.dataset_path + "' is empty");

  TrainRunResult result = run_training(dataset, topo, cfg.model, cfg.schedule_steps,
                                       cfg.schedule_offset, cfg.train, cfg.out_dir, resume);
  std::cout << "trained " << result.steps_run << " steps; final total=" << result.final_loss.total
            << " joint=" << result.final_loss.joint << " bone=" << result.final_loss.bone
            << "\ncheckpoint: " << result.final_checkpoint << "\n";
  return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& text, int frames,
                 std::uint64_t seed, const std::string& mode, int iterations,
                 const std::string& out_path, const std::string& id) {
  require_file(ckpt_path, "checkpoint");
  if (frames < 1) throw UsageError("--frames must be >= 1");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  Denoiser model = model_from_checkpoint(ckpt);
  const NoiseSchedule sched = cosine_schedule(ckpt.schedule_steps, ckpt.schedule_offset);

  SamplePair sample;
  sample.id = id;
  sample.tokens = split_text(text);
  if (sample.tokens.empty()) throw UsageError("--text produced no tokens");
  try {
    sample.token_ids = ckpt.vocab.encode(sample.tokens);
  } catch (const DenoiserError& e) {
    throw UsageError(e.what());
  }

  SamplerConfig sampler;
  sampler.iterations = iterations;
  sampler.noise_mode = noise_mode_from_string(mode);
  Rng rng(seed);
  const DenoiseFn denoise_fn = [&](const PoseSequence& noisy, int t) {
    return model.denoise(noisy, model.condition(sample.token_ids, t, sched.total_steps));
  };
  sample.pose = tdm::sample(denoise_fn, frames, model.joints(), sched, sampler, rng);

  Dataset out;
  out.samples.push_back(std::move(sample));
  save_dataset(out_path, out);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_path,
             const std::string& report_path, std::uint64_t seed, const std::string& mode,
             int iterations, const std::string& skeleton_path) {
  require_file(ckpt_path, "checkpoint");
  require_file(dataset_path, "dataset");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  Denoiser model = model_from_checkpoint(ckpt);
  const NoiseSchedule sched = cosine_schedule(ckpt.schedule_steps, ckpt.schedule_offset);

  SkeletonTopology topo = skeleton_path.empty() ? SkeletonTopology::toy_upper_body()
                                                : SkeletonTopology::load(skeleton_path);
  if (topo.joint_count() != model.joints())
    throw UsageError("checkpoint was trained with " + std::to_string(model.joints()) +
                     " joints, topology has " + std::to_string(topo.joint_count()));
  const Dataset dataset = load_dataset(dataset_path, &ckpt.vocab, topo);
  if (dataset.empty()) throw UsageError("dataset '" + dataset_path + "' is empty");

  SamplerConfig sampler;
  sampler.iterations = iterations;
  sampler.noise_mode = noise_mode_from_string(mode);

  int index = 0;
  const GenerateFn generate = [&](const SamplePair& s) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(index++)));
    const DenoiseFn denoise_fn = [&](const PoseSequence& noisy, int t) {
      return model.denoise(noisy, model.condition(s.token_ids, t, sched.total_steps));
    };
    return tdm::sample(denoise_fn, s.pose.frames, model.joints(), sched, sampler, rng);
  };
  const EvalReport report = evaluate_pairs(generate, dataset);
  write_report(report_path, report);
  std::cout << "evaluated " << report.count << " samples (" << report.failed
            << " failed); mean dtw=" << report.mean << " median=" << report.median
            << " worst=" << report.worst << "\nreport: " << report_path << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, double inject_error) {
  const GradCheckReport report = run_gradcheck(seed, tolerance, inject_error);
  for (const auto& e : report.entries)
    std::printf("op=%-28s max_rel_err=%.3e %s\n", e.name.c_str(), e.max_rel_err,
                e.pass ? "pass" : "FAIL");
  if (!report.all_pass()) {
    std::cout << "gradient check FAILED (tolerance " << report.tolerance << ")\n";
    return 1;
  }
  std::cout << "gradient check passed (tolerance " << report.tolerance << ")\n";
  return 0;
}

int cmd_synth(const std::string& out_path, int samples, std::uint64_t seed, int vocab,
              int max_len, int frames_per_token, const std::string& skeleton_path) {
  if (samples < 1 || vocab < 1 || max_len < 1 || frames_per_token < 1)
    throw UsageError("--samples, --vocab, --max-len, --frames-per-token must be positive");
  SkeletonTopology topo = skeleton_path.empty() ? SkeletonTopology::toy_upper_body()
                                                : SkeletonTopology::load(skeleton_path);
  Dataset ds = generate_synthetic(seed, samples, topo, vocab, max_len, frames_per_token);
  save_dataset(out_path, ds);
  std::cout << "wrote " << ds.size() << " samples to " << out_path << "\n";
  return 0;
}

int cmd_plot(const std::string& pose_path, const std::string& out_dir,
             const std::string& skeleton_path, const std::string& record_id) {
  require_file(pose_path, "pose file");
  SkeletonTopology topo = skeleton_path.empty() ? SkeletonTopology::toy_upper_body()
                                                : SkeletonTopology::load(skeleton_path);
  const Dataset ds = load_dataset(pose_path, nullptr, topo);
  if (ds.empty()) throw UsageError("pose file '" + pose_path + "' has no records");
  const SamplePair* chosen = &ds.samples.front();
  if (!record_id.empty()) {
    chosen = nullptr;
    for (const auto& s : ds.samples)
      if (s.id == record_id) chosen = &s;
    if (!chosen) throw UsageError("record '" + record_id + "' not found in " + pose_path);
  }
  const PlotResult result = plot_pose_sequence(chosen->pose, topo, out_dir);
  for (int f : result.skipped_frames)
    std::cout << "notice: frame " << f << " is masked, skipped\n";
  std::cout << "wrote " << result.svg_files.size() << " svg frames and " << result.csv_file
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tdm: text-conditioned diffusion over skeletal pose sequences"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run the training loop from a config file");
  std::string train_config, train_resume;
  std::vector<std::string> train_sets;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  train->add_option("--config", train_config, "run config JSON")->required();
  train->add_option("--set", train_sets, "override a config field, e.g. train.max_steps=100");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_option("--seed", train_seed, "override train.seed")->each([&](const std::string&) {
    train_seed_set = true;
  });

  // generate
  auto* gen = app.add_subcommand("generate", "sample a pose sequence for a text");
  std::string gen_ckpt, gen_text, gen_out = "generated.jsonl", gen_mode = "fresh",
              gen_id = "generated";
  int gen_frames = 0, gen_iters = 5;
  std::uint64_t gen_seed = 0;
  gen->add_option("--checkpoint", gen_ckpt, "model checkpoint")->required();
  gen->add_option("--text", gen_text, "whitespace-separated tokens")->required();
  gen->add_option("--frames", gen_frames, "output frame count")->required();
  gen->add_option("--out", gen_out, "output pose file (dataset record format)");
  gen->add_option("--mode", gen_mode, "noise mode: fresh|deterministic");
  gen->add_option("--iterations", gen_iters, "denoiser invocations");
  gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_option("--id", gen_id, "record id for the output");

  // eval
  auto* ev = app.add_subcommand("eval", "score generated sequences against a dataset");
  std::string ev_ckpt, ev_dataset, ev_report = "report.txt", ev_mode = "deterministic",
              ev_skeleton;
  int ev_iters = 5;
  std::uint64_t ev_seed = 0;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--dataset", ev_dataset, "reference dataset")->required();
  ev->add_option("--out", ev_report, "report path");
  ev->add_option("--mode", ev_mode, "noise mode: fresh|deterministic");
  ev->add_option("--iterations", ev_iters, "denoiser invocations");
  ev->add_option("--seed", ev_seed, "sampling seed");
  ev->add_option("--skeleton", ev_skeleton, "skeleton config (default: built-in)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::uint64_t gc_seed = 2024;
  double gc_tol = 1e-4, gc_inject = 0.0;
  gc->add_option("--seed", gc_seed, "rng seed");
  gc->add_option("--tolerance", gc_tol, "max relative error");
  gc->add_option("--inject-error", gc_inject,
                 "perturb analytic gradients (harness sensitivity fixture)");

  // synth
  auto* sy = app.add_subcommand("synth", "generate a deterministic synthetic corpus");
  std::string sy_out, sy_skeleton;
  int sy_samples = 8, sy_vocab = 10, sy_maxlen = 3, sy_fpt = 4;
  std::uint64_t sy_seed = 7;
  sy->add_option("--out", sy_out, "output dataset path")->required();
  sy->add_option("--samples", sy_samples, "sample count");
  sy->add_option("--vocab", sy_vocab, "content vocabulary size");
  sy->add_option("--max-len", sy_maxlen, "max tokens per sample");
  sy->add_option("--frames-per-token", sy_fpt, "frames contributed by each token");
  sy->add_option("--seed", sy_seed, "corpus seed");
  sy->add_option("--skeleton", sy_skeleton, "skeleton config (default: built-in)");

  // plot
  auto* pl = app.add_subcommand("plot", "render a pose record to SVG frames + CSV");
  std::string pl_pose, pl_out = "plots", pl_skeleton, pl_record;
  std::uint64_t pl_seed = 0;
  pl->add_option("--pose", pl_pose, "pose file (dataset record format)")->required();
  pl->add_option("--out", pl_out, "output directory");
  pl->add_option("--skeleton", pl_skeleton, "skeleton config (default: built-in)");
  pl->add_option("--record", pl_record, "record id (default: first)");
  pl->add_option("--seed", pl_seed, "accepted for interface uniformity; rendering is pure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(train)) {
      if (train_seed_set) train_sets.push_back("train.seed=" + std::to_string(train_seed));
      return cmd_train(train_config, train_sets, train_resume);
    }
    if (app.got_subcommand(gen))
      return cmd_generate(gen_ckpt, gen_text, gen_frames, gen_seed, gen_mode, gen_iters,
                          gen_out, gen_id);
    if (app.got_subcommand(ev))
      return cmd_eval(ev_ckpt, ev_dataset, ev_report, ev_seed, ev_mode, ev_iters, ev_skeleton);
    if (app.got_subcommand(gc)) return cmd_gradcheck(gc_seed, gc_tol, gc_inject);
    if (app.got_subcommand(sy))
      return cmd_synth(sy_out, sy_samples, sy_seed, sy_vocab, sy_maxlen, sy_fpt, sy_skeleton);
    if (app.got_subcommand(pl)) return cmd_plot(pl_pose, pl_out, pl_skeleton, pl_record);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return 2;
  } catch (const SkeletonError& e) {
    std::cerr << "skeleton error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
}
