#include "tdm/training.hpp"

#include <chrono>
#include <memory>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tdm/checkpoint.hpp"
#include "tdm/losses.hpp"
#include "tdm/pose_tensor.hpp"
#include "tdm/rng.hpp"

namespace tdm {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0))
      throw TrainingError(std::string("train.") + name + " must be positive");
  };
  positive(learning_rate, "learning_rate");
  positive(beta1, "beta1");
  positive(beta2, "beta2");
  positive(adam_epsilon, "adam_epsilon");
  if (beta1 >= 1.0 || beta2 >= 1.0)
    throw TrainingError("train.beta1/beta2 must be below 1");
  if (batch_size < 1) throw TrainingError("train.batch_size must be positive");
  if (max_steps < 0) throw TrainingError("train.max_steps must be >= 0");
  if (checkpoint_interval < 1) throw TrainingError("train.checkpoint_interval must be positive");
  if (log_interval < 1) throw TrainingError("train.log_interval must be positive");
  if (lambda < 0.0) throw TrainingError("train.lambda must be >= 0");
}

AdamState AdamState::init_for(const Denoiser& model) {
  AdamState s;
  for (const auto& [name, t] : model.parameters()) {
    s.m.emplace_back(static_cast<size_t>(t.size()), 0.0);
    s.v.emplace_back(static_cast<size_t>(t.size()), 0.0);
  }
  return s;
}

void adam_update(Tensor& param, const std::vector<double>& grad, std::vector<double>& m,
                 std::vector<double>& v, long step, const TrainConfig& cfg) {
  const size_t n = static_cast<size_t>(param.size());
  if (grad.size() != n || m.size() != n || v.size() != n)
    throw TrainingError("adam_update: parameter/gradient/moment sizes disagree (" +
                        std::to_string(n) + " vs " + std::to_string(grad.size()) + ")");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  double* p = param.data();
  for (size_t i = 0; i < n; ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
  }
}

LossValues train_step(const std::vector<const SamplePair*>& batch, Denoiser& model,
                      AdamState& adam, const NoiseSchedule& sched,
                      const SkeletonTopology& topo, const TrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw TrainingError("train_step: empty batch");

  Tensor loss_acc;
  LossValues values;
  for (const SamplePair* sample : batch) {
    const PoseSequence& p0 = sample->pose;
    const int t = static_cast<int>(rng.uniform_int(1, sched.total_steps));
    std::vector<double> eps(p0.coords.size());
    for (double& e : eps) e = rng.normal();
    const PoseSequence pt = forward_noise(p0, t, eps, sched);

    const Condition cond = model.condition(sample->token_ids, t, sched.total_steps);
    Tensor pred = model.denoise(pose_to_tensor(pt), cond, &p0.mask);
    LossTerms terms = total_loss(pred, pose_to_tensor(p0), p0.mask, topo, cfg.lambda);
    values.joint += terms.joint.value();
    values.bone += terms.bone.value();
    loss_acc = loss_acc.defined() ? add(loss_acc, terms.total) : terms.total;
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Tensor loss = scale(loss_acc, inv_b);
  values.total = loss.value();
  values.joint *= inv_b;
  values.bone *= inv_b;
  if (!std::isfinite(values.total))
    throw TrainingError("non-finite loss at adam step " + std::to_string(adam.step + 1) +
                        " (joint=" + std::to_string(values.joint) +
                        ", bone=" + std::to_string(values.bone) + ")");

  model.zero_all_grads();
  backward(loss);

  auto& params = model.parameters();
  // gradients for parameters untouched by this graph stay zero
  std::vector<std::vector<double>> grads(params.size());
  double norm_sq = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    if (p.has_grad()) {
      grads[i] = p.grad();
      for (double g : grads[i]) norm_sq += g * g;
    } else {
      grads[i].assign(static_cast<size_t>(p.size()), 0.0);
    }
  }
  if (cfg.grad_clip > 0.0) {
    const double norm = std::sqrt(norm_sq);
    if (norm > cfg.grad_clip) {
      const double s = cfg.grad_clip / norm;
      for (auto& g : grads)
        for (double& x : g) x *= s;
    }
  }

  ++adam.step;
  for (size_t i = 0; i < params.size(); ++i)
    adam_update(params[i].second, grads[i], adam.m[i], adam.v[i], adam.step, cfg);

  for (const auto& [name, p] : params)
    if (!all_finite(p))
      throw TrainingError("parameter '" + name + "' became non-finite at adam step " +
                          std::to_string(adam.step));
  return values;
}

namespace {

std::string checkpoint_name(long step) {
  std::ostringstream oss;
  oss << "checkpoint_step" << std::setw(6) << std::setfill('0') << step << ".tdm";
  return oss.str();
}

}  // namespace

TrainRunResult run_training(const Dataset& dataset, const SkeletonTopology& topo,
                            const DenoiserConfig& model_cfg, int schedule_steps,
                            double schedule_offset, const TrainConfig& cfg,
                            const std::string& out_dir,
                            const std::string& resume_checkpoint) {
  cfg.validate();
  model_cfg.validate();
  if (dataset.empty()) throw TrainingError("run_training: dataset is empty");
  for (const auto& s : dataset.samples) s.pose.validate(topo);

  const NoiseSchedule sched = cosine_schedule(schedule_steps, schedule_offset);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw TrainingError("cannot create output directory '" + out_dir + "': " +
                              ec.message());

  Vocabulary vocab;
  std::unique_ptr<Denoiser> model;
  AdamState adam;
  Rng rng(cfg.seed);
  long start_step = 0;

  if (resume_checkpoint.empty()) {
    vocab = build_vocabulary(dataset);
    Rng init_rng(Rng::derive(cfg.seed, 0x1217));
    model = std::make_unique<Denoiser>(model_cfg, vocab.size(), topo.joint_count(), init_rng);
    adam = AdamState::init_for(*model);
  } else {
    Checkpoint ckpt = load_checkpoint(resume_checkpoint);
    if (!ckpt.train_state)
      throw TrainingError("checkpoint '" + resume_checkpoint + "' carries no training state");
    vocab = ckpt.vocab;
    model = std::make_unique<Denoiser>(model_from_checkpoint(ckpt));
    adam = AdamState::init_for(*model);
    auto& params = model->parameters();
    for (size_t i = 0; i < params.size(); ++i) {
      adam.m[i] = ckpt.find("opt.m." + params[i].first).to_vector();
      adam.v[i] = ckpt.find("opt.v." + params[i].first).to_vector();
    }
    adam.step = ckpt.train_state->adam_step;
    start_step = ckpt.train_state->step;
    rng.set_state_hex(ckpt.train_state->rng_state_hex);
  }

  // resolve token ids against the active vocabulary
  std::vector<SamplePair> samples = dataset.samples;
  for (auto& s : samples) {
    s.token_ids = vocab.encode(s.tokens);
    if (s.token_ids.empty())
      throw TrainingError("sample '" + s.id + "' has no usable tokens");
  }

  auto write_ckpt = [&](const std::string& name) {
    Checkpoint ckpt = checkpoint_from_model(*model, vocab, schedule_steps, schedule_offset);
    for (size_t i = 0; i < model->parameters().size(); ++i) {
      const auto& pname = model->parameters()[i].first;
      const auto& shape = model->parameters()[i].second.shape();
      ckpt.tensors.emplace_back("opt.m." + pname, Tensor::from_values(shape, adam.m[i]));
      ckpt.tensors.emplace_back("opt.v." + pname, Tensor::from_values(shape, adam.v[i]));
    }
    TrainState ts;
    ts.step = adam.step;
    ts.adam_step = adam.step;
    ts.rng_state_hex = rng.state_hex();
    ckpt.train_state = ts;
    const std::string path = (fs::path(out_dir) / name).string();
    save_checkpoint(path, ckpt);
    return path;
  };

  std::ofstream log((fs::path(out_dir) / "metrics.log").string(), std::ios::app);
  if (!log) throw TrainingError("cannot open metrics log in '" + out_dir + "'");
  log << std::setprecision(17);

  TrainRunResult result;
  if (start_step == 0) result.checkpoints.push_back(write_ckpt(checkpoint_name(0)));

  const auto t0 = std::chrono::steady_clock::now();
  const int n = dataset.size();
  for (long step = start_step + 1; step <= cfg.max_steps; ++step) {
    std::vector<const SamplePair*> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int j = 0; j < cfg.batch_size; ++j) {
      const long idx = ((step - 1) * cfg.batch_size + j) % n;
      batch.push_back(&samples[static_cast<size_t>(idx)]);
    }
    const LossValues lv = train_step(batch, *model, adam, sched, topo, cfg, rng);
    result.history.push_back(lv);
    result.final_loss = lv;
    result.steps_run = step;

    if (step % cfg.log_interval == 0) {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      log << "step=" << step << " total=" << lv.total << " joint=" << lv.joint
          << " bone=" << lv.bone << " wall_ms=" << ms << "\n";
      log.flush();
    }
    if (step % cfg.checkpoint_interval == 0 && step != cfg.max_steps)
      result.checkpoints.push_back(write_ckpt(checkpoint_name(step)));
    if (cfg.target_joint_loss > 0.0 && lv.joint < cfg.target_joint_loss) break;
  }

  result.final_checkpoint = write_ckpt("checkpoint_final.tdm");
  result.checkpoints.push_back(result.final_checkpoint);
  return result;
}

}  // namespace tdm
