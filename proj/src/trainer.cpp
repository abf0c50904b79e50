#include "mmf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "mmf/checkpoint.hpp"
#include "mmf/error.hpp"

namespace mmf {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw Error("train config: lr0 must be positive");
  if (steps < 1) throw Error("train config: steps must be at least 1");
  if (batch < 1) throw Error("train config: batch must be at least 1");
  if (seq_len < 1) throw Error("train config: seq_len must be at least 1");
  if (clip < 0.0) throw Error("train config: clip must be non-negative");
}

double lr_at(const TrainConfig& config, std::size_t step) {
  if (step > config.steps) throw Error("lr_at: step beyond the schedule");
  const double progress = static_cast<double>(step) / static_cast<double>(config.steps);
  const double floor = 0.1 * config.lr0;
  double lr = floor + 0.5 * (config.lr0 - floor) * (1.0 + std::cos(std::numbers::pi * progress));
  if (2 * step >= config.steps) lr *= 0.5;
  return lr;
}

Batch sample_batch(std::span<const std::int32_t> corpus, const TrainConfig& config, std::size_t step) {
  if (corpus.size() < config.seq_len + 1) throw Error("corpus is shorter than seq_len + 1 tokens");
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> start(0, corpus.size() - config.seq_len - 1);
  Batch b;
  for (std::size_t i = 0; i < config.batch; ++i) {
    const std::size_t s = start(rng);
    b.inputs.emplace_back(corpus.begin() + static_cast<std::ptrdiff_t>(s),
                          corpus.begin() + static_cast<std::ptrdiff_t>(s + config.seq_len));
    b.targets.emplace_back(corpus.begin() + static_cast<std::ptrdiff_t>(s + 1),
                           corpus.begin() + static_cast<std::ptrdiff_t>(s + config.seq_len + 1));
  }
  return b;
}

double batch_loss(const Model& model, const Batch& batch, ModelGrads* grads) {
  if (batch.inputs.size() != batch.targets.size() || batch.inputs.empty()) throw Error("batch: malformed");
  std::size_t total = 0;
  for (const auto& t : batch.targets) total += t.size();
  const double norm = 1.0 / static_cast<double>(total);
  double loss = 0.0;
  bool first = true;
  for (std::size_t s = 0; s < batch.inputs.size(); ++s) {
    const auto& targets = batch.targets[s];
    if (targets.size() != batch.inputs[s].size()) throw Error("batch: input/target length mismatch");
    check_tokens(model, targets);
    ModelCache cache = forward_train(model, batch.inputs[s]);
    Matrix d_logits(cache.logits.rows, cache.logits.cols);
    for (std::size_t t = 0; t < cache.logits.rows; ++t) {
      const auto row = cache.logits.row(t);
      const float mx = row[static_cast<std::size_t>(argmax(row))];
      double z = 0.0;
      for (float v : row) z += std::exp(static_cast<double>(v - mx));
      const auto y = static_cast<std::size_t>(targets[t]);
      loss += (std::log(z) - static_cast<double>(row[y] - mx)) * norm;
      if (grads) {
        for (std::size_t v = 0; v < row.size(); ++v) {
          const double p = std::exp(static_cast<double>(row[v] - mx)) / z;
          d_logits(t, v) = static_cast<float>((p - (v == y ? 1.0 : 0.0)) * norm);
        }
      }
    }
    if (grads) {
      ModelGrads g = backward(model, cache, d_logits);
      if (first) {
        *grads = std::move(g);
      } else {
        grads->accumulate(g);
      }
      first = false;
    }
  }
  return loss;
}

double grad_norm(ModelGrads& grads) {
  double sq = 0.0;
  for (const ParamRef& p : parameters(grads)) {
    for (float v : p.values) sq += static_cast<double>(v) * v;
  }
  return std::sqrt(sq);
}

double train_step(Model& model, const Batch& batch, double lr, double clip) {
  ModelGrads grads;
  const double loss = batch_loss(model, batch, &grads);
  if (!std::isfinite(loss)) throw Error("training diverged: non-finite loss");
  const double norm = grad_norm(grads);
  if (!std::isfinite(norm)) throw Error("training diverged: non-finite gradient norm");
  if (lr == 0.0) return loss;
  const double factor = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  const auto step = static_cast<float>(lr * factor);

  auto params = parameters(model);
  auto g = parameters(grads);
  for (const ParamRef& p : params) {
    auto it = std::find_if(g.begin(), g.end(), [&](const ParamRef& q) { return q.name == p.name; });
    if (it == g.end() || it->values.size() != p.values.size()) throw Error("no gradient for parameter " + p.name);
    for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] -= step * it->values[i];
  }
  model.refresh();
  return loss;
}

TrainResult train_toy(Model& model, std::span<const std::int32_t> corpus, const TrainConfig& config,
                      std::size_t start_step, const StepCallback& on_step) {
  config.validate();
  if (corpus.size() < config.seq_len + 1) throw Error("corpus is shorter than seq_len + 1 tokens");
  check_tokens(model, corpus);
  TrainResult res;
  res.next_step = start_step;
  for (std::size_t step = start_step; step < config.steps; ++step) {
    const double lr = lr_at(config, step);
    const double loss = train_step(model, sample_batch(corpus, config, step), lr, config.clip);
    const LossPoint pt{step, lr, loss};
    res.curve.push_back(pt);
    if (on_step) on_step(pt);
    res.next_step = step + 1;
    if (config.target_loss > 0.0 && loss < config.target_loss) {
      res.reached_target = true;
      break;
    }
  }
  return res;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossPoint> curve, bool append) {
  const bool header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  if (header) f << "step,lr,loss\n";
  f.precision(9);
  for (const LossPoint& p : curve) f << p.step << ',' << p.lr << ',' << p.loss << '\n';
}

void save_training_state(const std::filesystem::path& path, const Model& model, std::size_t next_step) {
  Checkpoint ck = to_checkpoint(model);
  const std::int32_t lo_hi[2] = {static_cast<std::int32_t>(next_step & 0x7fffffff),
                                 static_cast<std::int32_t>(next_step >> 31)};
  ck.add(TensorRecord::integers("trainer.step", TensorKind::Int32, {2}, lo_hi));
  write_checkpoint(path, ck);
}

TrainingState load_training_state(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  TrainingState st{model_from_checkpoint(ck), 0};
  if (const TensorRecord* r = ck.try_find("trainer.step")) {
    const auto v = r->as_integers();
    if (v.size() != 2 || v[0] < 0 || v[1] < 0) throw Error("checkpoint: bad trainer.step record");
    st.next_step = static_cast<std::size_t>(v[0]) | (static_cast<std::size_t>(v[1]) << 31);
  }
  return st;
}

}  // namespace mmf
