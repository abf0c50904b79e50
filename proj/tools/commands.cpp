#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "mmf/checkpoint.hpp"
#include "mmf/costmodel.hpp"
#include "mmf/error.hpp"
#include "mmf/fxp/runtime.hpp"
#include "mmf/model.hpp"
#include "mmf/trainer.hpp"

namespace mmf::cli {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::size_t> parse_lens(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    long long v = -1;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v <= 0) throw Error("--lens expects positive integers separated by commas");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw Error("--lens is empty");
  return out;
}

bool is_fixed_point(const Checkpoint& ck) { return (ck.flags & checkpoint_flags::kActBitsMask) != 0; }

Model load_float(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (is_fixed_point(ck)) throw Error(path + " is a fixed-point checkpoint; this command needs a float model");
  return model_from_checkpoint(ck);
}

// ---- init ------------------------------------------------------------------

struct InitOptions {
  std::string config = "toy";
  std::uint64_t seed = 0;
  std::string out;
  bool forget_floor = false;
  bool inference_only = false;
};

void run_init(const InitOptions& o) {
  ModelConfig cfg = ModelConfig::preset(o.config, o.seed);
  cfg.forget_floor = o.forget_floor;
  // The large shape only fits in memory without the float masters.
  const bool masters = !o.inference_only && o.config == "toy";
  const Model m = init_model(cfg, masters);
  save_model(o.out, m);
  std::printf("config=%s layers=%u width=%u glu_width=%u vocab=%u\n", o.config.c_str(), cfg.layers, cfg.width,
              cfg.glu_width, cfg.vocab);
  std::printf("parameters=%llu masters=%s\n", static_cast<unsigned long long>(cfg.parameter_count()),
              masters ? "yes" : "no");
  std::printf("wrote %s\n", o.out.c_str());
}

// ---- train -----------------------------------------------------------------

struct TrainOptions {
  std::string corpus;
  std::string out;
  std::string init;
  std::string resume;
  std::string loss_csv;
  TrainConfig cfg;
  std::uint64_t model_seed = 0;
  std::size_t log_every = 100;
};

void run_train(const TrainOptions& o) {
  const std::string text = read_file(o.corpus);
  const std::vector<std::int32_t> corpus = encode_bytes(text, false);

  Model model;
  std::size_t start = 0;
  if (!o.resume.empty()) {
    TrainingState st = load_training_state(o.resume);
    model = std::move(st.model);
    start = st.next_step;
  } else if (!o.init.empty()) {
    model = load_float(o.init);
  } else {
    model = init_model(ModelConfig::toy(o.model_seed));
  }
  if (!model.blocks.empty() && !model.blocks[0].mixer.proj_f.has_master()) {
    throw Error("cannot train an inference-only checkpoint");
  }
  const std::string csv = o.loss_csv.empty() ? o.out + ".loss.csv" : o.loss_csv;

  TrainResult res;
  try {
    res = train_toy(model, corpus, o.cfg, start, [&](const LossPoint& p) {
      if (o.log_every > 0 && p.step % o.log_every == 0) {
        std::fprintf(stderr, "step %zu lr %.6g loss %.6f\n", p.step, p.lr, p.loss);
      }
    });
  } catch (const Error&) {
    write_loss_csv(csv, res.curve, start > 0);
    throw;
  }
  write_loss_csv(csv, res.curve, start > 0);
  save_training_state(o.out, model, res.next_step);
  const double last = res.curve.empty() ? 0.0 : res.curve.back().loss;
  std::printf("steps=%zu final_loss=%.6f reached_target=%s\n", res.next_step, last,
              res.reached_target ? "yes" : "no");
  std::printf("wrote %s and %s\n", o.out.c_str(), csv.c_str());
}

// ---- generate --------------------------------------------------------------

struct GenerateOptions {
  std::string ckpt;
  std::string prompt;
  std::size_t n = 64;
  bool greedy = false;
  double temp = 0.0;
  std::uint64_t seed = 0;
  bool fxp = false;
};

void run_generate(const GenerateOptions& o) {
  const Checkpoint ck = read_checkpoint(o.ckpt);
  const std::vector<std::int32_t> prompt = encode_bytes(o.prompt, true);
  std::vector<std::int32_t> out;
  double elapsed = 0.0;
  if (o.fxp || is_fixed_point(ck)) {
    if (o.temp > 0.0) throw Error("the fixed-point path only decodes greedily");
    const fxp::QuantizedModel q =
        is_fixed_point(ck) ? fxp::quantized_from_checkpoint(ck) : fxp::quantize_model(model_from_checkpoint(ck));
    const auto t0 = Clock::now();
    out = fxp::generate_fxp(q, prompt, o.n);
    elapsed = seconds_since(t0);
  } else {
    const Model m = model_from_checkpoint(ck);
    const Sampler s = o.temp > 0.0 ? Sampler::with_temperature(static_cast<float>(o.temp), o.seed) : Sampler::greedy();
    const auto t0 = Clock::now();
    out = generate(m, prompt, o.n, s);
    elapsed = seconds_since(t0);
  }
  std::cout << decode_bytes(out) << '\n';
  std::cout << "tokens:";
  for (std::int32_t t : out) std::cout << ' ' << t;
  std::cout << '\n';
  std::fprintf(stderr, "generated %zu tokens in %.3f s (%.1f tokens/sec)\n", out.size(), elapsed,
               elapsed > 0.0 ? static_cast<double>(out.size()) / elapsed : 0.0);
}

// ---- bench -----------------------------------------------------------------

struct BenchOptions {
  std::string ckpt;
  std::string mode = "generate";
  std::string lens = "64,256,1024";
  std::string csv;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::size_t len;
  double tokens_per_sec;
  std::size_t state_bytes;
};

// Each length is run enough times to cover at least kBenchTokens tokens, and
// the best of three such runs is reported.
constexpr std::size_t kBenchTokens = 4096;

std::size_t repeats_for(std::size_t len) { return std::max<std::size_t>(1, kBenchTokens / len); }

BenchRow bench_generate(const Model& m, std::size_t len) {
  const std::int32_t start = kBosToken < static_cast<std::int32_t>(m.config.vocab) ? kBosToken : 0;
  std::size_t peak = 0;
  double best = 0.0;
  for (int run = 0; run < 3; ++run) {
    const std::size_t reps = repeats_for(len);
    const auto t0 = Clock::now();
    for (std::size_t k = 0; k < reps; ++k) {
      GenerationSession session(m);
      std::int32_t tok = start;
      peak = std::max(peak, session.state_bytes());
      for (std::size_t i = 0; i < len; ++i) {
        tok = argmax(session.step(tok));
        peak = std::max(peak, session.state_bytes());
      }
    }
    best = std::max(best, static_cast<double>(reps * len) / seconds_since(t0));
  }
  return {len, best, peak};
}

BenchRow bench_prefill(const Model& m, std::size_t len, std::uint64_t seed) {
  std::vector<std::int32_t> ids(len);
  std::uint64_t x = seed * 6364136223846793005ULL + 1442695040888963407ULL;
  for (auto& id : ids) {
    x = x * 6364136223846793005ULL + 1442695040888963407ULL;
    id = static_cast<std::int32_t>((x >> 33) % std::min<std::uint32_t>(m.config.vocab, 256));
  }
  std::size_t bytes = 0;
  double best = 0.0;
  for (int run = 0; run < 3; ++run) {
    const std::size_t reps = repeats_for(len);
    const auto t0 = Clock::now();
    for (std::size_t k = 0; k < reps; ++k) {
      const PrefillResult r = prefill(m, ids, false);
      bytes = 0;
      for (const RecurrentState& s : r.states) bytes += s.bytes();
    }
    best = std::max(best, static_cast<double>(reps * len) / seconds_since(t0));
  }
  return {len, best, bytes};
}

void run_bench(const BenchOptions& o) {
  if (o.mode != "prefill" && o.mode != "generate") throw Error("--mode must be prefill or generate");
  const std::vector<std::size_t> lens = parse_lens(o.lens);
  const Model m = load_float(o.ckpt);
  std::ostringstream table;
  table << "mode,seq_len,tokens_per_sec,peak_state_bytes\n";
  // Warm-up pass, not reported.
  if (o.mode == "prefill") {
    bench_prefill(m, 256, o.seed);
  } else {
    bench_generate(m, 256);
  }
  for (std::size_t len : lens) {
    const BenchRow r = o.mode == "prefill" ? bench_prefill(m, len, o.seed) : bench_generate(m, len);
    table << o.mode << ',' << r.len << ',' << r.tokens_per_sec << ',' << r.state_bytes << '\n';
  }
  std::cout << table.str();
  if (!o.csv.empty()) {
    std::ofstream f(o.csv);
    if (!f) throw Error("cannot write " + o.csv);
    f << table.str();
  }
}

// ---- quantize --------------------------------------------------------------

struct QuantizeOptions {
  std::string ckpt;
  std::string out;
  std::string mode = "w8a16";
};

void run_quantize(const QuantizeOptions& o) {
  const fxp::Precision p = fxp::parse_precision(o.mode);
  Model m = load_float(o.ckpt);
  const fxp::QuantizedModel q = fxp::quantize_model(m, p);
  write_checkpoint(o.out, fxp::to_checkpoint(q));
  std::printf("mode=%s%s\n", fxp::precision_name(p), p == fxp::Precision::W8A8 ? " (diagnostic)" : "");
  std::printf("layer,zero_fraction\n");
  double zeros = 0.0, total = 0.0;
  for (const NamedLinear& nl : linear_layers(m)) {
    const TernaryMatrix& w = nl.layer->ternary();
    const double z = zero_fraction(w);
    const auto n = static_cast<double>(w.rows() * w.cols());
    zeros += z * n;
    total += n;
    std::printf("%s,%.4f\n", nl.name.c_str(), z);
  }
  std::printf("overall,%.4f\n", total > 0 ? zeros / total : 0.0);
  std::printf("wrote %s\n", o.out.c_str());
}

// ---- mismatch --------------------------------------------------------------

struct MismatchOptions {
  std::string ckpt;
  std::string prompts;
  std::string mode = "w8a16";
};

void run_mismatch(const MismatchOptions& o) {
  const fxp::Precision p = fxp::parse_precision(o.mode);
  const Model m = load_float(o.ckpt);
  std::vector<std::vector<std::int32_t>> prompts;
  std::istringstream lines(read_file(o.prompts));
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) prompts.push_back(encode_bytes(line, true));
  }
  if (prompts.empty()) throw Error("no prompts in " + o.prompts);
  const fxp::MismatchReport r = fxp::measure_mismatch(m, fxp::quantize_model(m, p), prompts);
  std::printf("mode=%s%s prompts=%zu positions=%zu\n", fxp::precision_name(p),
              p == fxp::Precision::W8A8 ? " (diagnostic)" : "", prompts.size(), r.positions);
  std::printf("mean_cosine=%.6f token_agreement=%.4f\n", r.mean_cosine, r.token_agreement);
  std::printf("mode,mean_cosine,token_agreement,positions\n%s,%.6f,%.4f,%zu\n", fxp::precision_name(p),
              r.mean_cosine, r.token_agreement, r.positions);
}

// ---- costmodel -------------------------------------------------------------

struct CostOptions {
  std::string profile;
  std::string preset;
};

void run_costmodel(const CostOptions& o) {
  if (o.profile.empty() == o.preset.empty()) throw Error("give exactly one of --profile or --preset");
  const HardwareProfile sys = o.preset.empty() ? profile_from_json(read_file(o.profile)) : preset_profile(o.preset);
  const HardwareProfile chip = sys.with_slowdown(1.0);
  std::printf("%s\n", profile_to_json(sys).c_str());
  std::printf("setting,prefill_tokens_per_sec,generate_tokens_per_sec,prefill_mj_per_token,generate_mj_per_token\n");
  for (const auto& [name, p] : {std::pair<const char*, const HardwareProfile&>{"1-chip", chip}, {"system", sys}}) {
    std::printf("%s,%.2f,%.2f,%.3f,%.2f\n", name, prefill_throughput(p), generate_throughput(p),
                1e3 * energy_per_token(p, Phase::Prefill), 1e3 * energy_per_token(p, Phase::Generate));
  }
}

}  // namespace

void register_commands(CLI::App& app) {
  {
    auto o = std::make_shared<InitOptions>();
    auto* c = app.add_subcommand("init", "Write a randomly initialized checkpoint");
    c->add_option("--config", o->config, "toy or 370M-shape")->check(CLI::IsMember({"toy", "370M-shape"}));
    c->add_option("--seed", o->seed, "Initialization seed");
    c->add_option("--out", o->out, "Output checkpoint")->required();
    c->add_flag("--forget-floor", o->forget_floor, "Depth-dependent lower bound on forget gates");
    c->add_flag("--inference-only", o->inference_only, "Keep only ternary weights (always on for 370M-shape)");
    c->callback([o] { run_init(*o); });
  }
  {
    auto o = std::make_shared<TrainOptions>();
    o->cfg.lr0 = 4e-3;
    auto* c = app.add_subcommand("train", "Train the toy model on a byte corpus");
    c->add_option("--corpus", o->corpus, "Training text")->required()->check(CLI::ExistingFile);
    c->add_option("--steps", o->cfg.steps, "Total schedule length");
    c->add_option("--lr", o->cfg.lr0, "Peak learning rate");
    c->add_option("--out", o->out, "Output checkpoint")->required();
    c->add_option("--batch", o->cfg.batch, "Sequences per step");
    c->add_option("--seq-len", o->cfg.seq_len, "Tokens per sequence");
    c->add_option("--seed", o->cfg.seed, "Data-order seed");
    c->add_option("--model-seed", o->model_seed, "Initialization seed when starting fresh");
    c->add_option("--clip", o->cfg.clip, "Global gradient-norm clip (0 disables)");
    c->add_option("--target-loss", o->cfg.target_loss, "Stop early below this loss");
    c->add_option("--init", o->init, "Start from this float checkpoint")->check(CLI::ExistingFile);
    c->add_option("--resume", o->resume, "Continue a run saved by train")->check(CLI::ExistingFile);
    c->add_option("--loss-csv", o->loss_csv, "Loss curve path (default: <out>.loss.csv)");
    c->add_option("--log-every", o->log_every, "Progress line interval (0: silent)");
    c->callback([o] { run_train(*o); });
  }
  {
    auto o = std::make_shared<GenerateOptions>();
    auto* c = app.add_subcommand("generate", "Decode text from a checkpoint");
    c->add_option("--ckpt", o->ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--prompt", o->prompt, "Prompt text");
    c->add_option("--n", o->n, "Tokens to generate");
    auto* greedy = c->add_flag("--greedy", o->greedy, "Greedy decoding (default)");
    auto* temp = c->add_option("--temp", o->temp, "Sampling temperature")->check(CLI::PositiveNumber);
    c->add_option("--seed", o->seed, "Sampling seed");
    c->add_flag("--fxp", o->fxp, "Run the W8A16 fixed-point path");
    greedy->excludes(temp);
    c->callback([o] { run_generate(*o); });
  }
  {
    auto o = std::make_shared<BenchOptions>();
    auto* c = app.add_subcommand("bench", "Measure throughput and recurrent state size");
    c->add_option("--ckpt", o->ckpt, "Float checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--mode", o->mode, "prefill or generate")->check(CLI::IsMember({"prefill", "generate"}));
    c->add_option("--lens", o->lens, "Comma-separated sequence lengths");
    c->add_option("--csv", o->csv, "Also write the table here");
    c->add_option("--seed", o->seed, "Seed for prefill token ids");
    c->callback([o] { run_bench(*o); });
  }
  {
    auto o = std::make_shared<QuantizeOptions>();
    auto* c = app.add_subcommand("quantize", "Convert a float checkpoint to fixed point");
    c->add_option("--ckpt", o->ckpt, "Float checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--out", o->out, "Output checkpoint")->required();
    c->add_option("--mode", o->mode, "w8a16, or w8a8 (diagnostic)")->check(CLI::IsMember({"w8a16", "w8a8"}));
    c->callback([o] { run_quantize(*o); });
  }
  {
    auto o = std::make_shared<MismatchOptions>();
    auto* c = app.add_subcommand("mismatch", "Compare float and fixed-point logits");
    c->add_option("--ckpt", o->ckpt, "Float checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--prompts", o->prompts, "One prompt per line")->required()->check(CLI::ExistingFile);
    c->add_option("--mode", o->mode, "w8a16 or w8a8")->check(CLI::IsMember({"w8a16", "w8a8"}));
    c->callback([o] { run_mismatch(*o); });
  }
  {
    auto o = std::make_shared<CostOptions>();
    auto* c = app.add_subcommand("costmodel", "Analytic throughput and energy report");
    c->add_option("--profile", o->profile, "JSON hardware profile")->check(CLI::ExistingFile);
    c->add_option("--preset", o->preset, "Built-in profile")->check(CLI::IsMember({"loihi-370m"}));
    c->callback([o] { run_costmodel(*o); });
  }
}

}  // namespace mmf::cli
