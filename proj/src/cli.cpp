#include "fastpose/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fastpose/bench.hpp"
#include "fastpose/datio.hpp"
#include "fastpose/distiller.hpp"
#include "fastpose/errors.hpp"
#include "fastpose/evaluation.hpp"
#include "fastpose/model_io.hpp"
#include "fastpose/pruner.hpp"
#include "fastpose/rasterizer.hpp"
#include "fastpose/toy_gdrn.hpp"

namespace fastpose::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  std::string format = "json";
};

// Writes to --out when given, otherwise to the output stream.
void emit(const Globals& g, std::ostream& out, const std::string& text) {
  if (g.out.empty()) {
    out << text;
  } else {
    write_text_file(g.out, text);
  }
}

fs::path require_out(const Globals& g, const char* what) {
  if (g.out.empty()) fail(ErrorCode::kInvalidConfig, std::string("--out is required to write the ") + what);
  return g.out;
}

fs::path sibling(const fs::path& model_path, const std::string& suffix) {
  fs::path p = model_path;
  p.replace_filename(model_path.stem().string() + suffix);
  return p;
}

// Meshes are named obj_<id>.ply (any zero padding).
std::map<int, ObjectModel> load_meshes(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::kIoError, "mesh directory not found: " + dir.string());
  static const std::regex name("obj_0*([0-9]+)\\.ply");
  std::set<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) files.insert(entry.path());
  std::map<int, ObjectModel> models;
  for (const auto& path : files) {
    std::smatch m;
    const std::string fname = path.filename().string();
    if (!std::regex_match(fname, m, name)) continue;
    try {
      models.emplace(std::stoi(m[1].str()), parse_ply(read_text_file(path)));
    } catch (const Error& e) {
      throw Error(e.code(), path.filename().string() + ": " + e.message());
    }
  }
  return models;
}

int env_threads() {
  const char* v = std::getenv("FASTPOSE_THREADS");
  if (!v || !*v) return 1;
  try {
    const int n = std::stoi(v);
    return n >= 1 ? n : 1;
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidConfig, std::string("FASTPOSE_THREADS is not an integer: ") + v);
  }
}

// ----- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string gt, models, results, pgm_dir;
};

void run_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  const GroundTruthSet gt = parse_gt_json(read_text_file(a.gt));
  const auto estimates = parse_result_csv(read_text_file(a.results));
  const auto models = apply_object_meta(load_meshes(a.models), gt.objects);
  const auto result = evaluate_dataset(gt.records, estimates, models, diameter_overrides(gt.objects), env_threads());
  if (!a.pgm_dir.empty()) {
    for (std::size_t i = 0; i < gt.records.size(); ++i) {
      const auto& r = gt.records[i];
      const auto map = render_distance_map(models.at(r.obj_id), r.pose, r.camera);
      write_text_file(fs::path(a.pgm_dir) / ("gt_" + std::to_string(i) + "_s" + std::to_string(r.scene_id) + "_i" +
                                             std::to_string(r.im_id) + "_o" + std::to_string(r.obj_id) + ".pgm"),
                      distance_map_to_pgm(map));
    }
  }
  emit(g, out, g.format == "csv" ? ar_report_to_csv(result.report) : ar_report_to_json(result.report));
}

// ----- build ----------------------------------------------------------------

struct BuildArgs {
  std::string config;
  std::string kind = "gdrn";
};

ToyGdrnConfig parse_toy_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kSchemaViolation, std::string("at /: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kSchemaViolation, "at /: expected an object");
  ToyGdrnConfig c;
  const std::map<std::string, int*> ints = {{"backbone_width", &c.backbone_width}, {"head_width", &c.head_width},
                                            {"pnp_width", &c.pnp_width},           {"regions", &c.regions},
                                            {"d_head", &c.d_head},                 {"d_pnp", &c.d_pnp},
                                            {"input_size", &c.input_size}};
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      if (!value.is_number_unsigned()) fail(ErrorCode::kSchemaViolation, "at /seed: expected a non-negative integer");
      c.seed = value.get<std::uint64_t>();
      continue;
    }
    auto it = ints.find(key);
    if (it == ints.end()) fail(ErrorCode::kSchemaViolation, "at /" + key + ": unknown config field");
    if (!value.is_number_integer()) fail(ErrorCode::kSchemaViolation, "at /" + key + ": expected an integer");
    *it->second = value.get<int>();
  }
  return c;
}

json config_json(const ToyGdrnConfig& c) {
  return {{"backbone_width", c.backbone_width}, {"head_width", c.head_width}, {"pnp_width", c.pnp_width},
          {"regions", c.regions},               {"d_head", c.d_head},         {"d_pnp", c.d_pnp},
          {"input_size", c.input_size},         {"seed", c.seed}};
}

void run_build(const Globals& g, const BuildArgs& a) {
  const fs::path out_path = require_out(g, "model");
  ToyGdrnConfig c = a.config.empty() ? ToyGdrnConfig{} : parse_toy_config(read_text_file(a.config));
  if (g.seed_given) c.seed = g.seed;
  c.validate();
  ModelFile m;
  if (a.kind == "gdrn") {
    m.graph = build_toy_gdrn(c);
  } else if (a.kind == "head") {
    m.graph = build_toy_head(c);
  } else {
    m.graph = build_backbone_stub(c.backbone_width, c.input_size, c.seed);
  }
  m.meta = {{"kind", a.kind}, {"config", config_json(c)}, {"seed", c.seed}};
  save_model(out_path, m);
}

// ----- prune ----------------------------------------------------------------

struct PruneArgs {
  std::string model, plan;
  int degree_head = 0;
  int degree_pnp = 0;
  int granularity_head = kHeadGranularity;
  int granularity_pnp = kPnpGranularity;
  bool include_bias = false;
};

void run_prune(const Globals& g, const PruneArgs& a) {
  const fs::path out_path = require_out(g, "pruned model");
  ModelFile m = load_model(a.model);
  PruneConfig pc;
  pc.target = PruneTarget::kBoth;
  pc.d_head = a.degree_head;
  pc.d_pnp = a.degree_pnp;
  pc.granularity_head = a.granularity_head;
  pc.granularity_pnp = a.granularity_pnp;
  pc.include_bias = a.include_bias;
  const PrunePlan plan = plan_prune(m.graph, pc);
  ModelFile pruned{apply_prune(m.graph, plan), m.meta};
  pruned.meta["pruned"] = {{"degree_head", a.degree_head},
                           {"degree_pnp", a.degree_pnp},
                           {"granularity_head", a.granularity_head},
                           {"granularity_pnp", a.granularity_pnp},
                           {"include_bias", a.include_bias},
                           {"source", fs::path(a.model).filename().string()}};
  save_model(out_path, pruned);
  write_text_file(a.plan.empty() ? sibling(out_path, ".plan.json") : fs::path(a.plan), prune_plan_to_json(plan));
}

// ----- finetune / distill ---------------------------------------------------

struct TrainArgs {
  std::string model, reference, teacher, student, trace;
  int epochs = 50;
  int samples = 64;
  int batch_size = 0;
  double lr = 0.01;
  double temperature = 1.0;
  std::string loss = "mse";
  std::string kl_scale = "tau";
  std::string norm = "pixel-l2";
};

DistillConfig train_config(const Globals& g, const TrainArgs& a) {
  DistillConfig c;
  c.temperature = a.temperature;
  c.loss_kind = a.loss == "kl" ? LossKind::kKl : LossKind::kMse;
  c.learning_rate = a.lr;
  c.epochs = a.epochs;
  c.batch_size = a.batch_size;
  c.seed = g.seed;
  c.kl_scale = a.kl_scale == "tau2" ? KlScale::kTauSquared : KlScale::kTau;
  c.feature_norm = a.norm == "channel-std" ? FeatureNorm::kChannelStandardize : FeatureNorm::kPixelL2;
  c.validate();
  if (a.samples < 1) fail(ErrorCode::kInvalidConfig, "--samples must be >= 1");
  return c;
}

json train_meta(const DistillConfig& c, const TrainArgs& a) {
  return {{"epochs", c.epochs},  {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"samples", a.samples}, {"seed", c.seed},                  {"temperature", c.temperature},
          {"loss", a.loss},       {"kl_scale", a.kl_scale},          {"norm", a.norm}};
}

void run_finetune(const Globals& g, const TrainArgs& a) {
  const fs::path out_path = require_out(g, "fine-tuned model");
  const DistillConfig c = train_config(g, a);
  ModelFile pruned = load_model(a.model);
  const ModelFile reference = load_model(a.reference);
  const auto inputs = random_inputs(reference.graph.input_shape(), a.samples, Rng(g.seed).split("finetune-inputs"));
  const TrainResult r = fine_tune(pruned.graph, reference.graph, c, fixed_batch(inputs));
  pruned.graph = r.graph;
  pruned.meta["finetune"] = train_meta(c, a);
  save_model(out_path, pruned);
  write_text_file(a.trace.empty() ? sibling(out_path, ".loss.csv") : fs::path(a.trace), loss_trace_csv(r.loss_trace));
}

void run_distill(const Globals& g, const TrainArgs& a) {
  const fs::path out_path = require_out(g, "student model");
  const DistillConfig c = train_config(g, a);
  const ModelFile teacher = load_model(a.teacher);
  ModelFile student = load_model(a.student);
  const Shape teacher_out = teacher.graph.output_shape();
  const Shape student_out = student.graph.output_shape();
  if (teacher.graph.input_shape() != student.graph.input_shape() || teacher_out.h != student_out.h ||
      teacher_out.w != student_out.w) {
    fail(ErrorCode::kShapeMismatch, "teacher " + to_string(teacher_out) + " and student " + to_string(student_out) +
                                        " features differ in input or spatial shape");
  }
  const Adapter adapter = Adapter::create(student_out, teacher_out.c, Rng(g.seed).split("adapter").key());
  const auto inputs = random_inputs(student.graph.input_shape(), a.samples, Rng(g.seed).split("distill-inputs"));
  const TrainResult r = distill_train(teacher.graph, student.graph, adapter, c, fixed_batch(inputs));
  student.graph = r.graph;
  student.meta["distill"] = train_meta(c, a);
  save_model(out_path, student);
  save_model(sibling(out_path, ".adapter.json"), ModelFile{r.adapter.graph, {{"role", "adapter"}}});
  write_text_file(a.trace.empty() ? sibling(out_path, ".loss.csv") : fs::path(a.trace), loss_trace_csv(r.loss_trace));
}

// ----- bench / report -------------------------------------------------------

struct BenchArgs {
  std::string model, label;
  int iterations = kDefaultIterations;
  int warmup = kDefaultWarmup;
  double ar = 0.0;
};

void run_bench(const Globals& g, const BenchArgs& a, std::ostream& out) {
  const ModelFile m = load_model(a.model);
  const std::string label = a.label.empty() ? fs::path(a.model).stem().string() : a.label;
  const LatencyRecord r = measure_latency(m.graph, m.graph.input_shape(), a.iterations, a.warmup, label);
  emit(g, out, g.format == "csv" ? latency_record_csv(r, a.ar) : latency_record_json(r));
}

void run_report(const Globals& g, const std::string& runs, std::ostream& out) {
  const auto rows = parse_runs_csv(read_text_file(runs));
  if (rows.empty()) fail(ErrorCode::kEmptyInput, "runs table has no rows");
  emit(g, out, g.format == "csv" ? report_csv(rows) : report_json(rows));
}

void add_globals(CLI::App& app, Globals& g) {
  app.add_option("--seed", g.seed, "Seed for every random stream (default 0)")
      ->each([&g](const std::string&) { g.seed_given = true; });
  app.add_option("--out", g.out, "Output path (model path for build/prune/finetune/distill; stdout otherwise)");
  app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fastpose: pose-metric evaluation, pruning, distillation and latency benchmarking"};
  app.name("fastpose");
  app.require_subcommand(1);
  Globals g;
  add_globals(app, g);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a result CSV against ground truth and meshes");
  eval->add_option("--gt", eval_args.gt, "Ground-truth JSON")->required();
  eval->add_option("--models", eval_args.models, "Directory of obj_<id>.ply meshes")->required();
  eval->add_option("--results", eval_args.results, "Result CSV (scene_id,im_id,obj_id,score,R,t,time)")->required();
  eval->add_option("--pgm-dir", eval_args.pgm_dir, "Write each GT distance map as a PGM into this directory");

  BuildArgs build_args;
  auto* build = app.add_subcommand("build", "Build a seeded toy graph and write model files");
  build->add_option("--config", build_args.config, "JSON config (backbone_width, head_width, pnp_width, regions, d_head, d_pnp, input_size, seed)");
  build->add_option("--kind", build_args.kind, "Graph to build")->check(CLI::IsMember({"gdrn", "head", "backbone"}));

  PruneArgs prune_args;
  auto* prune = app.add_subcommand("prune", "L1-prune filter groups of head and Patch-PnP convs");
  prune->add_option("--model", prune_args.model, "Input model JSON")->required();
  prune->add_option("--degree-head", prune_args.degree_head, "Groups removed per head conv")->check(CLI::NonNegativeNumber);
  prune->add_option("--degree-pnp", prune_args.degree_pnp, "Groups removed per Patch-PnP conv")->check(CLI::NonNegativeNumber);
  prune->add_option("--granularity-head", prune_args.granularity_head, "Filters per head group")->check(CLI::PositiveNumber);
  prune->add_option("--granularity-pnp", prune_args.granularity_pnp, "Filters per Patch-PnP group")->check(CLI::PositiveNumber);
  prune->add_flag("--include-bias", prune_args.include_bias, "Add |bias| to the filter score");
  prune->add_option("--plan", prune_args.plan, "Plan JSON path (default <out stem>.plan.json)");

  TrainArgs ft_args;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a pruned model to match its unpruned reference");
  finetune->add_option("--model", ft_args.model, "Pruned model JSON")->required();
  finetune->add_option("--reference", ft_args.reference, "Unpruned reference model JSON")->required();

  TrainArgs ds_args;
  auto* distill = app.add_subcommand("distill", "Train a student on teacher features through a 1x1 adapter");
  distill->add_option("--teacher", ds_args.teacher, "Frozen teacher model JSON")->required();
  distill->add_option("--student", ds_args.student, "Student model JSON")->required();
  distill->add_option("--temperature", ds_args.temperature, "Softmax temperature for the KL loss");
  distill->add_option("--loss", ds_args.loss, "Alignment loss")->check(CLI::IsMember({"mse", "kl"}));
  distill->add_option("--kl-scale", ds_args.kl_scale, "KL prefactor")->check(CLI::IsMember({"tau", "tau2"}));
  distill->add_option("--norm", ds_args.norm, "Feature normalization")
      ->check(CLI::IsMember({"pixel-l2", "channel-std"}));

  for (auto [cmd, args] : {std::pair{finetune, &ft_args}, std::pair{distill, &ds_args}}) {
    cmd->add_option("--epochs", args->epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    cmd->add_option("--lr", args->lr, "SGD learning rate");
    cmd->add_option("--samples", args->samples, "Size of the fixed seeded input set");
    cmd->add_option("--batch-size", args->batch_size, "Samples per SGD step (0: whole set)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--trace", args->trace, "Loss trace CSV path (default <out stem>.loss.csv)");
  }

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Measure forward latency, FLOPs and parameters of a model");
  bench->add_option("--model", bench_args.model, "Model JSON")->required();
  bench->add_option("--iterations", bench_args.iterations, "Timed forward passes")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_args.warmup, "Untimed warmup passes")->check(CLI::NonNegativeNumber);
  bench->add_option("--label", bench_args.label, "Row label (default: model file stem)");
  bench->add_option("--ar", bench_args.ar, "AR value carried into the CSV row");

  std::string runs;
  auto* report = app.add_subcommand("report", "Pareto report over a runs CSV");
  report->add_option("--runs", runs, "CSV with label, ar, mean_ms and optionally median_ms, flops, params")
      ->required();

  for (auto* sub : app.get_subcommands({})) {
    sub->fallthrough();
    sub->footer(
        "Global options (accepted before or after the subcommand):\n"
        "  --seed UINT                 Seed for every random stream (default 0)\n"
        "  --out TEXT                  Output path (model path for build/prune/finetune/distill; stdout otherwise)\n"
        "  --format TEXT:{json,csv}    Report format (default json)\n"
        "Environment: FASTPOSE_THREADS caps eval worker threads (default 1).");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (eval->parsed()) {
      run_eval(g, eval_args, out);
    } else if (build->parsed()) {
      run_build(g, build_args);
    } else if (prune->parsed()) {
      run_prune(g, prune_args);
    } else if (finetune->parsed()) {
      run_finetune(g, ft_args);
    } else if (distill->parsed()) {
      run_distill(g, ds_args);
    } else if (bench->parsed()) {
      run_bench(g, bench_args, out);
    } else if (report->parsed()) {
      run_report(g, runs, out);
    }
  } catch (const Error& e) {
    err << "fastpose: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "fastpose: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace fastpose::cli
