/**
 * Copyright 2026 The ASQ Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// asq: train, evaluate, export and analyse ASQ/POST quantised models.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "asq/analysis.hpp"
#include "asq/int_inference.hpp"
#include "asq/kernels/kernels.hpp"
#include "asq/trainer.hpp"
#include "cli_config.hpp"

namespace fs = std::filesystem;
using namespace asq;
using asq::cli::json;

namespace {

struct Run {
  json config;
  fs::path out;
  bool timestamps = true;
  std::ofstream log_file;

  std::uint64_t seed() const { return config.at("seed").get<std::uint64_t>(); }
  const json& at(const std::string& path) const { return cli::at_path(config, path); }

  void log(const std::string& msg) {
    std::string line;
    if (timestamps) {
      const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      char buf[32];
      std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ ", std::gmtime(&now));
      line = buf;
    }
    line += msg;
    std::cerr << line << '\n';
    if (log_file) log_file << line << '\n';
  }

  void open_out() {
    fs::create_directories(out);
    std::ofstream echo(out / "config.json");
    echo << config.dump(2) << '\n';
    if (!echo) fail(ErrorKind::io, "cannot write " + (out / "config.json").string());
    log_file.open(out / "log.txt");
  }

  std::ofstream artifact(const std::string& name) const {
    std::ofstream os(out / name);
    if (!os) fail(ErrorKind::io, "cannot write " + (out / name).string());
    return os;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

fs::path existing_path(const Run& run, const std::string& key) {
  const auto p = run.at(key).get<std::string>();
  if (p.empty()) fail(ErrorKind::config_schema, "config key '" + key + "' must name a file for this command");
  if (!fs::exists(p)) fail(ErrorKind::config_path, "config key '" + key + "': " + p + " does not exist");
  return p;
}

// ---- data -------------------------------------------------------------------

struct Splits {
  train::Dataset train, test;
};

std::vector<fs::path> paths(const json& j) {
  std::vector<fs::path> out;
  for (const auto& v : j) out.emplace_back(v.get<std::string>());
  return out;
}

Splits load_data(const Run& run) {
  const auto& d = run.at("data");
  const auto kind = d.at("kind").get<std::string>();
  const auto train_limit = d.at("train_limit").get<std::int64_t>();
  const auto test_limit = d.at("test_limit").get<std::int64_t>();
  Splits s;
  if (kind == "synthetic") {
    const auto& sy = d.at("synthetic");
    train::SynthSpec spec;
    spec.classes = sy.at("classes").get<std::int64_t>();
    spec.channels = sy.at("channels").get<std::int64_t>();
    spec.size = sy.at("size").get<std::int64_t>();
    spec.noise = sy.at("noise").get<double>();
    const auto data_seed = sy.at("seed").get<std::uint64_t>();
    const auto protos = derive_seed(data_seed, "prototypes");
    spec.samples = sy.at("train_samples").get<std::int64_t>();
    s.train = train::synth_dataset(spec, protos, derive_seed(data_seed, "train"));
    spec.samples = sy.at("test_samples").get<std::int64_t>();
    s.test = train::synth_dataset(spec, protos, derive_seed(data_seed, "test"));
  } else if (kind == "cifar-binary") {
    auto train_files = paths(d.at("train_files"));
    auto test_files = paths(d.at("test_files"));
    const auto dir = d.at("dir").get<std::string>();
    if (!dir.empty()) {
      if (!fs::is_directory(dir)) fail(ErrorKind::dataset_missing, "CIFAR-10 directory " + dir + " does not exist");
      for (int i = 1; i <= 5; ++i) train_files.push_back(fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin"));
      test_files.push_back(fs::path(dir) / "test_batch.bin");
    }
    if (train_files.empty() || test_files.empty())
      fail(ErrorKind::dataset_missing, "cifar-binary data needs data.dir or data.train_files and data.test_files");
    const auto norm = train::Normalization::cifar_default();
    s.train = train::load_cifar_binary(train_files, norm, train_limit);
    s.test = train::load_cifar_binary(test_files, norm, test_limit);
  } else if (kind == "idx") {
    const auto norm = train::Normalization::idx_default();
    auto p = [&](const char* key) {
      const auto v = d.at(key).get<std::string>();
      if (v.empty()) fail(ErrorKind::dataset_missing, std::string("idx data needs data.") + key);
      return fs::path(v);
    };
    s.train = train::load_idx(p("train_images"), p("train_labels"), norm, train_limit);
    s.test = train::load_idx(p("test_images"), p("test_labels"), norm, test_limit);
    s.test.classes = s.train.classes = std::max(s.train.classes, s.test.classes);
  } else {
    fail(ErrorKind::config_schema, "config key 'data.kind' must be synthetic, cifar-binary or idx; got '" + kind + "'");
  }
  if (s.train.size() == 0 || s.test.size() == 0) fail(ErrorKind::dataset_missing, "dataset split is empty");
  return s;
}

void check_data_fits(const model::ModelSpec& spec, const train::Dataset& d) {
  const auto& sh = d.images.shape();
  if (sh[1] != spec.in_channels || sh[2] != spec.image_size || d.classes > spec.classes)
    fail(ErrorKind::dimension, "data " + shape_str(sh) + " with " + std::to_string(d.classes) +
                                   " classes does not fit the model (" + std::to_string(spec.in_channels) + " channels, " +
                                   std::to_string(spec.image_size) + " pixels, " + std::to_string(spec.classes) +
                                   " classes)");
}

// ---- model ------------------------------------------------------------------

qat::QuantPolicy policy_from(const Run& run) {
  const auto& q = run.at("quant");
  qat::QuantPolicy p;
  p.scheme = qat::parse_scheme(q.at("scheme").get<std::string>());
  p.bits = q.at("bits").get<int>();
  p.first_last_bits = q.at("first_last_bits").get<int>();
  p.dequant_mode = qat::parse_dequant_mode(q.at("dequant_mode").get<std::string>());
  p.full_levels = q.at("full_levels").get<bool>();
  p.grad_scale = q.at("grad_scale").get<bool>();
  p.adapter_depth = q.at("adapter_depth").get<int>();
  p.adapter_hidden = q.at("adapter_hidden").get<int>();
  const auto map = q.at("output_map").get<std::string>();
  if (map == "exp") p.output_map = adapter::OutputMap::exp;
  else if (map == "affine") p.output_map = adapter::OutputMap::affine_plus_one;
  else fail(ErrorKind::config_schema, "config key 'quant.output_map' must be exp or affine");
  if (p.scheme != qat::Scheme::float_model) {
    qat::validate_bits(p.bits);
    qat::validate_bits(p.first_last_bits);
  }
  if (p.adapter_depth != 1 && p.adapter_depth != 2) fail(ErrorKind::config_schema, "quant.adapter_depth must be 1 or 2");
  return p;
}

model::Model load_model_file(const Run& run) {
  return model::load_model(load_checkpoint(existing_path(run, "checkpoint")));
}

// ---- commands ---------------------------------------------------------------

int cmd_train(Run& run) {
  const auto data = load_data(run);
  model::ModelSpec spec;
  spec.arch = model::parse_arch(run.at("model.arch").get<std::string>());
  spec.width = run.at("model.width").get<std::int64_t>();
  spec.in_channels = data.train.images.dim(1);
  spec.image_size = data.train.images.dim(2);
  spec.classes = data.train.classes;
  const auto pol = policy_from(run);
  const auto& t = run.at("train");

  model::Model m;
  if (pol.scheme == qat::Scheme::float_model) {
    m = model::make_float_model(spec, derive_seed(run.seed(), "model-init"));
  } else {
    const auto init = t.at("init_checkpoint").get<std::string>();
    std::vector<NamedTensor> float_state;
    if (init.empty()) {
      run.log("no train.init_checkpoint; quantising a randomly initialised float model");
      float_state = model::make_float_model(spec, derive_seed(run.seed(), "model-init")).state();
    } else {
      float_state = load_checkpoint(existing_path(run, "train.init_checkpoint"));
    }
    m = model::build_model(spec, pol, float_state, derive_seed(run.seed(), "quant-init"));
  }

  train::TrainConfig tc;
  tc.epochs = t.at("epochs").get<std::int64_t>();
  tc.batch_size = t.at("batch_size").get<std::int64_t>();
  tc.lr0 = t.at("lr0").get<double>();
  tc.momentum = t.at("momentum").get<double>();
  tc.weight_decay = t.at("weight_decay").get<double>();
  tc.augment_crop = t.at("augment_crop").get<bool>();
  tc.augment_flip = t.at("augment_flip").get<bool>();
  tc.freeze_adapter = t.at("freeze_adapter").get<bool>();
  tc.eval_batch_size = t.at("eval_batch_size").get<std::int64_t>();
  tc.seed = derive_seed(run.seed(), "train");
  tc.checkpoint = run.out / "model.ckpt";
  run.log("train arch=" + std::string(model::arch_name(spec.arch)) + " scheme=" +
          std::string(qat::scheme_name(pol.scheme)) + " bits=" + std::to_string(pol.bits) + " samples=" +
          std::to_string(data.train.size()));
  const auto h = train::train(m, data.train, &data.test, tc);
  auto os = run.artifact("history.csv");
  h.write_csv(os);
  const auto& last = h.rows.back();
  run.log("done train_loss=" + fmt(last.train.loss) + " test_top1=" + fmt(last.test->top1));
  return 0;
}

int cmd_eval(Run& run) {
  auto m = load_model_file(run);
  const auto data = load_data(run);
  check_data_fits(m.spec, data.test);
  const auto r = train::evaluate(m, data.test, run.at("train.eval_batch_size").get<std::int64_t>());
  const auto top5 = r.top5 ? fmt(*r.top5) : std::string();
  std::cout << "split=test samples=" << data.test.size() << " loss=" << fmt(r.loss) << " top1=" << fmt(r.top1)
            << " top5=" << (top5.empty() ? "na" : top5) << '\n';
  auto os = run.artifact("metrics.csv");
  os << "split,samples,loss,top1,top5\ntest," << data.test.size() << ',' << fmt(r.loss) << ',' << fmt(r.top1) << ','
     << top5 << '\n';
  return 0;
}

intinf::IntModel export_from_checkpoint(const Run& run) {
  const auto m = load_model_file(run);
  return intinf::export_int_model(m, run.at("export.literal_floor").get<bool>());
}

int cmd_export(Run& run) {
  const auto im = export_from_checkpoint(run);
  intinf::save_int_model(run.out / "model.int", im);
  std::int64_t post = 0;
  for (const auto& l : im.layers) post += l.post;
  run.log("exported " + std::to_string(im.layers.size()) + " layers (" + std::to_string(post) + " POST) to " +
          (run.out / "model.int").string());
  return 0;
}

int cmd_infer_int(Run& run) {
  intinf::IntModel im = run.at("int_model").get<std::string>().empty()
                            ? export_from_checkpoint(run)
                            : intinf::load_int_model(existing_path(run, "int_model"));
  const auto data = load_data(run);
  check_data_fits(im.glue.spec, data.test);
  const auto batch = run.at("train.eval_batch_size").get<std::int64_t>();
  const Tensor ints = intinf::int_infer(im, data.test.images, batch);
  auto sim_model = model::load_model(im.glue.state());
  const Tensor sim = train::predict(sim_model, data.test.images, batch);

  const auto n = ints.dim(0), k = ints.dim(1);
  auto argmax = [&](const Tensor& t, std::int64_t i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < k; ++j)
      if (t[i * k + j] > t[i * k + best]) best = j;
    return best;
  };
  std::int64_t agree = 0, int_correct = 0, sim_correct = 0;
  double gap = 0.0;
  auto os = run.artifact("logits.csv");
  os << "sample,label,prediction";
  for (std::int64_t j = 0; j < k; ++j) os << ",logit_" << j;
  os << '\n';
  for (std::int64_t i = 0; i < n; ++i) {
    const auto pi = argmax(ints, i), ps = argmax(sim, i);
    const auto y = data.test.labels[static_cast<std::size_t>(i)];
    agree += pi == ps;
    int_correct += pi == y;
    sim_correct += ps == y;
    os << i << ',' << y << ',' << pi;
    for (std::int64_t j = 0; j < k; ++j) {
      os << ',' << fmt(ints[i * k + j]);
      gap = std::max(gap, std::abs(ints[i * k + j] - sim[i * k + j]));
    }
    os << '\n';
  }
  const auto dn = static_cast<double>(n);
  auto st = run.artifact("agreement.csv");
  st << "samples,top1_agreement,int_top1,sim_top1,max_abs_logit_gap,lut_rows,shift_rows,lut_lookups\n";
  const auto stats = im.total_stats();
  st << n << ',' << fmt(agree / dn) << ',' << fmt(int_correct / dn) << ',' << fmt(sim_correct / dn) << ',' << fmt(gap)
     << ',' << stats.lut_rows << ',' << stats.shift_rows << ',' << stats.lut_lookups << '\n';
  std::cout << "samples=" << n << " top1_agreement=" << fmt(agree / dn) << " int_top1=" << fmt(int_correct / dn)
            << " sim_top1=" << fmt(sim_correct / dn) << " max_abs_logit_gap=" << fmt(gap) << '\n';
  return 0;
}

int cmd_bench(Run& run) {
  std::vector<std::int64_t> sizes;
  for (const auto& v : run.at("bench.sizes")) sizes.push_back(v.get<std::int64_t>());
  run.log(std::string("bench isa=") + std::string(kernels::isa_name(kernels::active_isa())));
  const auto rows = intinf::bench_post_vs_uniform(sizes, run.at("bench.repeats").get<int>(), run.seed());
  auto os = run.artifact("bench.csv");
  intinf::write_bench_csv(os, rows);
  intinf::write_bench_csv(std::cout, rows);
  return 0;
}

analysis::ArchSpec arch_for(const Run& run) {
  const auto spec = run.at("analyze.arch_spec").get<std::string>();
  if (spec == "resnet18") return analysis::resnet18_arch();
  if (spec == "model") return analysis::arch_from_model(load_model_file(run));
  if (!fs::exists(spec)) fail(ErrorKind::config_path, "config key 'analyze.arch_spec': " + spec + " does not exist");
  return analysis::load_arch_spec(spec);
}

Tensor analysis_images(const Run& run, const model::Model& m) {
  const auto data = load_data(run);
  check_data_fits(m.spec, data.test);
  const auto n = std::min(run.at("analyze.samples").get<std::int64_t>(), data.test.size());
  return train::take(data.test, 0, n).images;
}

std::vector<std::string> quantised_layers(const model::Model& m) {
  std::vector<std::string> out;
  for (const auto& l : m.layers)
    if (l.act_quantizer != qat::ActQuantizer::none) out.push_back(l.name);
  return out;
}

void report_histogram(Run& run) {
  auto m = load_model_file(run);
  auto layer = run.at("analyze.layer").get<std::string>();
  if (layer.empty()) {
    const auto names = quantised_layers(m);
    if (names.size() < 2) fail(ErrorKind::invalid_argument, "model has no hidden quantised layer");
    layer = names[1];
  }
  const auto h = analysis::activation_histogram(m, analysis_images(run, m), layer);
  auto os = run.artifact("histogram_" + layer + ".csv");
  h.write_csv(os);
  auto bs = run.artifact("beta_" + layer + ".csv");
  h.write_beta_csv(bs);
  run.log("histogram layer=" + layer + " codes_used=" + std::to_string(h.codes_used) + " utilization=" + fmt(h.utilization));
}

void report_block_error(Run& run) {
  auto q = load_model_file(run);
  auto f = model::load_model(load_checkpoint(existing_path(run, "analyze.float_checkpoint")));
  const auto e = analysis::block_error_l2(f, q, analysis_images(run, q));
  auto os = run.artifact("block_error.csv");
  analysis::write_block_error_csv(os, e);
}

void report_layer_error(Run& run) {
  auto m = load_model_file(run);
  std::vector<std::string> layers;
  for (const auto& v : run.at("analyze.layers")) layers.push_back(v.get<std::string>());
  if (layers.empty()) layers = quantised_layers(m);
  const auto rows =
      analysis::layer_quant_error(m, analysis_images(run, m), layers, run.at("analyze.batch_size").get<std::int64_t>());
  auto os = run.artifact("layer_error.csv");
  analysis::write_layer_error_csv(os, rows);
}

void report_shift(Run& run) {
  const auto& s = run.at("analyze.shift");
  analysis::ShiftExperimentConfig c;
  c.steps = s.at("steps").get<int>();
  c.lr = s.at("lr").get<double>();
  c.samples = s.at("samples").get<std::int64_t>();
  c.elements = s.at("elements").get<std::int64_t>();
  c.sigma_lo = s.at("sigma_lo").get<double>();
  c.sigma_hi = s.at("sigma_hi").get<double>();
  c.seed = run.seed();
  const auto r = analysis::shift_experiment(c);
  auto os = run.artifact("shift.csv");
  os << "quantizer,codes_used,code_count,utilization,l2_error,mean_beta\n";
  os << "lsq," << r.lsq_codes_used << ',' << r.code_count << ',' << fmt(r.lsq_hist.utilization) << ','
     << fmt(r.lsq_error_l2) << ",1\n";
  os << "asq," << r.asq_codes_used << ',' << r.code_count << ',' << fmt(r.asq_hist.utilization) << ','
     << fmt(r.asq_error_l2) << ',' << fmt(r.mean_beta) << '\n';
  auto hl = run.artifact("shift_histogram_lsq.csv");
  r.lsq_hist.write_csv(hl);
  auto ha = run.artifact("shift_histogram_asq.csv");
  r.asq_hist.write_csv(ha);
  run.log("shift lsq_codes=" + std::to_string(r.lsq_codes_used) + " asq_codes=" + std::to_string(r.asq_codes_used));
}

int cmd_analyze(Run& run) {
  for (const auto& rep : run.at("analyze.reports")) {
    const auto name = rep.get<std::string>();
    if (name == "overhead") {
      const auto arch = arch_for(run);
      std::vector<int> bits;
      for (const auto& b : run.at("analyze.bits")) bits.push_back(b.get<int>());
      const auto sizing = analysis::AdapterSizing::from_adapter(run.at("quant.adapter_depth").get<int>(),
                                                                run.at("quant.adapter_hidden").get<int>());
      auto os = run.artifact("overhead.csv");
      analysis::overhead_report(arch, sizing, bits).write_csv(os);
    } else if (name == "histogram") {
      report_histogram(run);
    } else if (name == "block-error") {
      report_block_error(run);
    } else if (name == "layer-error") {
      report_layer_error(run);
    } else if (name == "shift") {
      report_shift(run);
    } else {
      fail(ErrorKind::config_schema, "config key 'analyze.reports' has unknown report '" + name +
                                         "' (expected overhead, histogram, block-error, layer-error, shift)");
    }
    run.log("wrote report " + name);
  }
  return 0;
}

int cmd_levels(const std::string& scheme, int bits, double alpha, bool codebook) {
  const auto s = scheme == "pot" ? quant::LevelScheme::pot : quant::LevelScheme::post;
  const auto levels = quant::make_levels(s, {alpha}, bits, true);
  const auto& values = codebook ? quant::codebook_levels(levels).values : levels.values;
  for (double v : values) std::printf("%.17g\n", v);
  return 0;
}

int report(const Error& e) {
  const int code = cli::exit_code(e.kind());
  std::string msg = e.what();
  for (auto& ch : msg)
    if (ch == '\n') ch = ' ';
  std::cerr << "error: category=" << error_kind_name(e.kind()) << " code=" << code << " message=" << msg << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ASQ/POST quantisation-aware training toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out = "asq-out";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> bits, epochs;
  std::optional<std::string> scheme, dequant;
  bool no_timestamps = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", sets, "Override a config value: key.path=value (repeatable)");
  app.add_option("--out", out, "Output directory for all artifacts");
  app.add_option("--seed", seed, "Root seed");
  app.add_option("--bits", bits, "Bit-width of the middle layers")->check(CLI::IsMember({2, 3, 4, 8}));
  app.add_option("--scheme", scheme, "Quantisation scheme")
      ->check(CLI::IsMember({"float", "scheme1", "scheme2", "lsq-baseline", "pot-weights"}));
  app.add_option("--dequant-mode", dequant, "Dequantisation mode")->check(CLI::IsMember({"base", "adaptive"}));
  app.add_option("--epochs", epochs, "Training epochs");
  app.add_flag("--no-timestamps", no_timestamps, "Omit timestamps from log lines");

  std::map<std::string, CLI::App*> subs;
  for (auto [name, help] : std::vector<std::pair<const char*, const char*>>{
           {"train", "Train a model; writes history.csv and model.ckpt"},
           {"eval", "Evaluate a checkpoint on the test split"},
           {"export", "Export a scheme-2 checkpoint to an integer model"},
           {"infer-int", "Run integer inference and compare with the simulation"},
           {"bench", "Time shift/table POST kernels against integer multiplies"},
           {"analyze", "Write accounting and diagnostic reports"}})
    subs[name] = app.add_subcommand(name, help);
  auto* levels = app.add_subcommand("levels", "Print a POT or POST level set");
  std::string level_scheme = "post";
  int level_bits = 3;
  double level_alpha = 1.0;
  bool codebook = false;
  levels->add_option("--scheme", level_scheme, "pot or post")->check(CLI::IsMember({"pot", "post"}));
  levels->add_option("--bits", level_bits, "Bit-width")->check(CLI::IsMember({2, 3, 4, 8}));
  levels->add_option("--alpha", level_alpha, "Clipping threshold")->check(CLI::PositiveNumber);
  levels->add_flag("--codebook", codebook, "Print the b-bit code book instead of the nominal set");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (levels->parsed()) return cmd_levels(level_scheme, level_bits, level_alpha, codebook);

    Run run;
    run.config = cli::default_config();
    if (!config_path.empty()) cli::merge_checked(run.config, cli::load_config_file(config_path));
    for (const auto& s : sets) cli::apply_override(run.config, s);
    if (seed) run.config["seed"] = *seed;
    if (bits) run.config["quant"]["bits"] = *bits;
    if (scheme) run.config["quant"]["scheme"] = *scheme;
    if (dequant) run.config["quant"]["dequant_mode"] = *dequant;
    if (epochs) run.config["train"]["epochs"] = *epochs;
    run.out = out;
    run.timestamps = !no_timestamps;
    if (const char* isa = std::getenv("ASQ_ISA")) run.log(std::string("ASQ_ISA=") + isa);
    run.open_out();

    if (subs["train"]->parsed()) return cmd_train(run);
    if (subs["eval"]->parsed()) return cmd_eval(run);
    if (subs["export"]->parsed()) return cmd_export(run);
    if (subs["infer-int"]->parsed()) return cmd_infer_int(run);
    if (subs["bench"]->parsed()) return cmd_bench(run);
    if (subs["analyze"]->parsed()) return cmd_analyze(run);
  } catch (const Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "error: category=internal code=1 message=" << e.what() << '\n';
    return 1;
  }
  return 1;
}
