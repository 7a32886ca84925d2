#pragma once

// Command-line workflows: train, fuse, eval, gradcheck, demo.
//
// Configuration resolves in three layers: built-in defaults (desk-scale for
// `demo`), then a `key = value` file given by --config, then --key flags.
// Unknown keys are errors. The resolved configuration is echoed before any
// work starts.
//
// Exit codes:
//   0  success
//   1  gradient check failed / unexpected error
//   2  configuration error
//   3  ingestion error (missing directory, unpaired or undecodable image)
//   4  training diverged
//   5  checkpoint format or schema error
//   6  image size mismatch

#include <CLI11.hpp>

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hfn/checkpoint.hpp"
#include "hfn/dataset.hpp"
#include "hfn/evaluate.hpp"
#include "hfn/gradcheck.hpp"
#include "hfn/trainer.hpp"

namespace hfn::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kIngestionError = 3,
  kDivergence = 4,
  kCheckpointError = 5,
  kSizeMismatch = 6,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  TrainConfig train;
  std::string ir_dir;
  std::string vis_dir;
  std::size_t synthetic = 0;
  std::string checkpoint;  // default: <out_dir>/model.hfn
  std::string out_dir = "hfn_out";
  bool test_prefusion = false;
  std::string eval_split = "test";

  std::filesystem::path checkpoint_path() const {
    return checkpoint.empty() ? std::filesystem::path(out_dir) / "model.hfn" : std::filesystem::path(checkpoint);
  }
  FuseOptions fuse_options() const { return FuseOptions{train.feedback, test_prefusion, train.pre_fusion}; }
};

/// Desk-scale settings used by `demo`: small synthetic corpus, short training.
inline RunConfig demo_defaults() {
  RunConfig c;
  c.synthetic = 8;
  c.train.image_size = 32;
  c.train.batch_size = 4;
  c.train.learning_rate = 1e-3;
  c.train.epochs = 1000;
  c.train.max_steps = 300;
  c.train.seed = 7;
  c.out_dir = "hfn_demo";
  return c;
}

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': integer out of range '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

struct KeySpec {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

/// Every accepted configuration key.
inline const std::vector<KeySpec>& config_keys() {
  using detail::fmt_double;
  using detail::parse_double;
  using detail::parse_uint;
  static const std::vector<KeySpec> keys = {
      {"lr", "learning rate",
       [](RunConfig& c, const std::string& v) { c.train.learning_rate = parse_double("lr", v); },
       [](const RunConfig& c) { return fmt_double(c.train.learning_rate); }},
      {"batch_size", "samples per optimizer step",
       [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_uint("batch_size", v); },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"epochs", "training epochs",
       [](RunConfig& c, const std::string& v) { c.train.epochs = parse_uint("epochs", v); },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"steps", "stop after this many optimizer steps (0 = run all epochs)",
       [](RunConfig& c, const std::string& v) { c.train.max_steps = parse_uint("steps", v); },
       [](const RunConfig& c) { return std::to_string(c.train.max_steps); }},
      {"size", "side length images are resized to (and synthetic image size)",
       [](RunConfig& c, const std::string& v) { c.train.image_size = parse_uint("size", v); },
       [](const RunConfig& c) { return std::to_string(c.train.image_size); }},
      {"seed", "seed for initialization, shuffling, splitting and synthetic data",
       [](RunConfig& c, const std::string& v) { c.train.seed = parse_uint("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"a1", "pre-fusion weight of the dominant spectrum (a2 = 1 - a1)",
       [](RunConfig& c, const std::string& v) { c.train.pre_fusion.a1 = parse_double("a1", v); },
       [](const RunConfig& c) { return fmt_double(c.train.pre_fusion.a1); }},
      {"feedback_iterations", "unrolled decoder feedback iterations",
       [](RunConfig& c, const std::string& v) {
         c.train.feedback.n_iterations = static_cast<int>(parse_uint("feedback_iterations", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.feedback.n_iterations); }},
      {"lambda", "weight of the SSIM loss",
       [](RunConfig& c, const std::string& v) { c.train.loss.lambda = parse_double("lambda", v); },
       [](const RunConfig& c) { return fmt_double(c.train.loss.lambda); }},
      {"gamma", "weight of the average-gradient loss",
       [](RunConfig& c, const std::string& v) { c.train.loss.gamma = parse_double("gamma", v); },
       [](const RunConfig& c) { return fmt_double(c.train.loss.gamma); }},
      {"ssim_window", "SSIM Gaussian window size (odd)",
       [](RunConfig& c, const std::string& v) { c.train.loss.ssim_window = static_cast<int>(parse_uint("ssim_window", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.loss.ssim_window); }},
      {"ssim_sigma", "SSIM Gaussian sigma",
       [](RunConfig& c, const std::string& v) { c.train.loss.ssim_sigma = parse_double("ssim_sigma", v); },
       [](const RunConfig& c) { return fmt_double(c.train.loss.ssim_sigma); }},
      {"ssim_c1", "SSIM stabilizer C1",
       [](RunConfig& c, const std::string& v) { c.train.loss.ssim_c1 = parse_double("ssim_c1", v); },
       [](const RunConfig& c) { return fmt_double(c.train.loss.ssim_c1); }},
      {"ssim_c2", "SSIM stabilizer C2",
       [](RunConfig& c, const std::string& v) { c.train.loss.ssim_c2 = parse_double("ssim_c2", v); },
       [](const RunConfig& c) { return fmt_double(c.train.loss.ssim_c2); }},
      {"ag_mode", "average-gradient term: sharpness_match | literal",
       [](RunConfig& c, const std::string& v) {
         if (v == "sharpness_match") c.train.loss.ag_mode = AgMode::sharpness_match;
         else if (v == "literal") c.train.loss.ag_mode = AgMode::literal;
         else throw ConfigError("key 'ag_mode': expected sharpness_match or literal, got '" + v + "'");
       },
       [](const RunConfig& c) {
         return std::string(c.train.loss.ag_mode == AgMode::literal ? "literal" : "sharpness_match");
       }},
      {"pixel_mode", "pixel loss: mse | norm",
       [](RunConfig& c, const std::string& v) {
         if (v == "mse") c.train.loss.pixel_mode = PixelMode::mse;
         else if (v == "norm") c.train.loss.pixel_mode = PixelMode::norm;
         else throw ConfigError("key 'pixel_mode': expected mse or norm, got '" + v + "'");
       },
       [](const RunConfig& c) { return std::string(c.train.loss.pixel_mode == PixelMode::mse ? "mse" : "norm"); }},
      {"optimizer", "adam | sgd",
       [](RunConfig& c, const std::string& v) {
         if (v == "adam") c.train.optimizer = OptimizerKind::adam;
         else if (v == "sgd") c.train.optimizer = OptimizerKind::sgd;
         else throw ConfigError("key 'optimizer': expected adam or sgd, got '" + v + "'");
       },
       [](const RunConfig& c) { return std::string(c.train.optimizer == OptimizerKind::adam ? "adam" : "sgd"); }},
      {"beta1", "Adam first-moment decay",
       [](RunConfig& c, const std::string& v) { c.train.adam.beta1 = parse_double("beta1", v); },
       [](const RunConfig& c) { return fmt_double(c.train.adam.beta1); }},
      {"beta2", "Adam second-moment decay",
       [](RunConfig& c, const std::string& v) { c.train.adam.beta2 = parse_double("beta2", v); },
       [](const RunConfig& c) { return fmt_double(c.train.adam.beta2); }},
      {"adam_eps", "Adam epsilon",
       [](RunConfig& c, const std::string& v) { c.train.adam.epsilon = parse_double("adam_eps", v); },
       [](const RunConfig& c) { return fmt_double(c.train.adam.epsilon); }},
      {"ir_dir", "directory of infrared images",
       [](RunConfig& c, const std::string& v) { c.ir_dir = v; }, [](const RunConfig& c) { return c.ir_dir; }},
      {"vis_dir", "directory of visible images (same file names)",
       [](RunConfig& c, const std::string& v) { c.vis_dir = v; }, [](const RunConfig& c) { return c.vis_dir; }},
      {"synthetic", "use N synthetic pairs instead of image directories (0 = off)",
       [](RunConfig& c, const std::string& v) { c.synthetic = parse_uint("synthetic", v); },
       [](const RunConfig& c) { return std::to_string(c.synthetic); }},
      {"checkpoint", "checkpoint path (default <out_dir>/model.hfn)",
       [](RunConfig& c, const std::string& v) { c.checkpoint = v; },
       [](const RunConfig& c) { return c.checkpoint_path().string(); }},
      {"out_dir", "directory for all outputs",
       [](RunConfig& c, const std::string& v) { c.out_dir = v; }, [](const RunConfig& c) { return c.out_dir; }},
      {"test_prefusion", "apply pre-fusion before encoding at test time (ablation)",
       [](RunConfig& c, const std::string& v) { c.test_prefusion = detail::parse_bool("test_prefusion", v); },
       [](const RunConfig& c) { return std::string(c.test_prefusion ? "true" : "false"); }},
      {"eval_split", "pairs scored by eval: test | all",
       [](RunConfig& c, const std::string& v) {
         if (v != "test" && v != "all") throw ConfigError("key 'eval_split': expected test or all, got '" + v + "'");
         c.eval_split = v;
       },
       [](const RunConfig& c) { return c.eval_split; }},
  };
  return keys;
}

inline const KeySpec& key_spec(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  throw ConfigError("unknown configuration key '" + name + "'");
}

/// Applies a `key = value` file. Blank lines and '#' comments are ignored.
inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot read config file");
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      key_spec(key).set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

inline void echo_config(std::ostream& os, const std::string& command, const RunConfig& cfg) {
  os << "# hfn " << command << " resolved configuration\n";
  for (const auto& k : config_keys()) os << k.name << " = " << k.get(cfg) << '\n';
  os << std::flush;
}

inline void validate(const RunConfig& cfg) {
  try {
    cfg.train.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (cfg.train.image_size < 8) throw ConfigError("size must be >= 8");
}

inline PairDataset load_corpus(const RunConfig& cfg) {
  if (cfg.synthetic > 0) return synth_corpus(cfg.synthetic, cfg.train.image_size, cfg.train.seed);
  if (cfg.ir_dir.empty() || cfg.vis_dir.empty()) throw ConfigError("need ir_dir and vis_dir, or synthetic N");
  return load_dataset(cfg.ir_dir, cfg.vis_dir, IngestConfig{cfg.train.image_size, cfg.train.image_size, cfg.train.seed});
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const PairDataset ds = load_corpus(cfg);
  const auto out_dir = std::filesystem::path(cfg.out_dir);
  std::filesystem::create_directories(out_dir);
  out << "corpus: " << ds.pairs.size() << " pairs (" << ds.train().size() << " train, " << ds.test().size()
      << " test)\n";
  const TrainResult result = train(ds, cfg.train, [&](const StepRecord& r) {
    if (r.step == 1 || r.step % 50 == 0) {
      out << "epoch " << r.epoch << " step " << r.step << " L=" << format_fixed(r.loss.total, 6)
          << " L_p=" << format_fixed(r.loss.pixel, 6) << " L_ssim=" << format_fixed(r.loss.ssim, 6)
          << " L_ag=" << format_fixed(r.loss.ag, 6) << '\n';
    }
  });
  const auto ckpt = cfg.checkpoint_path();
  if (ckpt.has_parent_path()) std::filesystem::create_directories(ckpt.parent_path());
  save_checkpoint(result.params, ckpt);
  std::ofstream log(out_dir / "train.log");
  result.log.write(log);
  out << "checkpoint: " << ckpt.string() << "\nlog: " << (out_dir / "train.log").string() << '\n';
  return kOk;
}

inline void print_metrics(std::ostream& out, const MetricRow& r) {
  out << "EN=" << format_fixed(r.en, 6) << " Qabf=" << format_fixed(r.qabf, 6) << " SSIM=" << format_fixed(r.ssim, 6)
      << " PSNR=" << format_fixed(r.psnr, 6) << '\n';
}

inline int cmd_fuse(const RunConfig& cfg, const std::string& ir_path, const std::string& vis_path,
                    const std::string& out_path, std::ostream& out) {
  const ModelParams<float> params = load_checkpoint(cfg.checkpoint_path());
  ImageGray ir, vis;
  try {
    ir = read_pnm(ir_path);
    vis = read_pnm(vis_path);
  } catch (const ImageIoError& e) {
    throw IngestionError(e.what());
  }
  if (!ir.same_size(vis)) {
    throw ShapeError("image size mismatch: " + ir_path + " is " + std::to_string(ir.width) + "x" +
                     std::to_string(ir.height) + ", " + vis_path + " is " + std::to_string(vis.width) + "x" +
                     std::to_string(vis.height));
  }
  const ImageGray fused = quantized(fuse_images(ir, vis, params, cfg.fuse_options()));
  write_pgm(out_path, fused);
  out << "fused: " << out_path << " (" << fused.width << "x" << fused.height << ")\n";
  print_metrics(out, measure("fused", ir, vis, fused, cfg.train.loss));
  return kOk;
}

inline void write_report(const std::filesystem::path& dir, const MetricReport& report) {
  std::ofstream table(dir / "report.txt");
  write_table(table, report);
  std::ofstream rows(dir / "report.csv");
  write_rows(rows, report);
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const ModelParams<float> params = load_checkpoint(cfg.checkpoint_path());
  const PairDataset ds = load_corpus(cfg);
  std::vector<const ImagePair*> chosen = ds.test();
  if (cfg.eval_split == "all") {
    chosen.clear();
    for (const auto& p : ds.pairs) chosen.push_back(&p);
  }
  const std::string corpus = cfg.synthetic ? "synthetic-" + std::to_string(cfg.synthetic) : cfg.ir_dir;
  const MetricReport report = evaluate_corpus(chosen, params, cfg.fuse_options(), corpus);
  std::filesystem::create_directories(cfg.out_dir);
  write_report(cfg.out_dir, report);
  write_table(out, report);
  return kOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t seeds = 20;
  std::size_t size = 16;
  std::string corrupt_adjoint;
};

inline int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out) {
  GradcheckOptions opt;
  opt.corrupt_op = args.corrupt_adjoint;
  const GradcheckReport report = run_gradcheck(args.seed, args.seeds, opt, args.size);
  out << "gradient check: " << args.seeds << " seeds from " << args.seed << ", h=" << opt.h
      << ", tolerance=" << opt.tolerance << '\n';
  std::vector<std::string> failed;
  for (const auto& c : report.components) {
    out << "  " << (c.passed ? "ok   " : "FAIL ") << std::left << std::setw(34) << c.name << std::right
        << " worst=" << std::scientific << std::setprecision(3) << c.worst_error << std::defaultfloat
        << " checked=" << c.checked << " skipped=" << c.skipped << '\n';
    if (!c.passed) failed.push_back(c.name);
  }
  if (failed.empty()) {
    out << "all components passed\n";
    return kOk;
  }
  out << "gradient check FAILED:";
  for (const auto& f : failed) out << ' ' << f;
  out << '\n';
  return kFailure;
}

inline int cmd_demo(const RunConfig& cfg, std::ostream& out) {
  if (cfg.synthetic == 0) throw ConfigError("demo needs synthetic > 0");
  const auto dir = std::filesystem::path(cfg.out_dir);
  std::filesystem::create_directories(dir / "fused");
  std::filesystem::create_directories(dir / "pairs");
  cmd_train(cfg, out);
  const PairDataset ds = load_corpus(cfg);
  for (const auto& p : ds.pairs) {
    write_pgm(dir / "pairs" / (p.name + "_ir.pgm"), p.infrared);
    write_pgm(dir / "pairs" / (p.name + "_vis.pgm"), p.visible);
  }
  const ModelParams<float> params = load_checkpoint(cfg.checkpoint_path());
  const MetricReport report =
      evaluate_corpus(ds.test(), params, cfg.fuse_options(), "synthetic-" + std::to_string(cfg.synthetic), "hfn",
                      [&](const ImagePair& p, const ImageGray& fused) { write_pgm(dir / "fused" / (p.name + ".pgm"), fused); });
  write_report(dir, report);
  write_table(out, report);
  return kOk;
}

/// Parses arguments and runs one command; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"hfn: infrared/visible image fusion network"};
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::string> flags;

  auto add_keys = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value configuration file");
    for (const auto& k : config_keys()) {
      sub->add_option_function<std::string>("--" + k.name, [&flags, name = k.name](const std::string& v) { flags[name] = v; },
                                            k.help);
    }
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train encoder and decoder on a corpus");
  add_keys(train_cmd);
  CLI::App* fuse_cmd = app.add_subcommand("fuse", "fuse one registered infrared/visible pair");
  add_keys(fuse_cmd);
  std::string ir_path, vis_path, out_path;
  fuse_cmd->add_option("infrared", ir_path, "infrared PGM/PPM")->required();
  fuse_cmd->add_option("visible", vis_path, "visible PGM/PPM")->required();
  fuse_cmd->add_option("output", out_path, "fused PGM to write")->required();
  CLI::App* eval_cmd = app.add_subcommand("eval", "fuse a corpus and report EN, Qabf, SSIM, PSNR");
  add_keys(eval_cmd);
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "verify analytic gradients with finite differences");
  GradcheckArgs gargs;
  grad_cmd->add_option("--seed", gargs.seed, "first seed");
  grad_cmd->add_option("--seeds", gargs.seeds, "number of seeds");
  grad_cmd->add_option("--size", gargs.size, "image side for whole-network checks");
  grad_cmd->add_option("--corrupt-adjoint", gargs.corrupt_adjoint, "sabotage one op's adjoint (negative control)");
  CLI::App* demo_cmd = app.add_subcommand("demo", "synthetic corpus -> train -> fuse -> report");
  add_keys(demo_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (grad_cmd->parsed()) {
      out << "# hfn gradcheck resolved configuration\nseed = " << gargs.seed << "\nseeds = " << gargs.seeds
          << "\nsize = " << gargs.size << "\ncorrupt_adjoint = " << gargs.corrupt_adjoint << '\n';
      return cmd_gradcheck(gargs, out);
    }
    RunConfig cfg = demo_cmd->parsed() ? demo_defaults() : RunConfig{};
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& [key, value] : flags) key_spec(key).set(cfg, value);
    validate(cfg);
    const std::string name = app.get_subcommands().front()->get_name();
    echo_config(out, name, cfg);
    if (train_cmd->parsed()) return cmd_train(cfg, out);
    if (fuse_cmd->parsed()) return cmd_fuse(cfg, ir_path, vis_path, out_path, out);
    if (eval_cmd->parsed()) return cmd_eval(cfg, out);
    return cmd_demo(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IngestionError& e) {
    err << "ingestion error: " << e.what() << '\n';
    return kIngestionError;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const FormatError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kCheckpointError;
  } catch (const SchemaError& e) {
    err << "checkpoint schema error: " << e.what() << '\n';
    return kCheckpointError;
  } catch (const ShapeError& e) {
    err << "size mismatch: " << e.what() << '\n';
    return kSizeMismatch;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace hfn::cli
