// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "cdngp/accounting.hpp"
#include "cdngp/checkpoint.hpp"
#include "cdngp/config.hpp"
#include "cdngp/error.hpp"
#include "cdngp/parallel.hpp"
#include <nlohmann/json.hpp>

namespace cdngp {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw FormatError("cannot write '" + p.string() + "'");
  out << text;
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("CDNGP_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("CDNGP_THREADS must be a positive integer, got '") + env + "'");
  }
  return 0;
}

/// "--train.T_chunk=10" style overrides left over by the parser.
json dotted_overrides(const std::vector<std::string>& extras) {
  json j = json::object();
  for (const std::string& a : extras) {
    if (a.rfind("--", 0) != 0 || a.find('=') == std::string::npos) {
      throw ConfigError("unexpected argument '" + a + "'");
    }
    const std::string key = a.substr(2, a.find('=') - 2);
    const std::string value = a.substr(a.find('=') + 1);
    try {
      j[key] = json::parse(value);
    } catch (const json::parse_error&) {
      j[key] = value;
    }
  }
  return j;
}

std::vector<int> parse_frames(const std::string& spec, int n_frames) {
  std::vector<int> out;
  if (spec.empty() || spec == "all") {
    for (int f = 0; f < n_frames; ++f) out.push_back(f);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    try {
      if (dash != std::string::npos && dash > 0) {
        const int a = std::stoi(item.substr(0, dash)), b = std::stoi(item.substr(dash + 1));
        for (int f = a; f <= b; ++f) out.push_back(f);
      } else {
        out.push_back(std::stoi(item));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad frame list entry '" + item + "'");
    }
  }
  for (int f : out) {
    if (f < 0 || f >= n_frames) {
      throw OutOfRangeError("frame " + std::to_string(f) + " outside [0, " + std::to_string(n_frames) + ")");
    }
  }
  return out;
}

struct Options {
  int threads = 0;
  // synth
  fs::path spec_file;
  fs::path out;
  int views = 8;
  int frames = 60;
  std::uint32_t width = 64;
  std::uint32_t height = 64;
  std::uint64_t seed = 0;
  bool seed_given = false;
  // train
  fs::path data;
  fs::path config_file;
  std::string preset = "full";
  std::string layout;
  bool resume = false;
  // render / eval / report
  fs::path run;
  int view = -1;
  std::string frame_list;
};

int cmd_synth(const Options& o) {
  SynthSceneSpec spec = o.spec_file.empty() ? SynthSceneSpec::default_scene() : spec_from_json(slurp(o.spec_file));
  if (o.seed_given) spec.seed = o.seed;
  DatasetOptions d;
  d.n_views = o.views;
  d.n_frames = o.frames;
  d.width = o.width;
  d.height = o.height;
  if (d.n_views < 2) throw ConfigError("synth: at least two views required");
  const SceneDataset ds = generate_dataset(spec, d, o.out);
  std::cout << fmt::format("wrote {} views x {} frames to {}\n", ds.n_views(), ds.n_frames(), o.out.string());
  return kExitOk;
}

TrainConfig effective_config(const Options& o, const std::vector<std::string>& extras) {
  TrainConfig base;
  if (o.preset == "toy") {
    base = toy_config();
  } else if (o.preset != "full") {
    throw ConfigError("unknown preset '" + o.preset + "' (expected full or toy)");
  }
  json layered = json::object();
  if (!o.config_file.empty()) {
    try {
      layered = json::parse(slurp(o.config_file));
    } catch (const json::parse_error& e) {
      throw ConfigError("config file '" + o.config_file.string() + "' is not valid JSON: " + e.what());
    }
  }
  if (!layered.is_object()) throw ConfigError("config file must hold a flat JSON object");
  if (!o.layout.empty()) layered["model.layout"] = o.layout;
  if (o.seed_given) layered["train.seed"] = o.seed;
  layered.update(dotted_overrides(extras));
  return config_from_json(layered.dump(), base);
}

void write_reports(const ModelRepo& repo, const fs::path& dir) {
  write_text(dir / "size.json", size_report_json(size_report(repo)) + "\n");
  write_text(dir / "bandwidth.json", bandwidth_report_json(bandwidth_report(repo)) + "\n");
}

int cmd_train(const Options& o, const std::vector<std::string>& extras) {
  const SceneDataset ds = SceneDataset::load(o.data);
  const fs::path ckpt = o.out / "checkpoint";
  ModelRepo repo;
  std::ofstream loss;
  if (o.resume && fs::exists(ckpt / "manifest.json")) {
    repo = load_checkpoint(ckpt);
    const TrainConfig requested = effective_config(o, extras);
    if (config_hash(requested) != config_hash(repo.config)) {
      throw ConfigError("resume: configuration differs from the checkpoint in '" + ckpt.string() + "'");
    }
    spdlog::info("resuming after {} completed chunk(s)", repo.branches.size());
    loss.open(o.out / "loss.csv", std::ios::app);
  } else {
    repo = ModelRepo::create(effective_config(o, extras), ds.n_frames());
    fs::create_directories(o.out);
    loss.open(o.out / "loss.csv");
    loss << "chunk,step,total,photometric,distortion,entropy,spatial_l1\n";
  }
  write_text(o.out / "config.json", config_to_json(repo.config) + "\n");
  ordered_json run;
  run["seed"] = repo.config.seed;
  run["threads"] = max_threads(Exec::Parallel);
  run["config_hash"] = config_hash(repo.config);
  run["dataset"] = fs::absolute(o.data).string();
  write_text(o.out / "run.json", run.dump(2) + "\n");

  TrainHooks hooks;
  hooks.on_step = [&](std::size_t k, std::uint64_t s, const ObjectiveResult& r) {
    loss << fmt::format("{},{},{:.8g},{:.8g},{:.8g},{:.8g},{:.8g}\n", k, s, r.total, r.terms.photometric,
                        r.terms.distortion, r.terms.entropy, r.terms.spatial);
  };
  hooks.after_chunk = [&](std::size_t k, const ModelRepo& rp, const ChunkStats&) {
    save_branch(rp, k, ckpt);
    loss.flush();
  };
  try {
    run_continual(repo, ds, hooks);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("training aborted: ") + e.what());
  }
  write_reports(repo, o.out);
  std::cout << fmt::format("trained {} branch(es); checkpoint in {}\n", repo.branches.size(), ckpt.string());
  return kExitOk;
}

fs::path checkpoint_dir(const fs::path& run) {
  return fs::exists(run / "checkpoint" / "manifest.json") ? run / "checkpoint" : run;
}

int cmd_render(const Options& o) {
  const SceneDataset ds = SceneDataset::load(o.data);
  const ModelRepo repo = load_checkpoint(checkpoint_dir(o.run));
  const int view = o.view < 0 ? ds.held_out() : o.view;
  if (view >= ds.n_views()) throw OutOfRangeError("view " + std::to_string(view) + " out of range");
  const RenderSettings settings = render_settings(repo.config);
  for (int f : parse_frames(o.frame_list, ds.n_frames())) {
    const RenderedImage img = render_frame(repo, ds.cameras()[view], f, settings);
    const fs::path p = o.out / fmt::format("view{}_frame{:04d}.png", view, f);
    fs::create_directories(o.out);
    write_png(p, img.image);
  }
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const SceneDataset ds = SceneDataset::load(o.data);
  const ModelRepo repo = load_checkpoint(checkpoint_dir(o.run));
  const int view = o.view < 0 ? ds.held_out() : o.view;
  const std::vector<int> frames = parse_frames(o.frame_list, ds.n_frames());
  const std::vector<MetricRow> rows = evaluate_frames(repo, ds, view, frames);
  fs::create_directories(o.out);
  write_metrics_csv(o.out / "metrics.csv", rows);
  std::map<std::size_t, std::pair<double, int>> per_chunk;
  double sum = 0.0;
  for (const auto& r : rows) {
    auto& e = per_chunk[repo.schedule.chunk_of_frame(r.frame)];
    e.first += r.psnr;
    e.second += 1;
    sum += r.psnr;
  }
  std::ofstream chunks(o.out / "chunks.csv");
  chunks << "chunk,frames,mean_psnr\n";
  for (const auto& [k, e] : per_chunk) {
    chunks << fmt::format("{},{},{:.4f}\n", k, e.second, e.first / e.second);
    std::cout << fmt::format("chunk {:3d}  {:8.3f} dB\n", k, e.first / e.second);
  }
  std::cout << fmt::format("view {} mean PSNR {:.3f} dB over {} frames\n", view, rows.empty() ? 0.0 : sum / rows.size(),
                           rows.size());
  return kExitOk;
}

std::string ratio_text(double r) {
  const double inv = 1.0 / r;
  if (inv == std::round(inv)) return fmt::format("1/{}", static_cast<long long>(inv));
  return fmt::format("{}", r);
}

int cmd_report(const Options& o) {
  const fs::path dir = checkpoint_dir(o.run);
  const CheckpointStatus st = inspect_checkpoint(dir);
  if (!st.complete()) {
    std::string ids;
    for (std::size_t k = 0; k < st.schedule.size(); ++k) {
      if (std::find(st.present.begin(), st.present.end(), k) == st.present.end()) {
        ids += (ids.empty() ? "" : ", ") + std::to_string(k);
      }
    }
    std::cerr << "incomplete checkpoint: missing branch(es) " << ids << "\n";
    return kExitRuntime;
  }
  const ModelRepo repo = load_checkpoint(dir);
  const SizeReport size = size_report(repo);
  const BandwidthReport bw = bandwidth_report(repo);
  std::cout << size_report_table(size);
  std::cout << "aux/base fully hashed level ratio: " << ratio_text(size.hashed_ratio) << "\n";
  std::cout << bandwidth_report_table(bw);
  if (!o.out.empty()) {
    write_text(o.out / "size.json", size_report_json(size) + "\n");
    write_text(o.out / "bandwidth.json", bandwidth_report_json(bw) + "\n");
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Continual dynamic radiance fields on multiresolution hash grids"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--threads", o.threads, "OpenMP worker count (falls back to CDNGP_THREADS)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-view dataset");
  synth->add_option("--spec", o.spec_file, "Scene spec JSON (default scene if omitted)");
  synth->add_option("--out", o.out, "Dataset directory")->required();
  synth->add_option("--views", o.views, "Camera count");
  synth->add_option("--frames", o.frames, "Frame count");
  synth->add_option("--width", o.width, "Image width");
  synth->add_option("--height", o.height, "Image height");
  synth->add_option("--seed", o.seed, "Scene seed");

  auto* train = app.add_subcommand("train", "Train a continual model; extra --key=value flags override config keys");
  train->add_option("--data", o.data, "Dataset directory")->required();
  train->add_option("--out", o.out, "Run directory")->required();
  train->add_option("--config", o.config_file, "Flat JSON config");
  train->add_option("--preset", o.preset, "full or toy");
  train->add_option("--layout", o.layout, "voxel, plane or merf");
  train->add_option("--seed", o.seed, "Training seed");
  train->add_flag("--resume", o.resume, "Continue after the last completed chunk");
  train->allow_extras();

  auto* render = app.add_subcommand("render", "Render frames of one view");
  auto* eval = app.add_subcommand("eval", "PSNR / DSSIM against the dataset");
  for (auto* sc : {render, eval}) {
    sc->add_option("--run", o.run, "Run or checkpoint directory")->required();
    sc->add_option("--data", o.data, "Dataset directory")->required();
    sc->add_option("--out", o.out, "Output directory")->required();
    sc->add_option("--view", o.view, "View id (default: held-out view)");
    sc->add_option("--frames", o.frame_list, "Frames, e.g. 0,5,10-12 (default all)");
  }

  auto* report = app.add_subcommand("report", "Size and bandwidth tables of a checkpoint");
  report->add_option("--run", o.run, "Run or checkpoint directory")->required();
  report->add_option("--out", o.out, "Directory for JSON reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }
  o.seed_given = (synth->parsed() && synth->count("--seed") > 0) || (train->parsed() && train->count("--seed") > 0);

  try {
    const int threads = resolve_threads(o.threads);
    if (threads > 0) set_threads(threads);
    if (synth->parsed()) return cmd_synth(o);
    if (train->parsed()) return cmd_train(o, train->remaining());
    if (render->parsed()) return cmd_render(o);
    if (eval->parsed()) return cmd_eval(o);
    if (report->parsed()) return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const OutOfRangeError& e) {
    std::cerr << "out of range: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace cdngp
