#include "adafuse/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "adafuse/checkpoint.hpp"
#include "adafuse/config.hpp"
#include "adafuse/detection.hpp"
#include "adafuse/error.hpp"
#include "adafuse/eval.hpp"
#include "adafuse/fsutil.hpp"
#include "adafuse/runtime.hpp"
#include "adafuse/svg.hpp"
#include "adafuse/synthdata.hpp"
#include "adafuse/training.hpp"

namespace adafuse {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

Config resolve_config(const CommonOptions& o) {
  Config c;
  if (!o.config_path.empty()) c.load_file(o.config_path);
  for (const auto& s : o.overrides) c.set(std::string_view(s));
  if (o.seed) {
    c.set("train.seed", std::to_string(*o.seed));
    c.set("data.seed", std::to_string(*o.seed));
  }
  if (o.threads) c.set("run.threads", std::to_string(*o.threads));
  return c;
}

using Clock = std::chrono::steady_clock;

/// Provenance record written next to every command's outputs.
void write_run_manifest(const fs::path& file, const std::string& command, const Config& config,
                        const std::vector<std::pair<std::string, std::string>>& io,
                        Clock::time_point started) {
  Manifest m;
  m.set("command", command);
  m.set("tool_version", kToolVersion);
  m.set("seed", config.get("train.seed"));
  m.set("data_seed", config.get("data.seed"));
  for (const auto& [k, v] : io) m.set(k, v);
  for (const auto& [k, v] : config.values()) m.set("config." + k, v);
  const double secs = std::chrono::duration<double>(Clock::now() - started).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", secs);
  m.set("duration_s", buf);
  m.write(file);
}

std::string abs_string(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

void write_loss_log(const fs::path& file, const std::vector<std::string>& names,
                    const std::vector<LossLog>& logs) {
  std::ofstream out(file, std::ios::binary);
  out << "epoch";
  for (const auto& n : names) out << "\tloss_" << n;
  out << '\n';
  const std::size_t epochs = logs.empty() ? 0 : logs.front().size();
  for (std::size_t e = 0; e < epochs; ++e) {
    out << e + 1;
    for (const auto& l : logs) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", l.at(e));
      out << '\t' << buf;
    }
    out << '\n';
  }
}

void require_frames(const Dataset& data, const fs::path& dir) {
  if (data.frames.empty()) throw InputError("dataset " + dir.string() + " has no frames");
}

int cmd_gen_data(const CommonOptions& o, const fs::path& out_dir) {
  const auto started = Clock::now();
  const Config c = resolve_config(o);
  const RegimeScript script = regime_script(c);
  const FrameSize size{c.get_size("data.height"), c.get_size("data.width")};
  const Dataset d = make_dataset(c.get_size("data.frames"), script, size, c.get_size("data.actors"),
                                 c.get_u64("data.seed"));
  StagedDir staged(out_dir);
  write_dataset(d, staged.path());
  write_run_manifest(staged.path() / "run_manifest.txt", "gen-data", c, {{"output", abs_string(out_dir)}},
                     started);
  staged.commit();
  std::cerr << "gen-data: wrote " << d.frames.size() << " frames to " << out_dir.string() << '\n';
  return kExitOk;
}

std::vector<ExpertNet> load_experts(const fs::path& model_dir, const std::vector<Modality>& mods) {
  std::vector<ExpertNet> experts;
  for (const auto& m : mods) {
    const fs::path dir = expert_dir(model_dir, m);
    if (!fs::exists(dir / "manifest.txt")) {
      throw DependencyError("missing expert checkpoint " + dir.string() + "; run 'train --stage experts' first");
    }
    experts.push_back(load_expert(dir));
  }
  return experts;
}

int cmd_train(const CommonOptions& o, const std::string& stage, const fs::path& data_dir,
              const fs::path& model_dir) {
  const auto started = Clock::now();
  const Config c = resolve_config(o);
  const auto mods = model_modalities(c);
  const CropConfig cc = crop_config(c);
  const std::uint64_t seed = c.get_u64("train.seed");
  const std::size_t threads = std::max<std::size_t>(1, c.get_size("run.threads"));

  if (stage != "experts" && stage != "gate" && stage != "late" && stage != "channel") {
    throw ConfigError("unknown stage '" + stage + "' (experts, gate, late, channel)");
  }
  const bool stage2 = stage == "gate" || stage == "late";
  const TrainConfig tc = train_config(c, stage2 ? Stage::fusion : Stage::experts);
  // Dependencies are checked before the (slow) data read.
  std::vector<ExpertNet> experts;
  if (stage2) {
    experts = load_experts(model_dir, mods);
    freeze(experts);
  }
  const Dataset data = read_dataset(data_dir);
  require_frames(data, data_dir);
  const Split split = stage2 ? Split::gate_val : Split::train;
  const CropDataset crops = extract_split_crops(data, split, mods, cc, seed);
  if (crops.skipped_frames) {
    std::cerr << "warning: " << crops.skipped_frames << " frames smaller than the crop window were skipped\n";
  }
  std::cerr << "train " << stage << ": " << crops.positives << " positive and " << crops.negatives
            << " negative crops from the " << split_name(split) << " split\n";

  const fs::path out = model_dir / stage;
  StagedDir staged(out);
  std::vector<std::pair<std::string, std::string>> io = {{"data", abs_string(data_dir)},
                                                         {"output", abs_string(out)},
                                                         {"split", split_name(split)}};
  if (stage == "experts") {
    std::vector<LossLog> logs;
    const auto nets = train_experts(crops, mods, tc, &logs, threads);
    std::vector<std::string> names;
    for (const auto& n : nets) {
      names.push_back(modality_name(n.modality().id));
      save_expert(staged.path() / names.back(), n);
      io.emplace_back("expert_hash." + names.back(), hash_hex(n.params().hash()));
    }
    write_loss_log(staged.path() / "loss.tsv", names, logs);
  } else if (stage == "channel") {
    LossLog log;
    const ExpertNet net = train_channel_net(crops, mods, tc, &log);
    save_channel_net(staged.path(), net, mods);
    write_loss_log(staged.path() / "loss.tsv", {"channel"}, {log});
  } else {
    std::vector<std::uint64_t> before;
    for (const auto& e : experts) before.push_back(e.params().hash());
    LossLog log;
    if (stage == "gate") {
      save_head(staged.path(), "gate", train_gate(experts, crops, tc, &log), experts);
    } else {
      save_head(staged.path(), "late", train_late_head(experts, crops, tc, &log), experts);
    }
    for (std::size_t i = 0; i < experts.size(); ++i) {
      if (experts[i].params().hash() != before[i]) throw StateError("expert weights changed in stage 2");
      io.emplace_back("expert_hash." + modality_name(experts[i].modality().id), hash_hex(before[i]));
    }
    write_loss_log(staged.path() / "loss.tsv", {stage}, {log});
  }
  write_run_manifest(staged.path() / "run_manifest.txt", "train --stage " + stage, c, io, started);
  staged.commit();
  std::cerr << "train " << stage << ": wrote " << out.string() << '\n';
  return kExitOk;
}

int cmd_detect(const CommonOptions& o, const fs::path& model_dir, const fs::path& data_dir,
               const std::string& scheme_name_arg, const std::string& modality_list,
               const std::string& split_arg, const fs::path& out_file) {
  const auto started = Clock::now();
  const Config c = resolve_config(o);
  const Scheme scheme = parse_scheme(scheme_name_arg);
  const Split split = parse_split(split_arg);
  std::optional<std::vector<Modality>> mods;
  if (!modality_list.empty()) mods = parse_modalities(modality_list);
  const DetectConfig dc = detect_config(c);
  const FusedModel model = load_fused_model(model_dir, scheme, mods);
  const Dataset data = read_dataset(data_dir);
  require_frames(data, data_dir);

  const auto [lo, hi] = split_range(split, data.frames.size());
  const Proposals probe = generate_proposals(data.size, dc.proposals);
  if (probe.skipped_scales) {
    std::cerr << "warning: " << probe.skipped_scales << " proposal scales do not fit the frame and were skipped\n";
  }
  if (probe.boxes.empty()) throw ConfigError("no proposal window fits a " + std::to_string(data.size.width) +
                                             "x" + std::to_string(data.size.height) + " frame");
  auto dets = detect_frames(std::span(&model, 1), std::span(data.frames).subspan(lo, hi - lo), dc);

  DetectionFile file;
  file.scheme = scheme_name(scheme);
  for (const auto& m : model.modalities()) file.experts.push_back(modality_name(m.id));
  file.frame_begin = lo;
  file.frame_end = hi;
  file.detections = std::move(dets.front());

  StagedFile staged(out_file);
  write_detections(staged.path(), file);
  fs::path manifest_path = out_file;
  manifest_path += ".manifest.txt";
  StagedFile staged_manifest(manifest_path);
  write_run_manifest(staged_manifest.path(), "detect", c,
                     {{"model", abs_string(model_dir)},
                      {"data", abs_string(data_dir)},
                      {"scheme", file.scheme},
                      {"modalities", join_modalities(model.modalities())},
                      {"split", split_name(split)},
                      {"output", abs_string(out_file)}},
                     started);
  staged.commit();
  staged_manifest.commit();
  std::cerr << "detect: " << file.detections.size() << " detections on frames " << lo << "-" << hi
            << " written to " << out_file.string() << '\n';
  return kExitOk;
}

int cmd_eval(const CommonOptions& o, const fs::path& det_path, const fs::path& data_dir,
             std::optional<double> iou_arg, const fs::path& out_dir) {
  const auto started = Clock::now();
  Config c = resolve_config(o);
  if (iou_arg) c.set("eval.iou", std::to_string(*iou_arg));
  const double iou_thr = c.get_double("eval.iou");
  if (!(iou_thr > 0 && iou_thr < 1)) throw ConfigError("eval.iou must lie in (0,1)");
  const DetectionFile file = read_detections(det_path);
  const Dataset data = read_dataset(data_dir);
  if (file.frame_end > data.frames.size()) {
    throw InputError("detections cover frames up to " + std::to_string(file.frame_end) +
                     " but the dataset has " + std::to_string(data.frames.size()));
  }
  Evaluation ev = evaluate(file.detections, data.frames, file.frame_begin, file.frame_end, iou_thr);
  std::string experts;
  for (const auto& e : file.experts) experts += (experts.empty() ? "" : ",") + e;
  ev.metrics.extra["scheme"] = file.scheme;
  ev.metrics.extra["experts"] = experts;
  ev.metrics.extra["detections"] = abs_string(det_path);

  StagedDir staged(out_dir);
  write_metrics(staged.path(), ev);
  write_run_manifest(staged.path() / "run_manifest.txt", "eval", c,
                     {{"detections", abs_string(det_path)}, {"data", abs_string(data_dir)},
                      {"output", abs_string(out_dir)}},
                     started);
  staged.commit();
  std::printf("ap=%.6f eer=%.6f recall_at_eer=%.6f\n", ev.metrics.ap, ev.metrics.eer, ev.metrics.recall_at_eer);
  return kExitOk;
}

std::string method_label(const std::string& scheme, const std::string& experts) {
  if (scheme == "average" && experts.find(',') == std::string::npos) return "single";
  return scheme;
}

double parse_metric(const std::map<std::string, std::string>& m, const std::string& key,
                    const fs::path& file) {
  const auto it = m.find(key);
  if (it == m.end()) throw ParseError(file.string() + ": missing '" + key + "'");
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ParseError(file.string() + ": bad value for '" + key + "'");
  }
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Per-frame mean gate over a run's detections, frames in [begin, end).
std::vector<std::vector<double>> gate_timeline(const DetectionFile& f) {
  const std::size_t m = f.experts.size();
  std::vector<std::vector<double>> sums(f.frame_end - f.frame_begin, std::vector<double>(m, 0.0));
  std::vector<std::size_t> counts(sums.size(), 0);
  for (const auto& d : f.detections) {
    if (!d.gate) continue;
    const std::size_t i = d.frame_index - f.frame_begin;
    for (std::size_t k = 0; k < m; ++k) sums[i][k] += (*d.gate)[k];
    ++counts[i];
  }
  for (std::size_t i = 0; i < sums.size(); ++i) {
    for (auto& v : sums[i]) v = counts[i] ? v / static_cast<double>(counts[i]) : std::nan("");
  }
  return sums;
}

int cmd_report(const CommonOptions& o, const std::vector<std::string>& runs, const std::string& data_arg,
               const fs::path& out_dir) {
  const auto started = Clock::now();
  const Config c = resolve_config(o);
  if (runs.empty()) throw InputError("report needs at least one evaluated run");
  std::optional<Dataset> data;
  if (!data_arg.empty()) data = read_dataset(data_arg);

  StagedDir staged(out_dir);
  std::ofstream table(staged.path() / "comparison.tsv", std::ios::binary);
  table << "run\tinput\tmethod\tap\trecall_at_eer\teer\tiou\n";
  SvgPlot pr{"Precision-recall", "recall", "precision", {}, 0, 1, 0, 1, {}};
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  std::size_t found = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const fs::path run(runs[r]);
    const fs::path mfile = run / "metrics.txt";
    if (!fs::exists(mfile)) throw InputError("no metrics found in " + run.string());
    ++found;
    const auto m = read_metrics(mfile);
    const std::string scheme = m.count("scheme") ? m.at("scheme") : "?";
    const std::string experts = m.count("experts") ? m.at("experts") : "?";
    std::string name = run.filename().string();
    if (name.empty()) name = run.parent_path().filename().string();
    table << name << '\t' << experts << '\t' << method_label(scheme, experts) << '\t'
          << fmt6(parse_metric(m, "ap", mfile)) << '\t' << fmt6(parse_metric(m, "recall_at_eer", mfile))
          << '\t' << fmt6(parse_metric(m, "eer", mfile)) << '\t' << m.at("iou_threshold") << '\n';

    SvgSeries s{name, colors[r % std::size(colors)], {}};
    std::ifstream prf(run / "pr_curve.tsv");
    std::string line;
    std::getline(prf, line);
    while (std::getline(prf, line)) {
      double t = 0, p = 0, rc = 0;
      if (std::sscanf(line.c_str(), "%lf\t%lf\t%lf", &t, &p, &rc) == 3 ||
          std::sscanf(line.c_str(), "inf\t%lf\t%lf", &p, &rc) == 2) {
        s.points.emplace_back(rc, p);
      }
    }
    pr.series.push_back(std::move(s));

    if (!m.count("detections")) continue;
    const DetectionFile det = read_detections(m.at("detections"));
    const bool gated = std::any_of(det.detections.begin(), det.detections.end(),
                                   [](const Detection& d) { return d.gate.has_value(); });
    if (!gated) continue;
    const auto tl = gate_timeline(det);
    std::ofstream g(staged.path() / ("gate_timeline." + name + ".tsv"), std::ios::binary);
    g << "frame_index";
    for (const auto& e : det.experts) g << "\tg_" << e;
    g << '\n';
    SvgPlot plot{"Mean gate weight per frame (" + name + ")", "frame", "mean gate weight", {}, 0, 0, 0, 1, {}};
    for (std::size_t k = 0; k < det.experts.size(); ++k) {
      plot.series.push_back({"g_" + det.experts[k], colors[k % std::size(colors)], {}});
    }
    for (std::size_t i = 0; i < tl.size(); ++i) {
      g << det.frame_begin + i;
      for (std::size_t k = 0; k < tl[i].size(); ++k) {
        g << '\t' << fmt6(tl[i][k]);
        plot.series[k].points.emplace_back(static_cast<double>(det.frame_begin + i), tl[i][k]);
      }
      g << '\n';
    }
    if (data) {
      std::map<std::string, std::pair<std::vector<double>, std::size_t>> by_regime;
      for (std::size_t i = 0; i < tl.size(); ++i) {
        const std::size_t fi = det.frame_begin + i;
        if (fi >= data->frames.size()) throw InputError("gate timeline frame outside the dataset");
        if (i > 0 && data->frames[fi].regime != data->frames[fi - 1].regime) {
          plot.x_markers.push_back(static_cast<double>(fi));
        }
        if (std::isnan(tl[i][0])) continue;
        auto& [sum, n] = by_regime[data->frames[fi].regime];
        sum.resize(tl[i].size(), 0.0);
        for (std::size_t k = 0; k < tl[i].size(); ++k) sum[k] += tl[i][k];
        ++n;
      }
      std::ofstream br(staged.path() / ("gate_by_regime." + name + ".tsv"), std::ios::binary);
      br << "regime\tframes";
      for (const auto& e : det.experts) br << "\tmean_g_" << e;
      br << '\n';
      for (const auto& [regime, acc] : by_regime) {
        br << regime << '\t' << acc.second;
        for (double v : acc.first) br << '\t' << fmt6(v / static_cast<double>(acc.second));
        br << '\n';
      }
    }
    write_svg(staged.path() / ("gate_timeline." + name + ".svg"), plot);
  }
  if (found == 0) throw InputError("no metrics found");
  table.close();
  write_svg(staged.path() / "pr_curves.svg", pr);
  std::vector<std::pair<std::string, std::string>> io = {{"output", abs_string(out_dir)}};
  for (std::size_t r = 0; r < runs.size(); ++r) io.emplace_back("run." + std::to_string(r), abs_string(runs[r]));
  write_run_manifest(staged.path() / "run_manifest.txt", "report", c, io, started);
  staged.commit();
  std::cerr << "report: " << runs.size() << " runs summarised in " << out_dir.string() << '\n';
  return kExitOk;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "override, e.g. --set train.lr=0.02")->allow_extra_args(false);
  cmd->add_option("--seed", o.seed, "overrides train.seed and data.seed");
  cmd->add_option("--threads", o.threads, "worker thread cap");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  retain_heap_memory();
  CLI::App app{"Gated fusion of per-modality expert detectors"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  CommonOptions common;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multimodal dataset");
  std::string gen_out;
  gen->add_option("--out", gen_out, "dataset directory")->required();
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "train experts, gate, late head or channel net");
  std::string stage, train_data, train_out;
  train->add_option("--stage", stage, "experts | gate | late | channel")->required();
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "model directory")->required();
  add_common(train, common);

  auto* detect = app.add_subcommand("detect", "run sliding-window detection");
  std::string det_model, det_data, det_scheme = "mode", det_mods, det_split = "test", det_out;
  detect->add_option("--model", det_model, "model directory")->required();
  detect->add_option("--data", det_data, "dataset directory")->required();
  detect->add_option("--scheme", det_scheme, "mode | average | switch | late | channel");
  detect->add_option("--modalities", det_mods, "expert subset, e.g. rgb");
  detect->add_option("--split", det_split, "frame split to run on");
  detect->add_option("--out", det_out, "detections file")->required();
  add_common(detect, common);

  auto* eval = app.add_subcommand("eval", "evaluate a detections file");
  std::string ev_det, ev_data, ev_out;
  std::optional<double> ev_iou;
  eval->add_option("--detections", ev_det, "detections file")->required();
  eval->add_option("--data", ev_data, "dataset directory")->required();
  eval->add_option("--iou", ev_iou, "match IoU threshold (default eval.iou)");
  eval->add_option("--out", ev_out, "metrics directory")->required();
  add_common(eval, common);

  auto* report = app.add_subcommand("report", "compare evaluated runs");
  std::vector<std::string> rep_runs;
  std::string rep_data, rep_out;
  report->add_option("--runs", rep_runs, "metrics directories")->required();
  report->add_option("--data", rep_data, "dataset directory for per-regime gate means");
  report->add_option("--out", rep_out, "report directory")->required();
  add_common(report, common);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(common, gen_out);
    if (*train) return cmd_train(common, stage, train_data, train_out);
    if (*detect) return cmd_detect(common, det_model, det_data, det_scheme, det_mods, det_split, det_out);
    if (*eval) return cmd_eval(common, ev_det, ev_data, ev_iou, ev_out);
    if (*report) return cmd_report(common, rep_runs, rep_data, rep_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return kExitDependency;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace adafuse
