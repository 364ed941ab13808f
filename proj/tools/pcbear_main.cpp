// pcbear command-line front end. Talks to the library only through pcbear.h.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcbear/pcbear.h"

using nlohmann::json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  bool percent = false;
};

struct Failure {
  pcbear_status status;
};

void add_common(CLI::App* cmd, Common& c, bool percent = false) {
  cmd->add_option("--seed", c.seed, "RNG seed (overrides the config)");
  cmd->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  if (percent) cmd->add_flag("--percent", c.percent, "Print NMI as a percentage");
}

json load_config(const Common& c) {
  json cfg = json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      std::cerr << "error: " << c.config_path << ": " << e.what() << '\n';
      throw Failure{PCBEAR_BAD_CONFIG};
    }
  }
  if (c.seed) cfg["seed"] = *c.seed;
  return cfg;
}

void check(pcbear_status st) {
  if (st == PCBEAR_OK) return;
  std::cerr << "error";
  const std::string stage = pcbear_last_error_stage();
  if (!stage.empty()) std::cerr << " [stage=" << stage << "]";
  std::cerr << ": " << pcbear_status_string(st) << ": " << pcbear_last_error() << '\n';
  throw Failure{st};
}

void scale_nmi(json& j) {
  if (j.is_object()) {
    for (auto& [key, value] : j.items()) {
      if (key == "nmi" && value.is_number()) {
        value = 100.0 * value.get<double>();
      } else {
        scale_nmi(value);
      }
    }
  } else if (j.is_array()) {
    for (auto& v : j) scale_nmi(v);
  }
}

// Takes ownership of a library string, prints it and frees it.
void print(char* raw, bool percent = false) {
  std::unique_ptr<char, void (*)(char*)> owned(raw, pcbear_string_free);
  if (!owned) return;
  json j = json::parse(owned.get());
  if (percent) scale_nmi(j);
  std::cout << j.dump(2) << '\n';
}

std::vector<int> parse_ids(const std::string& list) {
  std::vector<int> ids;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      std::cerr << "error: bad concept id '" << item << "'\n";
      throw Failure{PCBEAR_INVALID_ARGUMENT};
    }
  }
  return ids;
}

class SessionHandle {
 public:
  SessionHandle(const std::string& model, const std::string& bundle) {
    check(pcbear_session_open(model.c_str(), bundle.c_str(), &s_));
  }
  ~SessionHandle() { pcbear_session_close(s_); }
  SessionHandle(const SessionHandle&) = delete;
  SessionHandle& operator=(const SessionHandle&) = delete;
  const pcbear_session* get() const { return s_; }

 private:
  pcbear_session* s_ = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pose concept bottleneck toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pcbear_version()));

  Common common;
  std::string bundle, model, out, windows, hierarchy, concepts, video, klass = "auto", suppress;
  std::string split = "test", level = "summary", partition, metric, host = "127.0.0.1", scale_mode;
  std::size_t top = 3, per_class = 0, frames = 0, dim = 0, window = 0, stride = 0;
  std::optional<double> noise, lambda;
  bool no_normalize = false;
  std::vector<int> weight_classes;
  int port = 8080;

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset bundle");
  add_common(gen, common);
  gen->add_option("--out", out, "Bundle directory")->required();
  gen->add_option("--per-class", per_class, "Videos per class");
  gen->add_option("--frames,-L", frames, "Frames per video");
  gen->add_option("--dim,-d", dim, "Feature dimension");
  gen->add_option("--noise", noise, "Noise sigma");

  auto add_window_opts = [&](CLI::App* cmd) {
    cmd->add_option("-T,--window", window, "Window length in frames");
    cmd->add_option("--stride", stride, "Window stride");
    cmd->add_flag("--no-normalize", no_normalize, "Keep raw pixel coordinates");
    cmd->add_option("--scale-mode", scale_mode, "torso|bbox")->check(CLI::IsMember({"torso", "bbox"}));
  };
  auto* win = app.add_subcommand("windows", "Normalize poses and cut temporal windows");
  add_common(win, common);
  win->add_option("--bundle", bundle, "Dataset bundle")->required();
  win->add_option("--out", out, "Output matrix path (sidecar written to <out>.json)")->required();
  add_window_opts(win);

  auto* clu = app.add_subcommand("cluster", "First-neighbor hierarchy over windows");
  add_common(clu, common);
  clu->add_option("--windows", windows, "Window matrix from `windows`")->required();
  clu->add_option("--out", out, "hierarchy.json path")->required();
  clu->add_option("--metric", metric, "euclidean|cosine")->check(CLI::IsMember({"euclidean", "cosine"}));

  auto* ann = app.add_subcommand("annotate", "Pick a partition and assign per-video concepts");
  add_common(ann, common, true);
  ann->add_option("--bundle", bundle, "Dataset bundle")->required();
  ann->add_option("--windows", windows, "Window matrix")->required();
  ann->add_option("--hierarchy", hierarchy, "hierarchy.json")->required();
  ann->add_option("--out", out, "concepts.json path")->required();
  ann->add_option("--partition", partition, "exact-m:N | min-m:N | target-m:N | index:i");

  auto* tc = app.add_subcommand("train-concepts", "Train the concept layer");
  add_common(tc, common);
  tc->add_option("--bundle", bundle, "Dataset bundle")->required();
  tc->add_option("--concepts", concepts, "concepts.json")->required();
  tc->add_option("--model", model, "Model directory")->required();

  auto* tf = app.add_subcommand("train-classifier", "Fit the sparse classifier");
  add_common(tf, common);
  tf->add_option("--bundle", bundle, "Dataset bundle")->required();
  tf->add_option("--model", model, "Model directory")->required();
  tf->add_option("--lambda", lambda, "Fixed regularization strength (skips the sweep)");

  auto add_session_opts = [&](CLI::App* cmd) {
    cmd->add_option("--bundle", bundle, "Dataset bundle")->required();
    cmd->add_option("--model", model, "Model directory")->required();
  };
  auto* ev = app.add_subcommand("evaluate", "Top-1 accuracy and CUE");
  add_common(ev, common);
  add_session_opts(ev);
  ev->add_option("--split", split, "train|test")->check(CLI::IsMember({"train", "test"}));

  auto* ex = app.add_subcommand("explain", "Per-concept contributions for one video");
  add_common(ex, common);
  add_session_opts(ex);
  ex->add_option("--video", video, "Video id")->required();
  ex->add_option("--class", klass, "auto, class index or class name");
  ex->add_option("--top", top, "Number of concepts listed");

  auto* iv = app.add_subcommand("intervene", "Suppress concepts and re-predict");
  add_common(iv, common);
  add_session_opts(iv);
  iv->add_option("--video", video, "Video id")->required();
  iv->add_option("--suppress", suppress, "Comma-separated concept ids");

  auto* rp = app.add_subcommand("report", "Summary, class-level or task-level report");
  add_common(rp, common, true);
  add_session_opts(rp);
  rp->add_option("--level", level, "summary|class|task|weights")
      ->check(CLI::IsMember({"summary", "class", "task", "weights"}));
  rp->add_option("--class", klass, "Class for --level class");
  rp->add_option("--classes", weight_classes, "Classes for --level weights")->delimiter(',');
  rp->add_option("--top", top, "Entries per class for --level weights");
  rp->add_option("--split", split, "train|test")->check(CLI::IsMember({"train", "test"}));

  auto* run = app.add_subcommand("run", "Whole pipeline from a dataset bundle");
  add_common(run, common, true);
  run->add_option("--bundle", bundle, "Dataset bundle")->required();
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--partition", partition, "exact-m:N | min-m:N | target-m:N | index:i");
  add_window_opts(run);

  auto* srv = app.add_subcommand("serve", "HTTP API over a trained model");
  add_common(srv, common);
  add_session_opts(srv);
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));

  CLI11_PARSE(app, argc, argv);

  try {
    json cfg = load_config(common);
    auto apply_windows = [&] {
      if (window) cfg["windows"]["T"] = window;
      if (stride) cfg["windows"]["stride"] = stride;
      if (no_normalize) cfg["windows"]["normalize"] = false;
      if (!scale_mode.empty()) cfg["windows"]["scale_mode"] = scale_mode;
    };
    if (!partition.empty()) cfg["cluster"]["partition"] = partition;
    if (!metric.empty()) cfg["cluster"]["metric"] = metric;
    char* result = nullptr;

    if (*gen) {
      if (per_class) cfg["per_class"] = per_class;
      if (frames) cfg["L"] = frames;
      if (dim) cfg["d"] = dim;
      if (noise) cfg["noise_sigma"] = *noise;
      check(pcbear_generate(out.c_str(), cfg.dump().c_str(), &result));
      print(result);
    } else if (*win) {
      apply_windows();
      check(pcbear_windows(bundle.c_str(), out.c_str(), cfg.dump().c_str(), &result));
      print(result);
    } else if (*clu) {
      check(pcbear_cluster(windows.c_str(), out.c_str(), cfg.dump().c_str(), &result));
      print(result);
    } else if (*ann) {
      check(pcbear_annotate(bundle.c_str(), windows.c_str(), hierarchy.c_str(), out.c_str(),
                            cfg.dump().c_str(), &result));
      print(result, common.percent);
    } else if (*tc) {
      check(pcbear_train_concepts(bundle.c_str(), concepts.c_str(), model.c_str(), cfg.dump().c_str(),
                                  &result));
      print(result);
    } else if (*tf) {
      if (lambda) cfg["train"]["lambda"] = *lambda;
      const bool overridden = !common.config_path.empty() || common.seed || lambda;
      check(pcbear_train_classifier(bundle.c_str(), model.c_str(),
                                    overridden ? cfg.dump().c_str() : nullptr, &result));
      print(result);
    } else if (*ev) {
      SessionHandle s(model, bundle);
      check(pcbear_session_evaluate(s.get(), split.c_str(), &result));
      print(result);
    } else if (*ex) {
      SessionHandle s(model, bundle);
      check(pcbear_session_explain(s.get(), video.c_str(), klass.c_str(), top, &result));
      print(result);
    } else if (*iv) {
      SessionHandle s(model, bundle);
      const auto ids = parse_ids(suppress);
      check(pcbear_session_intervene(s.get(), video.c_str(), ids.data(), ids.size(), &result));
      print(result);
    } else if (*rp) {
      SessionHandle s(model, bundle);
      if (level == "weights") {
        check(pcbear_session_weights(s.get(), weight_classes.data(), weight_classes.size(), top, &result));
      } else {
        check(pcbear_session_report(s.get(), level.c_str(), klass.c_str(), split.c_str(), &result));
      }
      print(result, common.percent);
    } else if (*run) {
      apply_windows();
      check(pcbear_run_pipeline(bundle.c_str(), out.c_str(), cfg.dump().c_str(), &result));
      print(result, common.percent);
    } else if (*srv) {
      SessionHandle s(model, bundle);
      std::cerr << "serving on http://" << host << ":" << port << '\n';
      check(pcbear_session_serve(s.get(), host.c_str(), port));
    }
  } catch (const Failure& f) {
    return static_cast<int>(f.status);
  }
  return 0;
}
