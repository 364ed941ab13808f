#include "pcbear/pcbear.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "pcbear/error.hpp"
#include "pcbear/pipeline.hpp"
#include "pcbear/session.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

struct pcbear_session {
  std::shared_ptr<const pcbear::Session> impl;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_stage;

pcbear_status to_status(pcbear::ErrorCode code) { return static_cast<pcbear_status>(code); }

template <typename Fn>
pcbear_status guard(Fn&& fn) {
  g_error.clear();
  g_stage.clear();
  try {
    fn();
    return PCBEAR_OK;
  } catch (const pcbear::Error& e) {
    g_error = e.what();
    g_stage = e.stage();
    return to_status(e.code());
  } catch (const json::exception& e) {
    g_error = e.what();
    return PCBEAR_BAD_CONFIG;
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return PCBEAR_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    return PCBEAR_INTERNAL;
  } catch (...) {
    g_error = "unknown exception";
    return PCBEAR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) pcbear::fail(pcbear::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

json parse_config(const char* text) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    pcbear::fail(pcbear::ErrorCode::kBadConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

void emit(char** out, const json& j) {
  if (!out) return;
  const std::string s = j.dump();
  char* buf = static_cast<char*>(std::malloc(s.size() + 1));
  if (!buf) throw std::bad_alloc();
  std::memcpy(buf, s.c_str(), s.size() + 1);
  *out = buf;
}

const pcbear::Session& session_of(const pcbear_session* s) {
  require(s, "session");
  require(s->impl.get(), "session");
  return *s->impl;
}

}  // namespace

extern "C" {

const char* pcbear_version(void) { return PCBEAR_VERSION_STRING; }

const char* pcbear_status_string(pcbear_status status) {
  // to_string returns views into string literals, which are NUL-terminated.
  return pcbear::to_string(static_cast<pcbear::ErrorCode>(status)).data();
}

const char* pcbear_last_error(void) { return g_error.c_str(); }
const char* pcbear_last_error_stage(void) { return g_stage.c_str(); }

void pcbear_string_free(char* s) { std::free(s); }

pcbear_status pcbear_generate(const char* out_dir, const char* config, char** summary) {
  return guard([&] {
    require(out_dir, "out_dir");
    const auto cfg = pcbear::SyntheticConfig::from_json(parse_config(config));
    const auto bundle = pcbear::generate_synthetic(cfg);
    pcbear::write_bundle(bundle, out_dir);
    emit(summary, {{"out", out_dir},
                   {"videos", bundle.manifest.videos.size()},
                   {"train", bundle.manifest.indices(pcbear::Split::kTrain).size()},
                   {"test", bundle.manifest.indices(pcbear::Split::kTest).size()},
                   {"config", cfg.to_json()}});
  });
}

pcbear_status pcbear_windows(const char* bundle_dir, const char* out_path, const char* config,
                             char** summary) {
  return guard([&] {
    require(bundle_dir, "bundle_dir");
    require(out_path, "out_path");
    const auto cfg = pcbear::PipelineConfig::from_json(parse_config(config));
    const auto bundle = pcbear::load_bundle(bundle_dir).load_all();
    const auto corpus = pcbear::build_corpus(bundle, cfg.windows);
    pcbear::write_corpus(corpus, out_path);
    emit(summary, {{"out", out_path},
                   {"rows", corpus.size()},
                   {"dim", corpus.dim()},
                   {"T", corpus.window},
                   {"stride", corpus.stride},
                   {"normalized", corpus.normalized}});
  });
}

pcbear_status pcbear_cluster(const char* windows_path, const char* out_path, const char* config,
                             char** summary) {
  return guard([&] {
    require(windows_path, "windows_path");
    require(out_path, "out_path");
    const auto cfg = pcbear::PipelineConfig::from_json(parse_config(config));
    const auto corpus = pcbear::read_corpus(windows_path);
    const auto h = pcbear::finch_cluster(pcbear::view_of(corpus), cfg.metric);
    pcbear::write_json(out_path, h.to_json());
    json counts = json::array();
    for (const auto& p : h.partitions) counts.push_back(p.clusters);
    emit(summary, {{"out", out_path}, {"metric", pcbear::to_string(h.metric)}, {"clusters", counts}});
  });
}

pcbear_status pcbear_annotate(const char* bundle_dir, const char* windows_path,
                              const char* hierarchy_path, const char* out_path, const char* config,
                              char** summary) {
  return guard([&] {
    require(bundle_dir, "bundle_dir");
    require(windows_path, "windows_path");
    require(hierarchy_path, "hierarchy_path");
    require(out_path, "out_path");
    const auto cfg = pcbear::PipelineConfig::from_json(parse_config(config));
    const auto manifest = pcbear::load_bundle(bundle_dir).manifest();
    const auto corpus = pcbear::read_corpus(windows_path);
    const auto h = pcbear::PartitionHierarchy::from_json(pcbear::read_json(hierarchy_path));
    const auto scores = pcbear::score_partitions(h, corpus, manifest);
    const auto set = pcbear::annotate(h, corpus, manifest, cfg.partition);
    pcbear::write_json(out_path, set.to_json());
    json partitions = json::array();
    for (const auto& s : scores) {
      partitions.push_back({{"partition", s.index}, {"m", s.clusters}, {"nmi", s.nmi}});
    }
    emit(summary, {{"out", out_path},
                   {"selected_partition", set.partition_index},
                   {"m", set.annotation.concepts},
                   {"nmi", set.nmi},
                   {"partitions", partitions}});
  });
}

pcbear_status pcbear_train_concepts(const char* bundle_dir, const char* concepts_path,
                                    const char* model_dir, const char* config, char** summary) {
  return guard([&] {
    require(bundle_dir, "bundle_dir");
    require(concepts_path, "concepts_path");
    require(model_dir, "model_dir");
    const auto cfg = pcbear::PipelineConfig::from_json(parse_config(config));
    const auto bundle = pcbear::load_bundle(bundle_dir).load_all();
    const auto set = pcbear::ConceptSet::from_json(pcbear::read_json(concepts_path));
    pcbear::ConceptStageInfo info;
    const auto model = pcbear::train_concepts_stage(bundle, set, cfg.train, &info);
    pcbear::save_model(model, model_dir);
    emit(summary, {{"out", model_dir},
                   {"m", model.concepts()},
                   {"concept_loss", {{"initial", info.initial_loss}, {"final", info.final_loss}}},
                   {"train_concept_cosine",
                    pcbear::mean_concept_cosine(model, bundle, set, pcbear::Split::kTrain)},
                   {"warnings", info.warnings}});
  });
}

pcbear_status pcbear_train_classifier(const char* bundle_dir, const char* model_dir,
                                      const char* config, char** summary) {
  return guard([&] {
    require(bundle_dir, "bundle_dir");
    require(model_dir, "model_dir");
    auto model = pcbear::load_model(model_dir);
    if (config && *config) model.config = pcbear::PipelineConfig::from_json(parse_config(config)).train;
    const auto bundle = pcbear::load_bundle(bundle_dir).load_all();
    const auto sweep = pcbear::train_classifier_stage(model, bundle);
    pcbear::save_model(model, model_dir);
    json points = json::array();
    for (const auto& p : sweep) {
      points.push_back({{"lambda", p.lambda}, {"val_accuracy", p.val_accuracy}, {"nnz", p.nonzeros}});
    }
    emit(summary, {{"out", model_dir},
                   {"lambda", model.classifier.lambda},
                   {"lambda_sweep", points},
                   {"nnz_W_F", pcbear::nonzeros(model.classifier.weights)}});
  });
}

pcbear_status pcbear_run_pipeline(const char* bundle_dir, const char* out_dir, const char* config,
                                  char** report) {
  return guard([&] {
    require(bundle_dir, "bundle_dir");
    require(out_dir, "out_dir");
    const auto cfg = pcbear::PipelineConfig::from_json(parse_config(config));
    emit(report, pcbear::run_pipeline(bundle_dir, cfg, out_dir));
  });
}

pcbear_status pcbear_session_open(const char* model_dir, const char* bundle_dir,
                                  pcbear_session** out) {
  return guard([&] {
    require(model_dir, "model_dir");
    require(bundle_dir, "bundle_dir");
    require(out, "out");
    *out = nullptr;
    auto impl = pcbear::Session::open(model_dir, bundle_dir);
    *out = new pcbear_session{std::move(impl)};
  });
}

void pcbear_session_close(pcbear_session* session) { delete session; }

pcbear_status pcbear_session_videos(const pcbear_session* session, char** out) {
  return guard([&] { emit(out, session_of(session).videos()); });
}

pcbear_status pcbear_session_video(const pcbear_session* session, const char* video_id, char** out) {
  return guard([&] {
    require(video_id, "video_id");
    emit(out, session_of(session).video(video_id));
  });
}

pcbear_status pcbear_session_evaluate(const pcbear_session* session, const char* split, char** out) {
  return guard([&] {
    const auto s = split && *split ? pcbear::split_from_string(split) : pcbear::Split::kTest;
    emit(out, session_of(session).evaluation(s));
  });
}

pcbear_status pcbear_session_explain(const pcbear_session* session, const char* video_id,
                                     const char* target_class, size_t top_k, char** out) {
  return guard([&] {
    require(video_id, "video_id");
    const auto& s = session_of(session);
    const int cls = s.parse_class(target_class ? target_class : "auto");
    emit(out, s.contributions(video_id, cls, top_k));
  });
}

pcbear_status pcbear_session_intervene(const pcbear_session* session, const char* video_id,
                                       const int* suppress, size_t count, char** out) {
  return guard([&] {
    require(video_id, "video_id");
    if (count > 0) require(suppress, "suppress");
    const std::vector<int> ids(suppress, suppress + count);
    emit(out, session_of(session).intervene(video_id, ids));
  });
}

pcbear_status pcbear_session_concepts(const pcbear_session* session, char** out) {
  return guard([&] { emit(out, session_of(session).concepts()); });
}

pcbear_status pcbear_session_concept(const pcbear_session* session, int concept_id, char** out) {
  return guard([&] { emit(out, session_of(session).concept_window(concept_id)); });
}

pcbear_status pcbear_session_report(const pcbear_session* session, const char* level,
                                    const char* target_class, const char* split, char** out) {
  return guard([&] {
    const auto& s = session_of(session);
    const std::string lvl = level && *level ? level : "summary";
    const auto sp = split && *split ? pcbear::split_from_string(split) : pcbear::Split::kTest;
    if (lvl == "summary") {
      emit(out, s.report());
    } else if (lvl == "task") {
      emit(out, s.task_report(sp));
    } else if (lvl == "class") {
      const int cls = s.parse_class(target_class ? target_class : "");
      if (cls == pcbear::kAutoClass) {
        pcbear::fail(pcbear::ErrorCode::kBadClass, "class-level report needs a class");
      }
      emit(out, s.class_report(cls, sp));
    } else {
      pcbear::fail(pcbear::ErrorCode::kInvalidArgument, "level must be summary|class|task");
    }
  });
}

pcbear_status pcbear_session_weights(const pcbear_session* session, const int* classes, size_t count,
                                     size_t top_n, char** out) {
  return guard([&] {
    if (count > 0) require(classes, "classes");
    emit(out, session_of(session).weights(std::vector<int>(classes, classes + count), top_n));
  });
}

pcbear_status pcbear_session_serve(const pcbear_session* session, const char* host, int port) {
  return guard([&] {
    session_of(session);
    pcbear::serve(session->impl, host ? host : "127.0.0.1", port);
  });
}

pcbear_status pcbear_cue(double top1_percent, size_t concepts, double* out) {
  return guard([&] {
    require(out, "out");
    *out = pcbear::concept_utilization_efficiency(top1_percent, concepts);
  });
}

pcbear_status pcbear_nmi(const int* a, const int* b, size_t n, double* out) {
  return guard([&] {
    require(out, "out");
    if (n > 0) {
      require(a, "a");
      require(b, "b");
    }
    *out = pcbear::nmi(std::span<const int>(a, n), std::span<const int>(b, n));
  });
}

}  // extern "C"
