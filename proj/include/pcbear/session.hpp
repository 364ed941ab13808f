#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcbear/bottleneck.hpp"
#include "pcbear/dataset_io.hpp"
#include "pcbear/error.hpp"
#include "pcbear/explain.hpp"

namespace httplib {
class Server;
}

namespace pcbear {

// A trained model and its dataset, loaded once and then read only. Every
// view is a JSON document built from the same operations the CLI calls.
class Session {
 public:
  // Errors: anything from load_model / load_bundle, ShapeMismatch when the
  // model and dataset disagree on d, m or k, InvalidArgument when the model
  // has no classifier.
  static std::shared_ptr<const Session> open(const std::filesystem::path& model_dir,
                                             const std::filesystem::path& bundle_dir);
  Session(BottleneckModel model, DatasetBundle bundle, nlohmann::json report = nullptr);

  const BottleneckModel& model() const noexcept { return model_; }
  const DatasetBundle& bundle() const noexcept { return bundle_; }

  // Errors: UnknownVideo.
  std::size_t video_index(const std::string& id) const;
  const VectorXd& activations(std::size_t video) const { return activations_.at(video); }

  nlohmann::json videos() const;
  nlohmann::json video(const std::string& id) const;
  nlohmann::json contributions(const std::string& id, int target_class = kAutoClass,
                               std::size_t top_k = 3) const;
  nlohmann::json intervene(const std::string& id, const std::vector<int>& suppress) const;
  nlohmann::json concepts() const;
  // Medoid window of concept i as a T x J x 2 array. Errors: BadConceptId.
  nlohmann::json concept_window(int concept_id) const;
  // Stored report.json when the model directory has one, else evaluation of
  // the test split (train when test is empty).
  nlohmann::json report() const;
  nlohmann::json evaluation(Split split) const;
  nlohmann::json class_report(int target_class, Split split) const;
  nlohmann::json task_report(Split split) const;
  nlohmann::json weights(const std::vector<int>& classes, std::size_t top_n) const;

  // Parses "auto" or a class index / class name. Errors: BadClass.
  int parse_class(const std::string& s) const;

 private:
  nlohmann::json medoid_ref(int concept_id) const;

  BottleneckModel model_;
  DatasetBundle bundle_;
  nlohmann::json report_;
  std::map<std::string, std::size_t> index_;
  std::vector<VectorXd> activations_;
  std::vector<Prediction> predictions_;
};

// HTTP status for an error code: 404 for lookups that miss, 400 for bad
// requests, 500 otherwise.
int http_status(ErrorCode code) noexcept;

// Registers the /api routes on an existing server.
void mount(httplib::Server& server, std::shared_ptr<const Session> session);

// Blocks until the server stops. Errors: IoFailure when the port cannot be bound.
void serve(std::shared_ptr<const Session> session, const std::string& host, int port);

}  // namespace pcbear
