#pragma once

// Interactive recapture sessions: a directory-per-session store and the HTTP
// front end that drives predict -> edit -> render.
//
// Session directory layout (<data_dir>/<id>/):
//   session.json          metadata: state, target pose, layout versions, renders
//   source_image.png      normalized source image
//   source_layout.png     normalized source layout (+ .json sidecar)
//   source_pose.json      normalized source pose
//   layout_<v>.png        layout version v (0-based; + .json sidecar)
//   render_<k>.png        render k

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "recapture/inference.hpp"

namespace httplib {
class Server;
}

namespace recapture {

enum class SessionState { kCreated, kLayoutPredicted, kEdited, kRendered };
std::string_view to_string(SessionState state);
SessionState session_state_from_string(const std::string& s);

struct LayoutVersion {
  int version = 0;
  std::string kind;  // "predicted", "edited" or "replaced"
};

struct RenderEntry {
  int index = 0;
  int layout_version = 0;
};

struct SessionMeta {
  std::string id;
  SessionState state = SessionState::kCreated;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::optional<PoseKeypoints> target_pose;
  std::vector<LayoutVersion> layouts;
  std::vector<RenderEntry> renders;
  std::string created;
  std::string updated;

  nlohmann::json to_json() const;
  static SessionMeta from_json(const nlohmann::json& j);
};

/// Parses {"kind": "relabel"|"dilate"|"erode", "part", "target_part",
/// "amount", "yieldable"}; parts may be class indices or names.
LayoutEdit edit_from_json(const nlohmann::json& j, const std::vector<std::string>& class_names);

/// Everything but the model: persistence, validation and the state machine.
/// Safe for concurrent use; mutations of one session are serialized.
class SessionStore {
 public:
  SessionStore(std::filesystem::path root, std::shared_ptr<RecaptureModel> model, uint64_t seed = 0);

  bool has_model() const { return model_ != nullptr; }
  RecaptureModel* model() const { return model_.get(); }
  int working_height() const;
  int working_width() const;
  const std::vector<std::string>& class_names() const;

  SessionMeta create(const SourceSample& raw);
  SessionMeta get(const std::string& id) const;
  SourceSample source(const std::string& id) const;

  /// Runs the geometric stage for the target pose (working-resolution
  /// pixels). Repeating the current prediction is a no-op.
  SessionMeta predict(const std::string& id, const PoseKeypoints& target_pose);
  /// Applies edits to the latest layout, all-or-nothing. Empty list: no change.
  SessionMeta edit(const std::string& id, const std::vector<LayoutEdit>& edits);
  SessionMeta replace_layout(const std::string& id, const SemanticLayout& layout);
  SessionMeta render(const std::string& id);

  SemanticLayout layout(const std::string& id, std::optional<int> version = std::nullopt) const;
  std::string layout_png(const std::string& id, std::optional<int> version = std::nullopt) const;
  std::string render_png(const std::string& id, int index) const;
  nlohmann::json attention(const std::string& id, Pixel pixel);

  std::vector<std::string> list() const;

 private:
  std::filesystem::path dir(const std::string& id) const;
  void check_id(const std::string& id) const;
  void save_meta(SessionMeta& meta) const;
  std::mutex& lock_for(const std::string& id);
  RecaptureModel& require_model() const;
  std::string new_id();

  std::filesystem::path root_;
  std::shared_ptr<RecaptureModel> model_;
  mutable std::mutex locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
  std::mutex id_mutex_;
  uint64_t id_state_;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "recapture_sessions";
  std::filesystem::path checkpoint;  // empty: run without a model (503 on model routes)
  uint64_t seed = 0;
};

class HttpService {
 public:
  explicit HttpService(const ServiceOptions& options);
  HttpService(const ServiceOptions& options, std::shared_ptr<RecaptureModel> model);
  ~HttpService();

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const { return port_; }
  SessionStore& store() { return *store_; }

 private:
  void install_routes();

  ServiceOptions options_;
  std::unique_ptr<SessionStore> store_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

/// Loads the checkpoint (if any) and serves until the process is stopped.
void run_service(const ServiceOptions& options);

}  // namespace recapture
