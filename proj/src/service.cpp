#include "recapture/service.hpp"

#include <httplib.h>

#include <chrono>
#include <ctime>
#include <iostream>
#include <random>
#include <regex>

#include "recapture/error.hpp"
#include "recapture/formats.hpp"
#include "recapture/puppet.hpp"

namespace fs = std::filesystem;

namespace recapture {

namespace {

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string layout_file(int version) { return "layout_" + std::to_string(version) + ".png"; }
std::string render_file(int index) { return "render_" + std::to_string(index) + ".png"; }

int part_from_json(const nlohmann::json& j, const std::vector<std::string>& names) {
  if (j.is_number_integer()) return j.get<int>();
  if (j.is_string()) {
    const int idx = class_index(names, j.get<std::string>());
    if (idx < 0) fail(ErrorKind::kInvalidArgument, "unknown class name '" + j.get<std::string>() + "'");
    return idx;
  }
  fail(ErrorKind::kInvalidArgument, "part must be a class index or name");
}

}  // namespace

std::string_view to_string(SessionState state) {
  switch (state) {
    case SessionState::kCreated: return "created";
    case SessionState::kLayoutPredicted: return "layout_predicted";
    case SessionState::kEdited: return "edited";
    case SessionState::kRendered: return "rendered";
  }
  return "created";
}

SessionState session_state_from_string(const std::string& s) {
  if (s == "created") return SessionState::kCreated;
  if (s == "layout_predicted") return SessionState::kLayoutPredicted;
  if (s == "edited") return SessionState::kEdited;
  if (s == "rendered") return SessionState::kRendered;
  fail(ErrorKind::kInvalidArgument, "unknown session state '" + s + "'");
}

nlohmann::json SessionMeta::to_json() const {
  nlohmann::json layouts_json = nlohmann::json::array();
  for (const auto& l : layouts) layouts_json.push_back({{"version", l.version}, {"kind", l.kind}});
  nlohmann::json renders_json = nlohmann::json::array();
  for (const auto& r : renders) renders_json.push_back({{"index", r.index}, {"layout_version", r.layout_version}});
  return {{"id", id},
          {"state", std::string(recapture::to_string(state))},
          {"height", height},
          {"width", width},
          {"num_classes", num_classes},
          {"target_pose", target_pose ? pose_to_json(*target_pose) : nlohmann::json(nullptr)},
          {"layouts", layouts_json},
          {"layout_version", layouts.empty() ? nlohmann::json(nullptr) : nlohmann::json(layouts.back().version)},
          {"renders", renders_json},
          {"created", created},
          {"updated", updated}};
}

SessionMeta SessionMeta::from_json(const nlohmann::json& j) {
  SessionMeta m;
  m.id = j.at("id").get<std::string>();
  m.state = session_state_from_string(j.at("state").get<std::string>());
  m.height = j.at("height").get<int>();
  m.width = j.at("width").get<int>();
  m.num_classes = j.at("num_classes").get<int>();
  if (!j.at("target_pose").is_null()) m.target_pose = pose_from_json(j.at("target_pose"));
  for (const auto& l : j.at("layouts")) m.layouts.push_back({l.at("version").get<int>(), l.at("kind").get<std::string>()});
  for (const auto& r : j.at("renders")) m.renders.push_back({r.at("index").get<int>(), r.at("layout_version").get<int>()});
  m.created = j.at("created").get<std::string>();
  m.updated = j.at("updated").get<std::string>();
  return m;
}

LayoutEdit edit_from_json(const nlohmann::json& j, const std::vector<std::string>& names) {
  if (!j.is_object()) fail(ErrorKind::kInvalidArgument, "each edit must be a JSON object");
  LayoutEdit e;
  const auto kind = j.value("kind", std::string());
  if (kind == "relabel") {
    e.kind = LayoutEdit::Kind::kRelabel;
    if (!j.contains("target_part")) fail(ErrorKind::kInvalidArgument, "relabel needs target_part");
    e.target_part = part_from_json(j.at("target_part"), names);
  } else if (kind == "dilate" || kind == "erode") {
    e.kind = kind == "dilate" ? LayoutEdit::Kind::kDilate : LayoutEdit::Kind::kErode;
    e.amount = j.value("amount", 1);
  } else {
    fail(ErrorKind::kInvalidArgument, "edit kind must be relabel, dilate or erode");
  }
  if (!j.contains("part")) fail(ErrorKind::kInvalidArgument, "edit needs a part");
  e.part = part_from_json(j.at("part"), names);
  if (j.contains("yieldable")) {
    for (const auto& y : j.at("yieldable")) e.yieldable.push_back(part_from_json(y, names));
  }
  return e;
}

SessionStore::SessionStore(fs::path root, std::shared_ptr<RecaptureModel> model, uint64_t seed)
    : root_(std::move(root)), model_(std::move(model)) {
  fs::create_directories(root_);
  id_state_ = seed != 0 ? seed : (static_cast<uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
}

int SessionStore::working_height() const { return model_ ? model_->height() : 64; }
int SessionStore::working_width() const { return model_ ? model_->width() : 64; }
const std::vector<std::string>& SessionStore::class_names() const {
  return model_ ? model_->class_names() : lip20_class_names();
}

fs::path SessionStore::dir(const std::string& id) const { return root_ / id; }

void SessionStore::check_id(const std::string& id) const {
  static const std::regex pattern("^[0-9a-f]{16}$");
  if (!std::regex_match(id, pattern) || !fs::exists(dir(id) / "session.json")) {
    fail(ErrorKind::kNotFound, "no session '" + id + "'");
  }
}

std::mutex& SessionStore::lock_for(const std::string& id) {
  std::lock_guard guard(locks_mutex_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

RecaptureModel& SessionStore::require_model() const {
  if (!model_) fail(ErrorKind::kUnavailable, "no checkpoint loaded");
  return *model_;
}

std::string SessionStore::new_id() {
  std::lock_guard guard(id_mutex_);
  std::mt19937_64 rng(id_state_);
  for (;;) {
    const uint64_t value = rng();
    id_state_ = rng();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    if (!fs::exists(dir(buf))) {
      fs::create_directories(dir(buf));
      return buf;
    }
  }
}

void SessionStore::save_meta(SessionMeta& meta) const {
  meta.updated = now_utc();
  write_file(dir(meta.id) / "session.json", dump_json(meta.to_json()));
}

SessionMeta SessionStore::create(const SourceSample& raw) {
  SourceSample sample;
  if (model_) {
    sample = model_->normalize(raw);
  } else {
    raw.pose.validate();
    raw.layout.validate();
    if (raw.layout.num_classes() != static_cast<int>(class_names().size())) {
      fail(ErrorKind::kUnprocessable, "layout has " + std::to_string(raw.layout.num_classes()) + " classes, expected " +
                                          std::to_string(class_names().size()));
    }
    if (!raw.layout.is_hard()) fail(ErrorKind::kUnprocessable, "layout is not hard (one class per pixel)");
    if (raw.image.height() != raw.layout.height() || raw.image.width() != raw.layout.width()) {
      fail(ErrorKind::kUnprocessable, "image and layout sizes differ");
    }
    sample = resize_sample(raw, working_height(), working_width());
    sample.layout.class_names = class_names();
  }
  const auto id = new_id();
  std::lock_guard guard(lock_for(id));
  save_image(dir(id) / "source_image.png", sample.image);
  save_layout(dir(id) / "source_layout.png", sample.layout);
  save_pose(dir(id) / "source_pose.json", sample.pose);
  SessionMeta meta;
  meta.id = id;
  meta.height = working_height();
  meta.width = working_width();
  meta.num_classes = static_cast<int>(class_names().size());
  meta.created = now_utc();
  save_meta(meta);
  return meta;
}

SessionMeta SessionStore::get(const std::string& id) const {
  check_id(id);
  return SessionMeta::from_json(nlohmann::json::parse(read_file(dir(id) / "session.json")));
}

SourceSample SessionStore::source(const std::string& id) const {
  check_id(id);
  return {load_image(dir(id) / "source_image.png"), load_layout(dir(id) / "source_layout.png"),
          load_pose(dir(id) / "source_pose.json")};
}

SemanticLayout SessionStore::layout(const std::string& id, std::optional<int> version) const {
  const auto meta = get(id);
  if (meta.layouts.empty()) fail(ErrorKind::kConflict, "session " + id + " has no layout yet");
  const int v = version.value_or(meta.layouts.back().version);
  if (v < 0 || v >= static_cast<int>(meta.layouts.size())) {
    fail(ErrorKind::kNotFound, "session " + id + " has no layout version " + std::to_string(v));
  }
  return load_layout(dir(id) / layout_file(v));
}

std::string SessionStore::layout_png(const std::string& id, std::optional<int> version) const {
  const auto meta = get(id);
  if (meta.layouts.empty()) fail(ErrorKind::kConflict, "session " + id + " has no layout yet");
  const int v = version.value_or(meta.layouts.back().version);
  if (v < 0 || v >= static_cast<int>(meta.layouts.size())) {
    fail(ErrorKind::kNotFound, "session " + id + " has no layout version " + std::to_string(v));
  }
  return read_file(dir(id) / layout_file(v));
}

SessionMeta SessionStore::predict(const std::string& id, const PoseKeypoints& target_pose) {
  check_id(id);
  target_pose.validate();
  auto& model = require_model();
  std::lock_guard guard(lock_for(id));
  auto meta = get(id);
  if (meta.target_pose && *meta.target_pose == target_pose && !meta.layouts.empty() &&
      meta.layouts.back().kind == "predicted") {
    return meta;
  }
  const auto predicted = model.predict_layout(source(id), target_pose);
  const int version = static_cast<int>(meta.layouts.size());
  save_layout(dir(id) / layout_file(version), predicted);
  meta.layouts.push_back({version, "predicted"});
  meta.target_pose = target_pose;
  meta.state = SessionState::kLayoutPredicted;
  save_meta(meta);
  return meta;
}

SessionMeta SessionStore::edit(const std::string& id, const std::vector<LayoutEdit>& edits) {
  check_id(id);
  std::lock_guard guard(lock_for(id));
  auto meta = get(id);
  if (meta.layouts.empty()) fail(ErrorKind::kConflict, "predict a layout before editing session " + id);
  if (edits.empty()) return meta;
  auto current = layout(id);
  for (size_t i = 0; i < edits.size(); ++i) {
    try {
      edits[i].validate(current.num_classes());
      current = apply_edit(current, edits[i]);
    } catch (const Error& e) {
      fail(e.kind(), "edit " + std::to_string(i) + ": " + e.what());
    }
  }
  const int version = static_cast<int>(meta.layouts.size());
  save_layout(dir(id) / layout_file(version), current);
  meta.layouts.push_back({version, "edited"});
  meta.state = SessionState::kEdited;
  save_meta(meta);
  return meta;
}

SessionMeta SessionStore::replace_layout(const std::string& id, const SemanticLayout& replacement) {
  check_id(id);
  std::lock_guard guard(lock_for(id));
  auto meta = get(id);
  if (meta.layouts.empty()) fail(ErrorKind::kConflict, "predict a layout before replacing it in session " + id);
  replacement.validate();
  if (replacement.num_classes() != meta.num_classes) {
    fail(ErrorKind::kUnprocessable, "replacement layout has " + std::to_string(replacement.num_classes()) +
                                        " classes, expected " + std::to_string(meta.num_classes));
  }
  if (replacement.height() != meta.height || replacement.width() != meta.width) {
    fail(ErrorKind::kUnprocessable, "replacement layout must be " + std::to_string(meta.height) + "x" +
                                        std::to_string(meta.width));
  }
  if (!replacement.is_hard()) fail(ErrorKind::kUnprocessable, "replacement layout is not hard");
  auto stored = replacement;
  stored.class_names = class_names();
  const int version = static_cast<int>(meta.layouts.size());
  save_layout(dir(id) / layout_file(version), stored);
  meta.layouts.push_back({version, "replaced"});
  meta.state = SessionState::kEdited;
  save_meta(meta);
  return meta;
}

SessionMeta SessionStore::render(const std::string& id) {
  check_id(id);
  std::lock_guard guard(lock_for(id));
  auto meta = get(id);
  if (meta.layouts.empty() || !meta.target_pose) fail(ErrorKind::kConflict, "session " + id + " has no layout to render");
  auto& model = require_model();
  const auto image = model.render(source(id), layout(id), *meta.target_pose);
  const int index = static_cast<int>(meta.renders.size());
  save_image(dir(id) / render_file(index), image);
  meta.renders.push_back({index, meta.layouts.back().version});
  meta.state = SessionState::kRendered;
  save_meta(meta);
  return meta;
}

std::string SessionStore::render_png(const std::string& id, int index) const {
  const auto meta = get(id);
  if (index < 0 || index >= static_cast<int>(meta.renders.size())) {
    fail(ErrorKind::kNotFound, "session " + id + " has no render " + std::to_string(index));
  }
  return read_file(dir(id) / render_file(index));
}

nlohmann::json SessionStore::attention(const std::string& id, Pixel pixel) {
  check_id(id);
  std::lock_guard guard(lock_for(id));
  const auto meta = get(id);
  if (meta.layouts.empty() || !meta.target_pose) fail(ErrorKind::kConflict, "session " + id + " has no layout yet");
  auto& model = require_model();
  auto out = model.attention(source(id), layout(id), *meta.target_pose, pixel);
  out["layout_version"] = meta.layouts.back().version;
  return out;
}

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root_)) {
    if (fs::exists(e.path() / "session.json")) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// --- HTTP --------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorKind kind, const std::string& message) {
  send_json(res, {{"error", std::string(to_string(kind))}, {"message", message}}, http_status(kind));
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_error(res, e.kind(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, ErrorKind::kInvalidArgument, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_json(res, {{"error", "internal"}, {"message", e.what()}}, 500);
    }
  };
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) fail(ErrorKind::kInvalidArgument, "request body is empty");
  return nlohmann::json::parse(req.body);
}

PoseKeypoints pose_from_request(const nlohmann::json& body, int height, int width) {
  if (body.is_array()) return pose_from_json(body);
  if (body.contains("pose")) return pose_from_json(body.at("pose"));
  if (body.contains("preset")) {
    const auto name = body.at("preset").get<std::string>();
    for (const auto& [preset, params] : pose_presets()) {
      if (preset == name) return preset_keypoints(params, height, width);
    }
    fail(ErrorKind::kNotFound, "no pose preset '" + name + "'");
  }
  fail(ErrorKind::kInvalidArgument, "body must be a pose array, {\"pose\": ...} or {\"preset\": name}");
}

const httplib::MultipartFormData& form_file(const httplib::Request& req, const std::string& name) {
  if (!req.has_file(name)) fail(ErrorKind::kInvalidArgument, "missing form field '" + name + "'");
  return req.files.find(name)->second;
}

}  // namespace

HttpService::HttpService(const ServiceOptions& options) : HttpService(options, nullptr) {
  if (!options.checkpoint.empty()) {
    store_ = std::make_unique<SessionStore>(options.data_dir, RecaptureModel::load(options.checkpoint), options.seed);
  }
}

HttpService::HttpService(const ServiceOptions& options, std::shared_ptr<RecaptureModel> model)
    : options_(options),
      store_(std::make_unique<SessionStore>(options.data_dir, std::move(model), options.seed)),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpService::~HttpService() { stop(); }

void HttpService::install_routes() {
  auto& s = *server_;
  auto st = [this]() -> SessionStore& { return *store_; };

  s.Get("/healthz", guarded([st](const httplib::Request&, httplib::Response& res) {
          auto& store = st();
          nlohmann::json body = {{"status", "ok"},
                                 {"model_loaded", store.has_model()},
                                 {"height", store.working_height()},
                                 {"width", store.working_width()},
                                 {"num_classes", store.class_names().size()}};
          if (store.has_model()) body["step"] = store.model()->step();
          send_json(res, body);
        }));

  s.Get("/poses", guarded([st](const httplib::Request&, httplib::Response& res) {
          auto& store = st();
          nlohmann::json poses = nlohmann::json::array();
          for (const auto& [name, params] : pose_presets()) {
            poses.push_back(
                {{"name", name}, {"keypoints", pose_to_json(preset_keypoints(params, store.working_height(), store.working_width()))}});
          }
          send_json(res, {{"poses", poses}});
        }));

  s.Post("/sessions", guarded([st](const httplib::Request& req, httplib::Response& res) {
           auto& store = st();
           if (!req.is_multipart_form_data()) {
             fail(ErrorKind::kInvalidArgument, "POST /sessions expects multipart form data (image, layout, pose)");
           }
           auto names = store.class_names();
           if (req.has_file("layout_meta")) {
             const auto meta = nlohmann::json::parse(form_file(req, "layout_meta").content);
             names = meta.at("class_names").get<std::vector<std::string>>();
             if (meta.value("num_classes", static_cast<int>(names.size())) != static_cast<int>(names.size())) {
               fail(ErrorKind::kUnprocessable, "layout sidecar num_classes disagrees with class_names");
             }
           }
           SourceSample raw;
           raw.image = raster_to_image(decode_png(form_file(req, "image").content));
           const auto layout_raster = decode_png(form_file(req, "layout").content);
           raw.layout = raster_to_layout(layout_raster, static_cast<int>(names.size()), names);
           raw.pose = pose_from_json(nlohmann::json::parse(form_file(req, "pose").content));
           send_json(res, store.create(raw).to_json(), 201);
         }));

  s.Get(R"(/sessions/([^/]+))", guarded([st](const httplib::Request& req, httplib::Response& res) {
          send_json(res, st().get(req.matches[1]).to_json());
        }));

  s.Post(R"(/sessions/([^/]+)/layout)", guarded([st](const httplib::Request& req, httplib::Response& res) {
           auto& store = st();
           const std::string id = req.matches[1];
           store.get(id);
           const auto pose = pose_from_request(parse_body(req), store.working_height(), store.working_width());
           send_json(res, store.predict(id, pose).to_json());
         }));

  s.Get(R"(/sessions/([^/]+)/layout)", guarded([st](const httplib::Request& req, httplib::Response& res) {
          std::optional<int> version;
          if (req.has_param("version")) {
            try {
              version = std::stoi(req.get_param_value("version"));
            } catch (const std::exception&) {
              fail(ErrorKind::kInvalidArgument, "version must be an integer");
            }
          }
          res.set_content(st().layout_png(req.matches[1], version), "image/png");
        }));

  s.Put(R"(/sessions/([^/]+)/layout)", guarded([st](const httplib::Request& req, httplib::Response& res) {
          auto& store = st();
          const std::string id = req.matches[1];
          const auto meta = store.get(id);
          if (req.get_header_value("Content-Type") == "image/png") {
            const auto layout =
                raster_to_layout(decode_png(req.body), meta.num_classes, store.class_names());
            send_json(res, store.replace_layout(id, layout).to_json());
            return;
          }
          const auto body = parse_body(req);
          const auto& list = body.is_array() ? body : body.at("edits");
          if (!list.is_array()) fail(ErrorKind::kInvalidArgument, "edits must be a list");
          std::vector<LayoutEdit> edits;
          for (const auto& e : list) edits.push_back(edit_from_json(e, store.class_names()));
          send_json(res, store.edit(id, edits).to_json());
        }));

  s.Post(R"(/sessions/([^/]+)/render)", guarded([st](const httplib::Request& req, httplib::Response& res) {
           const auto meta = st().render(req.matches[1]);
           auto body = meta.to_json();
           body["render_index"] = meta.renders.back().index;
           send_json(res, body, 201);
         }));

  s.Get(R"(/sessions/([^/]+)/render/(\d+))", guarded([st](const httplib::Request& req, httplib::Response& res) {
          res.set_content(st().render_png(req.matches[1], std::stoi(req.matches[2])), "image/png");
        }));

  s.Get(R"(/sessions/([^/]+)/attention)", guarded([st](const httplib::Request& req, httplib::Response& res) {
          if (!req.has_param("x") || !req.has_param("y")) fail(ErrorKind::kInvalidArgument, "attention needs x and y");
          Pixel p;
          try {
            p = {std::stoi(req.get_param_value("y")), std::stoi(req.get_param_value("x"))};
          } catch (const std::exception&) {
            fail(ErrorKind::kInvalidArgument, "x and y must be integers");
          }
          send_json(res, st().attention(req.matches[1], p));
        }));
}

int HttpService::start() {
  port_ = options_.port == 0 ? server_->bind_to_any_port(options_.host)
                             : (server_->bind_to_port(options_.host, options_.port) ? options_.port : -1);
  if (port_ <= 0) fail(ErrorKind::kIo, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void HttpService::run() {
  port_ = options_.port == 0 ? server_->bind_to_any_port(options_.host)
                             : (server_->bind_to_port(options_.host, options_.port) ? options_.port : -1);
  if (port_ <= 0) fail(ErrorKind::kIo, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  std::cerr << nlohmann::json{{"listening", options_.host + ":" + std::to_string(port_)},
                              {"model_loaded", store_->has_model()}}
                   .dump()
            << std::endl;
  server_->listen_after_bind();
}

void HttpService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void run_service(const ServiceOptions& options) {
  HttpService service(options);
  service.run();
}

}  // namespace recapture
