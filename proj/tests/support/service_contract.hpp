#pragma once

// Scripted HTTP client that walks a session through its whole lifecycle,
// restarts the service over the same store, and probes every error route.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "recapture/inference.hpp"

namespace contract {

struct StepTiming {
  std::string name;
  double seconds = 0;
  int status = 0;
  int expected = 0;
};

struct ErrorProbe {
  std::string name;
  int expected = 0;
  int status = 0;
  std::string body;
};

struct Report {
  std::vector<StepTiming> lifecycle;  // create, predict, edit, render, render
  bool renders_identical = false;
  bool edit_changed_layout = false;
  bool restart_exact = false;
  std::string restart_detail;
  std::vector<ErrorProbe> errors;

  bool lifecycle_ok(double max_seconds) const;
  bool errors_ok() const;
  std::string summary() const;
};

/// `load` builds a fresh model instance; it is called once per service start.
Report run(const std::function<std::shared_ptr<recapture::RecaptureModel>()>& load,
           const recapture::SourceSample& source, const std::filesystem::path& data_dir);

/// A puppet source sample at the given resolution.
recapture::SourceSample puppet_source(uint64_t seed, int height, int width);

}  // namespace contract
