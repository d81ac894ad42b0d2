#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include "kconflict/backend.hpp"

namespace kc {

// One line of a replay recording.
struct ReplayEntry {
  std::string request_hash;
  BackendRequest request;
  BackendResponse response;
};

void to_json(json& j, const ReplayEntry& e);
void from_json(const json& j, ReplayEntry& e);

// Entries keyed by request hash. Later duplicates replace earlier ones.
std::map<std::string, ReplayEntry> load_recording(const std::filesystem::path& path);

// Writes entries sorted by hash, one JSON object per line.
void save_recording(const std::filesystem::path& path, const std::map<std::string, ReplayEntry>& entries);

// Serves recorded responses. Lookup is by request hash, so concurrent
// playback does not depend on request order.
class ReplayBackend final : public Backend {
 public:
  ReplayBackend(const std::filesystem::path& path, BackendCapabilities caps = BackendCapabilities::all());
  ReplayBackend(std::map<std::string, ReplayEntry> entries, BackendCapabilities caps = BackendCapabilities::all());

  std::string name() const override { return "replay"; }
  BackendCapabilities capabilities() const override { return caps_; }
  BackendResponse query(const BackendRequest& req) override;

  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, ReplayEntry> entries_;
  BackendCapabilities caps_;
};

// Forwards to `inner` and captures every exchange. flush() merges with any
// recording already at `path`.
class RecordingBackend final : public Backend {
 public:
  RecordingBackend(Backend& inner, std::filesystem::path path);
  ~RecordingBackend() override;

  std::string name() const override { return inner_.name(); }
  BackendCapabilities capabilities() const override { return inner_.capabilities(); }
  BackendResponse query(const BackendRequest& req) override;

  void flush();

 private:
  Backend& inner_;
  std::filesystem::path path_;
  std::mutex mu_;
  std::map<std::string, ReplayEntry> captured_;
  bool dirty_ = false;
};

}  // namespace kc
