#include "kconflict/replay.hpp"

#include <fstream>

#include <spdlog/spdlog.h>

#include "kconflict/errors.hpp"

namespace kc {

void to_json(json& j, const ReplayEntry& e) {
  j = json{{"request_hash", e.request_hash}, {"request", e.request}, {"response", e.response}};
}

void from_json(const json& j, ReplayEntry& e) {
  e.request = j.at("request").get<BackendRequest>();
  e.response = j.at("response").get<BackendResponse>();
  e.request_hash = j.value("request_hash", std::string());
  auto actual = request_hash(e.request);
  if (!e.request_hash.empty() && e.request_hash != actual) {
    throw ParseError("replay entry hash does not match its request", j.dump());
  }
  e.request_hash = actual;
}

std::map<std::string, ReplayEntry> load_recording(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recording " + path.string());
  std::map<std::string, ReplayEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ReplayEntry e;
    try {
      e = json::parse(line).get<ReplayEntry>();
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what(), line);
    }
    auto key = e.request_hash;
    out.insert_or_assign(std::move(key), std::move(e));
  }
  return out;
}

void save_recording(const std::filesystem::path& path, const std::map<std::string, ReplayEntry>& entries) {
  std::string out;
  for (const auto& [hash, e] : entries) {
    out += json(e).dump();
    out += '\n';
  }
  write_text_file(path, out);
}

// ---------------------------------------------------------------------------

ReplayBackend::ReplayBackend(const std::filesystem::path& path, BackendCapabilities caps)
    : entries_(load_recording(path)), caps_(caps) {}

ReplayBackend::ReplayBackend(std::map<std::string, ReplayEntry> entries, BackendCapabilities caps)
    : entries_(std::move(entries)), caps_(caps) {}

BackendResponse ReplayBackend::query(const BackendRequest& req) {
  auto hash = request_hash(req);
  auto it = entries_.find(hash);
  if (it == entries_.end()) {
    throw ReplayMiss("no recorded response for request " + hash.substr(0, 16) +
                     (req.trace_id.empty() ? "" : " (trace " + req.trace_id + ")"));
  }
  return it->second.response;
}

// ---------------------------------------------------------------------------

RecordingBackend::RecordingBackend(Backend& inner, std::filesystem::path path)
    : inner_(inner), path_(std::move(path)) {}

RecordingBackend::~RecordingBackend() {
  try {
    flush();
  } catch (const std::exception& e) {
    spdlog::error("failed to write recording {}: {}", path_.string(), e.what());
  }
}

BackendResponse RecordingBackend::query(const BackendRequest& req) {
  auto resp = inner_.query(req);
  ReplayEntry e{request_hash(req), req, resp};
  std::lock_guard lock(mu_);
  captured_.insert_or_assign(e.request_hash, std::move(e));
  dirty_ = true;
  return resp;
}

void RecordingBackend::flush() {
  std::lock_guard lock(mu_);
  if (!dirty_) return;
  std::map<std::string, ReplayEntry> merged;
  if (std::filesystem::exists(path_)) merged = load_recording(path_);
  for (const auto& [hash, e] : captured_) merged.insert_or_assign(hash, e);
  save_recording(path_, merged);
  dirty_ = false;
}

}  // namespace kc
