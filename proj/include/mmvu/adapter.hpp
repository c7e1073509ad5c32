#pragma once

// Channel to a model under test: a live JSON-over-HTTP endpoint or a
// deterministic replay log.
//
// Live:    POST {base}/v1/respond
//          {"item_id", "prompt", "image_b64"?, "want_logits", "want_attention"}
//   reply  {"text", "option_logits"?: [4 reals], "attention_b64"?: dump bytes}
//
// Replay:  one JSON record per line,
//          {"item_id", "tag", "text", "option_logits"?, "attention_file"?}
//          keyed by (item_id, tag); attention_file is relative to the log.

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include <boost/beast/core/detail/base64.hpp>

#include "httplib.h"
#include "json.hpp"
#include "mmvu/attention_dump.hpp"
#include "mmvu/error.hpp"

namespace mmvu {

// Request tags. CGR and VAR issue auxiliary requests per item.
inline constexpr std::string_view kTagMain = "main";
inline constexpr std::string_view kTagCgrExtract = "cgr_extract";
inline constexpr std::string_view kTagVarProbe = "var_probe";
inline constexpr std::string_view kTagGenerate = "gen";

struct ModelRequest {
  std::string item_id;
  std::string tag = std::string(kTagMain);
  std::string prompt;
  std::optional<std::string> image_payload;  // encoded image file bytes
  bool want_logits = false;
  bool want_attention = false;
};

struct ModelResponse {
  std::string item_id;
  std::string tag = std::string(kTagMain);
  std::string raw_text;
  std::optional<std::array<double, 4>> option_logits;  // unnormalized, A..D
  std::optional<std::filesystem::path> attention_ref;

  bool operator==(const ModelResponse&) const = default;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Safe to call concurrently.
  virtual ModelResponse send(const ModelRequest& request) = 0;
};

namespace base64 {

inline std::string encode(std::string_view bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::string decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::decoded_size(text.size()), '\0');
  auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  // decoding stops at the first '='; only up to two trailing pad characters may follow
  const auto rest = text.substr(read);
  if (text.size() % 4 != 0 || rest.size() > 2 || rest.find_first_not_of('=') != std::string_view::npos)
    throw ContentError("invalid base64 payload");
  out.resize(written);
  return out;
}

}  // namespace base64

namespace detail {

inline std::optional<std::array<double, 4>> parse_logits(const nlohmann::json& obj,
                                                         const std::string& where) {
  auto it = obj.find("option_logits");
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_array() || it->size() != 4)
    throw ContentError(where + ": option_logits must hold exactly 4 numbers");
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(*it)[i].is_number()) throw ContentError(where + ": option_logits must be numeric");
    out[i] = (*it)[i].get<double>();
    if (!std::isfinite(out[i])) throw ContentError(where + ": option_logits must be finite");
  }
  return out;
}

}  // namespace detail

// Replay-format record for one response. `base_dir` is the directory the
// record will live in; attention paths are written relative to it.
inline nlohmann::ordered_json to_replay_json(const ModelResponse& r,
                                             const std::filesystem::path& base_dir = {}) {
  nlohmann::ordered_json j;
  j["item_id"] = r.item_id;
  j["tag"] = r.tag;
  j["text"] = r.raw_text;
  if (r.option_logits) j["option_logits"] = *r.option_logits;
  if (r.attention_ref) {
    auto p = *r.attention_ref;
    if (!base_dir.empty()) {
      auto rel = std::filesystem::absolute(p).lexically_normal().lexically_relative(
          std::filesystem::absolute(base_dir).lexically_normal());
      if (!rel.empty()) p = rel;
    }
    j["attention_file"] = p.generic_string();
  }
  return j;
}

inline ModelResponse parse_replay_record(std::string_view text, const std::filesystem::path& base_dir,
                                         std::size_t line) {
  const auto where = "replay line " + std::to_string(line);
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(where + ": malformed JSON (" + e.what() + ")");
  }
  if (!obj.is_object()) throw ValidationError(where + ": record is not an object");
  ModelResponse r;
  auto id = obj.find("item_id");
  if (id == obj.end() || !id->is_string()) throw ValidationError(where + ": missing item_id");
  r.item_id = id->get<std::string>();
  if (auto tag = obj.find("tag"); tag != obj.end()) {
    if (!tag->is_string()) throw ValidationError(where + ": tag must be a string");
    r.tag = tag->get<std::string>();
  }
  auto txt = obj.find("text");
  if (txt == obj.end() || !txt->is_string()) throw ValidationError(where + ": missing text");
  r.raw_text = txt->get<std::string>();
  try {
    r.option_logits = detail::parse_logits(obj, where);
  } catch (const ContentError& e) {
    throw ValidationError(e.what());
  }
  if (auto af = obj.find("attention_file"); af != obj.end() && !af->is_null()) {
    if (!af->is_string()) throw ValidationError(where + ": attention_file must be a string");
    r.attention_ref = base_dir / af->get<std::string>();
  }
  return r;
}

// Serves recorded responses by exact (item_id, tag). Immutable after load.
class ReplayTransport : public Transport {
 public:
  ReplayTransport() = default;

  static ReplayTransport from_stream(std::istream& in, const std::filesystem::path& base_dir) {
    ReplayTransport t;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
      ++line;
      if (text.empty()) continue;
      auto r = parse_replay_record(text, base_dir, line);
      auto key = std::make_pair(r.item_id, r.tag);
      if (!t.records_.emplace(key, std::move(r)).second)
        throw ValidationError("replay line " + std::to_string(line) + ": duplicate record for \"" +
                              key.first + "\" tag \"" + key.second + "\"");
    }
    return t;
  }

  static ReplayTransport from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TransportError("cannot open replay log " + path.string());
    return from_stream(in, path.parent_path());
  }

  ModelResponse send(const ModelRequest& request) override {
    auto it = records_.find({request.item_id, request.tag});
    if (it == records_.end())
      throw ReplayMiss("replay miss: no record for item_id \"" + request.item_id + "\" tag \"" +
                       request.tag + "\"");
    return it->second;
  }

  const ModelResponse* find(const std::string& item_id, const std::string& tag) const {
    auto it = records_.find({item_id, tag});
    return it == records_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return records_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, ModelResponse> records_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;

  // Delay before attempt `attempt` (1-based; attempt 1 has none).
  std::chrono::milliseconds delay_before(int attempt) const {
    if (attempt <= 1) return std::chrono::milliseconds{0};
    double ms = static_cast<double>(initial_backoff.count());
    for (int i = 2; i < attempt; ++i) ms *= multiplier;
    return std::chrono::milliseconds{static_cast<long long>(ms)};
  }
};

struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::optional<std::string> bearer_token;
  std::filesystem::path dump_dir = "dumps";  // where returned attention dumps are stored
  RetryPolicy retry;
  std::chrono::seconds timeout{300};
};

inline std::string request_body(const ModelRequest& request) {
  nlohmann::ordered_json j;
  j["item_id"] = request.item_id;
  j["prompt"] = request.prompt;
  if (request.image_payload) j["image_b64"] = base64::encode(*request.image_payload);
  j["want_logits"] = request.want_logits;
  j["want_attention"] = request.want_attention;
  return j.dump();
}

// Retries only transport-level failures (connection errors and 5xx).
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    const auto scheme = endpoint_.base_url.find("://");
    const auto slash = endpoint_.base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    host_ = endpoint_.base_url.substr(0, slash);
    if (slash != std::string::npos) prefix_ = endpoint_.base_url.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  ModelResponse send(const ModelRequest& request) override {
    const auto body = request_body(request);
    std::string last_error;
    for (int attempt = 1; attempt <= endpoint_.retry.max_attempts; ++attempt) {
      std::this_thread::sleep_for(endpoint_.retry.delay_before(attempt));
      httplib::Client client(host_);
      client.set_connection_timeout(std::chrono::seconds{10});
      client.set_read_timeout(endpoint_.timeout);
      client.set_write_timeout(endpoint_.timeout);
      if (endpoint_.bearer_token) client.set_bearer_token_auth(*endpoint_.bearer_token);
      auto res = client.Post(prefix_ + "/v1/respond", body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw TransportError("endpoint rejected request for \"" + request.item_id + "\": HTTP " +
                             std::to_string(res->status));
      return decode_reply(request, res->body);
    }
    throw TransportError("endpoint unreachable for \"" + request.item_id + "\" after " +
                         std::to_string(endpoint_.retry.max_attempts) + " attempts: " + last_error);
  }

 private:
  ModelResponse decode_reply(const ModelRequest& request, const std::string& body) const {
    const auto where = "reply for \"" + request.item_id + "\"";
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
      throw ContentError(where + " is not JSON");
    }
    if (!obj.is_object()) throw ContentError(where + " is not a JSON object");
    auto txt = obj.find("text");
    if (txt == obj.end() || !txt->is_string()) throw ContentError(where + " is missing text");
    ModelResponse r;
    r.item_id = request.item_id;
    r.tag = request.tag;
    r.raw_text = txt->get<std::string>();
    r.option_logits = detail::parse_logits(obj, where);
    if (auto att = obj.find("attention_b64"); att != obj.end() && !att->is_null()) {
      if (!att->is_string()) throw ContentError(where + ": attention_b64 must be a string");
      auto dump = decode_attention_dump(base64::decode(att->get<std::string>()));
      std::filesystem::create_directories(endpoint_.dump_dir);
      auto path = endpoint_.dump_dir / (sanitize(request.item_id) + "_" + request.tag + ".matn");
      write_attention_dump(dump, path);
      r.attention_ref = path;
    }
    return r;
  }

  static std::string sanitize(std::string s) {
    for (auto& c : s)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
    return s;
  }

  HttpEndpoint endpoint_;
  std::string host_;
  std::string prefix_;
};

}  // namespace mmvu
