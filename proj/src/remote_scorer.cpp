#include <cmath>
#include <future>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <httplib.h>

#include "chunkfuse/error.hpp"
#include "chunkfuse/remote.hpp"

namespace chunkfuse {
namespace {

struct ParsedEndpoint {
  std::string base;    // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) throw ConfigError(fmt::format("endpoint '{}' lacks a scheme", endpoint));
  const auto path = endpoint.find('/', scheme + 3);
  ParsedEndpoint p;
  p.base = endpoint.substr(0, path);
  if (path != std::string::npos) {
    p.prefix = endpoint.substr(path);
    while (!p.prefix.empty() && p.prefix.back() == '/') p.prefix.pop_back();
  }
  return p;
}

httplib::Client make_client(const ParsedEndpoint& ep, const RemoteOptions& options) {
  httplib::Client client(ep.base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  return client;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

ProbabilityVector accept_remote_vector(std::vector<double> probs, int num_classes,
                                       bool& renormalized) {
  renormalized = false;
  if (static_cast<int>(probs.size()) != num_classes) {
    throw ProtocolError(
        fmt::format("score vector has {} entries, expected {}", probs.size(), num_classes));
  }
  double sum = 0.0;
  bool negative = false;
  for (double p : probs) {
    if (!std::isfinite(p) || p < -kRemoteSimplexBand || p > 1.0 + kRemoteSimplexBand) {
      throw ProtocolError(fmt::format("score entry {} outside [0, 1]", p));
    }
    negative = negative || p < 0.0;
    sum += p;
  }
  if (std::abs(sum - 1.0) > kRemoteSimplexBand) {
    throw ProtocolError(fmt::format("simplex violation: scores sum to {} (tolerance {})", sum,
                                    kRemoteSimplexBand));
  }
  if (!negative && std::abs(sum - 1.0) <= 1e-12) return ProbabilityVector{std::move(probs)};

  double clipped = 0.0;
  for (double& p : probs) {
    p = std::max(p, 0.0);
    clipped += p;
  }
  for (double& p : probs) p /= clipped;
  renormalized = true;
  return ProbabilityVector{std::move(probs)};
}

RemoteScorer::RemoteScorer(std::string id, std::string endpoint, TaskKind task, int num_classes,
                           RemoteOptions options)
    : endpoint_(std::move(endpoint)), task_(task), options_(options) {
  descriptor_.scorer_id = std::move(id);
  descriptor_.kind = ScorerKind::Remote;
  descriptor_.num_classes = num_classes;
  descriptor_.metadata["endpoint"] = endpoint_;
  parse_endpoint(endpoint_);  // validate early
  if (options_.max_concurrency == 0) options_.max_concurrency = 1;
}

std::unique_ptr<RemoteScorer> RemoteScorer::from_descriptor(const ScorerDescriptor& d,
                                                            TaskKind task) {
  const auto it = d.metadata.find("endpoint");
  if (it == d.metadata.end()) {
    throw ConfigError(fmt::format("remote scorer {} needs an endpoint", d.scorer_id));
  }
  RemoteOptions options;
  try {
    if (auto r = d.metadata.find("max_retries"); r != d.metadata.end()) {
      options.max_retries = std::stoi(r->second);
    }
    if (auto t = d.metadata.find("timeout_ms"); t != d.metadata.end()) {
      options.timeout = std::chrono::milliseconds(std::stol(t->second));
    }
    if (auto c = d.metadata.find("max_concurrency"); c != d.metadata.end()) {
      options.max_concurrency = std::stoul(c->second);
    }
  } catch (const std::logic_error&) {
    throw ConfigError(fmt::format("remote scorer {}: non-numeric option", d.scorer_id));
  }
  auto scorer = std::make_unique<RemoteScorer>(d.scorer_id, it->second, task, d.num_classes, options);
  for (const auto& [k, v] : d.metadata) scorer->descriptor_.metadata[k] = v;
  return scorer;
}

ServerInfo RemoteScorer::info() const {
  std::lock_guard lock(info_mutex_);
  if (info_) return *info_;
  const auto ep = parse_endpoint(endpoint_);
  auto client = make_client(ep, options_);
  int attempt = 0;
  for (;;) {
    ++attempt;
    auto res = client.Get(ep.prefix + "/info");
    if (res && res->status == 404) {
      spdlog::warn("scorer {}: {} has no /info; assuming no batch limit", id(), endpoint_);
      info_ = ServerInfo{};
      return *info_;
    }
    if (res && res->status == 200) {
      try {
        const auto j = nlohmann::json::parse(res->body);
        ServerInfo si;
        si.max_batch = j.value("max_batch", std::size_t{0});
        si.num_classes = j.value("num_classes", 0);
        if (si.num_classes != 0 && si.num_classes != num_classes()) {
          throw ContractError(fmt::format("scorer {}: server reports {} classes, task needs {}",
                                          id(), si.num_classes, num_classes()));
        }
        info_ = si;
        return *info_;
      } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(fmt::format("scorer {}: malformed /info response: {}", id(), e.what()));
      }
    }
    const int status = res ? res->status : 0;
    const bool retryable = !res || retryable_status(status);
    if (!retryable || attempt > options_.max_retries) {
      throw TransportError(
          res ? fmt::format("GET {}/info returned HTTP {}", endpoint_, status)
              : fmt::format("GET {}/info failed: {}", endpoint_, httplib::to_string(res.error())),
          status, attempt, retryable);
    }
    std::this_thread::sleep_for(options_.retry_backoff * attempt);
  }
}

std::string RemoteScorer::post_with_retries(const std::string& path, const std::string& body) const {
  const auto ep = parse_endpoint(endpoint_);
  auto client = make_client(ep, options_);
  int attempt = 0;
  for (;;) {
    ++attempt;
    auto res = client.Post(ep.prefix + path, body, "application/json");
    if (res && res->status == 200) return res->body;
    const int status = res ? res->status : 0;
    const bool retryable = !res || retryable_status(status);
    if (!retryable || attempt > options_.max_retries) {
      throw TransportError(
          res ? fmt::format("POST {}{} returned HTTP {} after {} attempt(s)", endpoint_, path,
                            status, attempt)
              : fmt::format("POST {}{} failed after {} attempt(s): {}", endpoint_, path, attempt,
                            httplib::to_string(res.error())),
          status, attempt, retryable);
    }
    std::this_thread::sleep_for(options_.retry_backoff * attempt);
  }
}

std::vector<ProbabilityVector> RemoteScorer::score_one_batch(std::span<const Chunk> chunks) const {
  nlohmann::json request = {{"task", task_name(task_)}, {"num_classes", num_classes()}};
  auto& arr = request["chunks"] = nlohmann::json::array();
  for (const auto& c : chunks) arr.push_back({{"ids", c.framed_ids}});

  const auto body = post_with_retries("/score", request.dump());

  nlohmann::json response;
  try {
    response = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(fmt::format("scorer {}: response is not JSON: {}", id(), e.what()));
  }
  if (!response.is_object() || !response.contains("scores") || !response["scores"].is_array()) {
    throw ProtocolError(fmt::format("scorer {}: response lacks a 'scores' array", id()));
  }
  const auto& scores = response["scores"];
  if (scores.size() != chunks.size()) {
    throw ProtocolError(fmt::format("scorer {}: server returned {} score vectors for {} chunks",
                                    id(), scores.size(), chunks.size()));
  }
  std::vector<ProbabilityVector> out;
  out.reserve(chunks.size());
  std::size_t renormalized = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::vector<double> probs;
    try {
      probs = scores[i].get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError(fmt::format("scorer {}: score vector {} is not a numeric array", id(), i));
    }
    bool adjusted = false;
    try {
      out.push_back(accept_remote_vector(std::move(probs), num_classes(), adjusted));
    } catch (const ProtocolError& e) {
      throw ProtocolError(fmt::format("scorer {}: chunk {}: {}", id(), chunks[i].index, e.what()));
    }
    if (adjusted) ++renormalized;
  }
  if (renormalized > 0) {
    renormalized_ += renormalized;
    spdlog::warn("scorer {}: renormalized {} score vector(s) that were off the simplex by < {}",
                 id(), renormalized, kRemoteSimplexBand);
  }
  return out;
}

std::vector<ProbabilityVector> RemoteScorer::score_batch(std::span<const Chunk> chunks) const {
  if (chunks.empty()) throw ContractError(fmt::format("scorer {}: empty batch", id()));
  const auto si = info();
  const std::size_t limit = si.max_batch > 0 ? si.max_batch : options_.fallback_max_batch;

  std::vector<std::span<const Chunk>> batches;
  for (std::size_t b = 0; b < chunks.size(); b += limit) {
    batches.push_back(chunks.subspan(b, std::min(limit, chunks.size() - b)));
  }
  std::vector<std::vector<ProbabilityVector>> results(batches.size());
  for (std::size_t wave = 0; wave < batches.size(); wave += options_.max_concurrency) {
    const std::size_t end = std::min(batches.size(), wave + options_.max_concurrency);
    if (end - wave == 1) {
      results[wave] = score_one_batch(batches[wave]);
      continue;
    }
    std::vector<std::future<std::vector<ProbabilityVector>>> inflight;
    for (std::size_t b = wave; b < end; ++b) {
      inflight.push_back(
          std::async(std::launch::async, [this, span = batches[b]] { return score_one_batch(span); }));
    }
    // Drain every future before rethrowing so no request outlives the call.
    std::exception_ptr first_error;
    for (std::size_t b = wave; b < end; ++b) {
      try {
        results[b] = inflight[b - wave].get();
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<ProbabilityVector> out;
  out.reserve(chunks.size());
  for (auto& r : results) {
    for (auto& v : r) out.push_back(std::move(v));
  }
  return out;
}

ProbabilityVector RemoteScorer::score(const Chunk& chunk) const {
  return score_batch(std::span<const Chunk>(&chunk, 1)).front();
}

}  // namespace chunkfuse
