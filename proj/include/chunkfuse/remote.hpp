#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "chunkfuse/corpus.hpp"
#include "chunkfuse/scoring.hpp"

namespace httplib {
class Server;
}

namespace chunkfuse {

// Response vectors whose sum is off by more than this are rejected; smaller
// deviations are renormalized.
inline constexpr double kRemoteSimplexBand = 1e-4;

struct ServerInfo {
  std::size_t max_batch = 0;  // 0: no advertised limit
  int num_classes = 0;
};

struct RemoteOptions {
  int max_retries = 2;  // extra attempts after the first, for retryable failures
  std::chrono::milliseconds timeout{10000};
  std::chrono::milliseconds retry_backoff{50};
  std::size_t max_concurrency = 4;  // in-flight batch requests
  std::size_t fallback_max_batch = 256;  // used when the server has no /info
};

// Validates one response vector against the wire-protocol tolerance: returns
// it unchanged when it already sums to 1, renormalized (negative dust clipped)
// when within kRemoteSimplexBand, and throws ProtocolError otherwise.
// `renormalized` is set when the vector was adjusted.
ProbabilityVector accept_remote_vector(std::vector<double> probs, int num_classes,
                                       bool& renormalized);

// HTTP client for the JSON scoring protocol:
//   POST /score {"task", "num_classes", "chunks": [{"ids": [...]}, ...]}
//     -> {"scores": [[p...], ...]}
//   GET /info -> {"max_batch", "num_classes"}
class RemoteScorer final : public ChunkScorer {
 public:
  RemoteScorer(std::string id, std::string endpoint, TaskKind task, int num_classes,
               RemoteOptions options = {});

  static std::unique_ptr<RemoteScorer> from_descriptor(const ScorerDescriptor& descriptor,
                                                       TaskKind task);

  const ScorerDescriptor& descriptor() const override { return descriptor_; }
  ProbabilityVector score(const Chunk& chunk) const override;
  // Splits into server-sized batches, issues them concurrently, and returns
  // the vectors in input order. Throws TransportError or ProtocolError.
  std::vector<ProbabilityVector> score_batch(std::span<const Chunk> chunks) const override;

  // Cached capability probe.
  ServerInfo info() const;

  std::size_t renormalized_count() const { return renormalized_.load(); }

 private:
  std::vector<ProbabilityVector> score_one_batch(std::span<const Chunk> chunks) const;
  std::string post_with_retries(const std::string& path, const std::string& body) const;

  ScorerDescriptor descriptor_;
  std::string endpoint_;
  TaskKind task_;
  RemoteOptions options_;
  mutable std::mutex info_mutex_;
  mutable std::optional<ServerInfo> info_;
  mutable std::atomic<std::size_t> renormalized_{0};
};

// In-process stub implementing the scoring protocol, for tests and the
// serve-mock subcommand. Fault-injection knobs reproduce protocol violations.
struct StubServerOptions {
  int num_classes = 2;
  std::size_t max_batch = 64;
  // Same vector for every chunk; when empty, a deterministic vector derived
  // from the chunk ids (see stub_scores_for).
  std::vector<double> fixed_scores;
  std::size_t drop_last = 0;    // return this many fewer vectors than chunks
  double sum_scale = 1.0;       // multiply every returned vector
  int fail_status = 0;          // answer /score with this status when nonzero
  bool serve_info = true;       // 404 on /info when false
  bool reject_oversize = true;  // 413 for batches above max_batch
};

// The content-derived vector the stub returns for a chunk.
std::vector<double> stub_scores_for(std::span<const TokenId> framed_ids, int num_classes);

class StubScoringServer {
 public:
  explicit StubScoringServer(StubServerOptions options);
  ~StubScoringServer();
  StubScoringServer(const StubScoringServer&) = delete;
  StubScoringServer& operator=(const StubScoringServer&) = delete;

  // Binds host:port (port 0 picks a free port) and serves on a background
  // thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop() is called from elsewhere.
  void run(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  std::string endpoint() const;

  std::size_t score_requests() const { return score_requests_.load(); }
  std::size_t largest_batch() const { return largest_batch_.load(); }

 private:
  void install_routes();

  StubServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
  std::atomic<std::size_t> score_requests_{0};
  std::atomic<std::size_t> largest_batch_{0};
};

}  // namespace chunkfuse
