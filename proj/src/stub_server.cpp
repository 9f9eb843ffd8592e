#include <fmt/format.h>
#include <httplib.h>

#include "chunkfuse/error.hpp"
#include "chunkfuse/remote.hpp"
#include "chunkfuse/rng.hpp"

namespace chunkfuse {
namespace {

void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

std::vector<double> stub_scores_for(std::span<const TokenId> framed_ids, int num_classes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (TokenId id : framed_ids) {
    h ^= static_cast<std::uint32_t>(id);
    h *= 0x100000001b3ULL;
  }
  std::vector<double> w(static_cast<std::size_t>(num_classes));
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const auto mixed = substream_seed(h, fmt::format("class{}", c));
    w[static_cast<std::size_t>(c)] = 1.0 + static_cast<double>(mixed & 0xffff) / 65535.0;
    sum += w[static_cast<std::size_t>(c)];
  }
  for (double& x : w) x /= sum;
  return w;
}

StubScoringServer::StubScoringServer(StubServerOptions options)
    : options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  if (options_.num_classes < 2) throw ConfigError("stub server needs at least two classes");
  if (!options_.fixed_scores.empty() &&
      static_cast<int>(options_.fixed_scores.size()) != options_.num_classes) {
    throw ConfigError("stub fixed_scores length must equal num_classes");
  }
  install_routes();
}

StubScoringServer::~StubScoringServer() { stop(); }

void StubScoringServer::install_routes() {
  server_->Get("/info", [this](const httplib::Request&, httplib::Response& res) {
    if (!options_.serve_info) {
      reply_json(res, 404, {{"error", "not found"}});
      return;
    }
    reply_json(res, 200, {{"max_batch", options_.max_batch}, {"num_classes", options_.num_classes}});
  });

  server_->Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
    ++score_requests_;
    if (options_.fail_status != 0) {
      reply_json(res, options_.fail_status, {{"error", "injected failure"}});
      return;
    }
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      reply_json(res, 400, {{"error", e.what()}});
      return;
    }
    if (!body.contains("chunks") || !body["chunks"].is_array()) {
      reply_json(res, 400, {{"error", "missing chunks"}});
      return;
    }
    if (body.value("num_classes", options_.num_classes) != options_.num_classes) {
      reply_json(res, 400, {{"error", "num_classes mismatch"}});
      return;
    }
    const auto& chunks = body["chunks"];
    std::size_t seen = largest_batch_.load();
    while (chunks.size() > seen && !largest_batch_.compare_exchange_weak(seen, chunks.size())) {
    }
    if (options_.reject_oversize && options_.max_batch > 0 && chunks.size() > options_.max_batch) {
      reply_json(res, 413, {{"error", fmt::format("batch of {} exceeds max_batch {}",
                                                  chunks.size(), options_.max_batch)}});
      return;
    }
    nlohmann::json scores = nlohmann::json::array();
    const std::size_t n = chunks.size() > options_.drop_last ? chunks.size() - options_.drop_last : 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> v = options_.fixed_scores;
      if (v.empty()) {
        v = stub_scores_for(chunks[i].at("ids").get<std::vector<TokenId>>(), options_.num_classes);
      }
      for (double& x : v) x *= options_.sum_scale;
      scores.push_back(v);
    }
    reply_json(res, 200, {{"scores", scores}});
  });
}

int StubScoringServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw IoError(fmt::format("stub server could not bind {}:{}", host, port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void StubScoringServer::run(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) {
    throw IoError(fmt::format("stub server could not listen on {}:{}", host, port));
  }
}

void StubScoringServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string StubScoringServer::endpoint() const { return fmt::format("http://{}:{}", host_, port_); }

}  // namespace chunkfuse
