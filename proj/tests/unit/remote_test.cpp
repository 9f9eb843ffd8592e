#include <catch_amalgamated.hpp>

#include "chunkfuse/error.hpp"
#include "chunkfuse/remote.hpp"

using namespace chunkfuse;

namespace {

std::vector<Chunk> chunks_of(std::size_t n) {
  const SpecialIds s;
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < n; ++i) {
    Chunk c;
    c.framed_ids = {s.cls, static_cast<TokenId>(4 + i % 97), static_cast<TokenId>(5 + i / 97), s.sep};
    c.span_end = 2;
    c.index = i;
    out.push_back(std::move(c));
  }
  return out;
}

RemoteOptions quick() {
  RemoteOptions o;
  o.max_retries = 2;
  o.timeout = std::chrono::milliseconds(5000);
  o.retry_backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST_CASE("remote round trip preserves order and content") {
  StubServerOptions opts;
  opts.num_classes = 3;
  opts.max_batch = 16;
  StubScoringServer server(opts);
  server.start();
  const RemoteScorer scorer("r", server.endpoint(), TaskKind::LengthOfStay, 3, quick());
  const auto chunks = chunks_of(100);
  const auto scores = scorer.score_batch(chunks);
  REQUIRE(scores.size() == 100);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto expected = stub_scores_for(chunks[i].framed_ids, 3);
    REQUIRE(scores[i].num_classes() == 3);
    for (std::size_t c = 0; c < 3; ++c) REQUIRE(scores[i].probs[c] == Catch::Approx(expected[c]).margin(1e-15));
  }
  REQUIRE(server.largest_batch() <= 16);
  REQUIRE(server.score_requests() == 7);
  REQUIRE(scorer.info().max_batch == 16);
  REQUIRE(scorer.renormalized_count() == 0);

  const auto single = scorer.score(chunks[5]);
  REQUIRE(single == scores[5]);
}

TEST_CASE("fixed scores are returned verbatim") {
  StubServerOptions opts;
  opts.fixed_scores = {0.5, 0.5};
  StubScoringServer server(opts);
  server.start();
  const RemoteScorer scorer("r", server.endpoint(), TaskKind::Mortality, 2, quick());
  for (const auto& p : scorer.score_batch(chunks_of(10))) REQUIRE(p.probs == std::vector<double>{0.5, 0.5});
}

TEST_CASE("missing vectors are a protocol error") {
  StubServerOptions opts;
  opts.drop_last = 1;
  StubScoringServer server(opts);
  server.start();
  const RemoteScorer scorer("r", server.endpoint(), TaskKind::Mortality, 2, quick());
  REQUIRE_THROWS_AS(scorer.score_batch(chunks_of(5)), ProtocolError);
}

TEST_CASE("vectors outside the tolerance band are rejected") {
  SECTION("scaled sums") {
    StubServerOptions opts;
    opts.sum_scale = 1.5;
    StubScoringServer server(opts);
    server.start();
    const RemoteScorer scorer("r", server.endpoint(), TaskKind::Mortality, 2, quick());
    REQUIRE_THROWS_AS(scorer.score_batch(chunks_of(3)), ProtocolError);
  }
  SECTION("fixed vector summing to 1.01") {
    StubServerOptions opts;
    opts.fixed_scores = {0.7, 0.31};
    StubScoringServer server(opts);
    server.start();
    const RemoteScorer scorer("r", server.endpoint(), TaskKind::Mortality, 2, quick());
    REQUIRE_THROWS_AS(scorer.score_batch(chunks_of(3)), ProtocolError);
  }
}

TEST_CASE("small deviations are renormalized") {
  StubServerOptions opts;
  opts.fixed_scores = {0.7, 0.30005};
  StubScoringServer server(opts);
  server.start();
  const RemoteScorer scorer("r", server.endpoint(), TaskKind::Mortality, 2, quick());
  const auto scores = scorer.score_batch(chunks_of(4));
  for (const auto& p : scores) {
    REQUIRE(is_simplex(p.probs, 1e-12));
    REQUIRE(p.probs[0] == Catch::Approx(0.7 / 1.00005).margin(1e-12));
  }
  REQUIRE(scorer.renormalized_count() == 4);
}

TEST_CASE("accept_remote_vector band") {
  bool renorm = false;
  REQUIRE(accept_remote_vector({0.25, 0.75}, 2, renorm).probs == std::vector<double>{0.25, 0.75});
  REQUIRE_FALSE(renorm);
  const auto clipped = accept_remote_vector({1.00002, -0.00002}, 2, renorm);
  REQUIRE(renorm);
  REQUIRE(clipped.probs[1] == 0.0);
  REQUIRE(is_simplex(clipped.probs, 1e-12));
  REQUIRE_THROWS_AS(accept_remote_vector({0.5, 0.5 + 2e-4}, 2, renorm), ProtocolError);
  REQUIRE_THROWS_AS(accept_remote_vector({0.5, 0.5}, 3, renorm), ProtocolError);
  REQUIRE_THROWS_AS(accept_remote_vector({1.2, -0.2}, 2, renorm), ProtocolError);
  REQUIRE_THROWS_AS(accept_remote_vector({std::nan(""), 1.0}, 2, renorm), ProtocolError);
}

TEST_CASE("server errors are retried then surfaced as transport errors") {
  StubServerOptions opts;
  opts.fail_status = 503;
  StubScoringServer server(opts);
  server.start();
  const RemoteScorer scorer("r", server.endpoint(), TaskKind::Mortality, 2, quick());
  try {
    (void)scorer.score_batch(chunks_of(2));
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    REQUIRE(e.http_status() == 503);
    REQUIRE(e.attempts() == 3);
    REQUIRE(e.retryable());
  }
  REQUIRE(server.score_requests() == 3);
}

TEST_CASE("client errors are not retried") {
  StubServerOptions opts;
  opts.fail_status = 400;
  StubScoringServer server(opts);
  server.start();
  const RemoteScorer scorer("r", server.endpoint(), TaskKind::Mortality, 2, quick());
  REQUIRE_THROWS_AS(scorer.score_batch(chunks_of(2)), TransportError);
  REQUIRE(server.score_requests() == 1);
}

TEST_CASE("unreachable endpoint") {
  RemoteOptions o = quick();
  o.max_retries = 0;
  o.timeout = std::chrono::milliseconds(500);
  const RemoteScorer scorer("r", "http://127.0.0.1:1", TaskKind::Mortality, 2, o);
  REQUIRE_THROWS_AS(scorer.score_batch(chunks_of(1)), TransportError);
}

TEST_CASE("servers without /info use the fallback batch size") {
  StubServerOptions opts;
  opts.serve_info = false;
  opts.max_batch = 8;
  opts.reject_oversize = false;
  StubScoringServer server(opts);
  server.start();
  RemoteOptions o = quick();
  o.fallback_max_batch = 5;
  const RemoteScorer scorer("r", server.endpoint(), TaskKind::Mortality, 2, o);
  REQUIRE(scorer.info().max_batch == 0);
  REQUIRE(scorer.score_batch(chunks_of(23)).size() == 23);
  REQUIRE(server.largest_batch() == 5);
  REQUIRE(server.score_requests() == 5);
}

TEST_CASE("class count mismatch with the server") {
  StubServerOptions opts;
  opts.num_classes = 4;
  StubScoringServer server(opts);
  server.start();
  const RemoteScorer scorer("r", server.endpoint(), TaskKind::Mortality, 2, quick());
  REQUIRE_THROWS_AS(scorer.score_batch(chunks_of(2)), ContractError);
}

TEST_CASE("empty batches and descriptors") {
  StubScoringServer server(StubServerOptions{});
  server.start();
  ScorerDescriptor d;
  d.scorer_id = "remote_a";
  d.kind = ScorerKind::Remote;
  d.metadata["endpoint"] = server.endpoint();
  d.metadata["max_retries"] = "0";
  const auto scorer = RemoteScorer::from_descriptor(d, TaskKind::Mortality);
  REQUIRE(scorer->id() == "remote_a");
  REQUIRE_THROWS_AS(scorer->score_batch(std::span<const Chunk>{}), ContractError);
  REQUIRE(scorer->score_batch(chunks_of(3)).size() == 3);

  ScorerDescriptor missing = d;
  missing.metadata.erase("endpoint");
  REQUIRE_THROWS_AS(RemoteScorer::from_descriptor(missing, TaskKind::Mortality), ConfigError);
}
