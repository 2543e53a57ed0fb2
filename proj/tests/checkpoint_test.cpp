// SPDX-License-Identifier: Apache-2.0

#include "ghostserve/checkpoint.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>

using namespace ghostserve;

namespace {

ModelConfig tiny_model(int tp = 2) {
  ModelConfig m;
  m.layers = 2;
  m.kv_heads = 8;
  m.head_dim = 8;
  m.tp_degree = tp;
  return m;
}

ModelConfig reference_70b() {
  ModelConfig m;
  m.layers = 80;
  m.kv_heads = 8;
  m.head_dim = 128;
  m.tp_degree = 8;
  return m;
}

CheckpointConfig tiny_config(int tp = 2, CodingScheme scheme = CodingScheme::xor_code(2)) {
  CheckpointConfig cfg;
  cfg.scheme = scheme;
  cfg.chunk_size = 16;
  cfg.model = tiny_model(tp);
  return cfg;
}

CheckpointConfig calibrated_config() {
  CheckpointConfig cfg;
  cfg.scheme = CodingScheme::reed_solomon(8, 2);
  cfg.chunk_size = 2048;
  cfg.model = reference_70b();
  return cfg;
}

const TimelineEvent* find_event(const Timeline& t, EventKind kind) {
  for (const auto& ev : t)
    if (ev.kind == kind) return &ev;
  return nullptr;
}

}  // namespace

TEST(Assignment, RoundRobinSequence) {
  AssignmentState state;
  std::vector<int> seq;
  for (int i = 0; i < 6; ++i) seq.push_back(next_parity_worker(state, 4));
  EXPECT_EQ(seq, (std::vector<int>{0, 1, 2, 3, 0, 1}));
}

TEST(Assignment, SingleWorker) {
  AssignmentState state;
  for (int i = 0; i < 5; ++i) EXPECT_EQ(next_parity_worker(state, 1), 0);
}

TEST(Assignment, ExactCountsOverManyChunks) {
  AssignmentState state;
  std::map<int, int> counts;
  for (int i = 0; i < 1000; ++i) counts[next_parity_worker(state, 8)]++;
  for (int w = 0; w < 8; ++w) EXPECT_EQ(counts[w], 125);
}

// Fairness: after c chunks on N workers, per-worker counts are ceil(c/N) or
// floor(c/N), i.e. they differ by at most one.
TEST(Assignment, FairnessProperty) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 16);
    const int c = 1 + static_cast<int>(rng() % 5000);
    AssignmentState state;
    std::vector<int> counts(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < c; ++i) counts[static_cast<std::size_t>(next_parity_worker(state, n))]++;
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    ASSERT_LE(*hi - *lo, 1) << "n=" << n << " c=" << c;
    ASSERT_EQ(*hi, (c + n - 1) / n);
  }
}

TEST(CheckpointChunk, XorParityOfTwoSlices) {
  auto cfg = tiny_config();
  std::vector<KvChunkSlice> slices;
  for (int w = 0; w < 2; ++w)
    slices.push_back(make_ground_truth_slice(1, 0, ChunkId{0}, w, cfg.model, cfg.chunk_size, 16));
  AssignmentState state;
  auto out = checkpoint_chunk(slices, cfg, state, {});
  ASSERT_EQ(out.parity.parity.size(), 1u);
  std::vector<std::uint8_t> expect(slices[0].bytes.size());
  for (std::size_t i = 0; i < expect.size(); ++i)
    expect[i] = static_cast<std::uint8_t>(slices[0].bytes[i] ^ slices[1].bytes[i]);
  EXPECT_EQ(out.parity.parity[0], expect);
  EXPECT_EQ(out.parity.compute_checksum(), out.parity.checksum);
}

TEST(CheckpointChunk, EventOrdering) {
  auto cfg = tiny_config();
  std::vector<KvChunkSlice> slices;
  for (int w = 0; w < 2; ++w)
    slices.push_back(make_ground_truth_slice(1, 0, ChunkId{0}, w, cfg.model, cfg.chunk_size, 16));
  AssignmentState state;
  auto out = checkpoint_chunk(slices, cfg, state, {5.0, 0.0});

  double max_compute_end = 0;
  for (const auto& ev : out.events)
    if (ev.kind == EventKind::kComputeChunk) max_compute_end = std::max(max_compute_end, ev.end());
  const auto* gather = find_event(out.events, EventKind::kGather);
  const auto* enc = find_event(out.events, EventKind::kEncode);
  const auto* barrier = find_event(out.events, EventKind::kBarrier);
  const auto* offload = find_event(out.events, EventKind::kOffload);
  ASSERT_TRUE(gather && enc && barrier && offload);
  EXPECT_GE(gather->start, max_compute_end);
  EXPECT_GE(enc->start, gather->end());
  EXPECT_EQ(barrier->start, enc->end());
  EXPECT_GE(offload->start, enc->end());
  // Next chunk resumes at the barrier; offload may still be in flight.
  EXPECT_EQ(out.timing.start_time, barrier->start);
  EXPECT_GE(out.timing.host_link_free, offload->end());
}

TEST(CheckpointChunk, SliceValidationIsFatal) {
  auto cfg = tiny_config();
  std::vector<KvChunkSlice> slices;
  slices.push_back(make_ground_truth_slice(1, 0, ChunkId{0}, 0, cfg.model, cfg.chunk_size, 16));
  AssignmentState state;
  EXPECT_THROW(checkpoint_chunk(slices, cfg, state, {}), std::logic_error);  // missing one slice
}

// Calibrated defaults keep the per-chunk non-overlapped stall under 5% of the
// chunk compute time, with offload fully hidden behind the next chunk.
TEST(CheckpointChunk, StallBoundUnderDefaults) {
  auto cfg = calibrated_config();
  AssignmentState state;
  auto out = checkpoint_chunk_costs(1, ChunkId{0}, cfg.chunk_size, cfg, state, {});
  EXPECT_LT(out.stall / out.compute, 0.05);
  const auto* offload = find_event(out.events, EventKind::kOffload);
  ASSERT_TRUE(offload);
  EXPECT_LT(offload->duration, out.compute);  // hides behind the next chunk
}

TEST(Prefill, ChunkCountAndRotation) {
  auto cfg = tiny_config(4, CodingScheme::xor_code(4));
  ParityStore store;
  auto run = run_prefill_with_checkpointing(9, 4 * cfg.chunk_size, cfg, store, {true, 77});
  ASSERT_TRUE(run.completed);
  EXPECT_EQ(run.chunks_done, 4u);
  EXPECT_EQ(store.entry_count(), 4u);
  // Parity duty rotated 0,1,2,3.
  std::vector<int> parity_workers;
  for (const auto& ev : run.events)
    if (ev.kind == EventKind::kEncode) parity_workers.push_back(ev.worker);
  EXPECT_EQ(parity_workers, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(run.state.next_worker, 0);  // rotated exactly ceil(s/m) times
}

TEST(Prefill, PartialTailChunkIsMasked) {
  auto cfg = tiny_config(4, CodingScheme::xor_code(4));
  ParityStore store;
  auto run = run_prefill_with_checkpointing(9, 4 * cfg.chunk_size + 1, cfg, store, {true, 77});
  ASSERT_TRUE(run.completed);
  EXPECT_EQ(store.entry_count(), 5u);
  const ParityChunk* last = nullptr;
  ASSERT_EQ(store.get(9, 4, &last), ParityGetStatus::kOk);
  EXPECT_EQ(last->valid_tokens, 1u);
  // Ground-truth tail slice is zero beyond token 0.
  const auto& tail_slice = run.ground_truth[4][0];
  const auto stride = token_stride_bytes(cfg.model);
  for (std::size_t i = static_cast<std::size_t>(stride); i < stride * cfg.chunk_size; ++i)
    ASSERT_EQ(tail_slice.bytes[i], 0);
}

TEST(Prefill, ParityBytesMatchKOverN) {
  auto cfg = tiny_config(4, CodingScheme::reed_solomon(4, 2));
  ParityStore store;
  const std::uint64_t tokens = 7 * cfg.chunk_size;
  auto run = run_prefill_with_checkpointing(3, tokens, cfg, store, {true, 5});
  ASSERT_TRUE(run.completed);
  const std::uint64_t kv_total =
      slice_bytes(cfg.model, cfg.chunk_size) * cfg.scheme.n * chunk_count(tokens, cfg.chunk_size);
  EXPECT_EQ(store.payload_bytes(), kv_total * cfg.scheme.k / cfg.scheme.n);
}

TEST(Prefill, BackPressureStallsWithoutDroppingParity) {
  auto cfg = tiny_config();
  const std::uint64_t slice = slice_bytes(cfg.model, cfg.chunk_size);
  ParityStore store(2 * (slice + ParityStore::kPerEntryMetadataBytes));
  auto run = run_prefill_with_checkpointing(1, 4 * cfg.chunk_size, cfg, store, {true, 1});
  EXPECT_FALSE(run.completed);
  ASSERT_TRUE(run.stalled_at_chunk.has_value());
  EXPECT_EQ(*run.stalled_at_chunk, 2u);
  EXPECT_EQ(store.entry_count(), 2u);  // earlier parity still intact
  EXPECT_EQ(find_event(run.events, EventKind::kStall)->chunk_id, 2u);
}

// Recoverability spot-check: chunks pulled back out of the store round-trip
// for every erasure pattern within tolerance.
TEST(Prefill, StoredChunksRemainRecoverable) {
  auto cfg = tiny_config(4, CodingScheme::reed_solomon(4, 2));
  ParityStore store;
  auto run = run_prefill_with_checkpointing(11, 3 * cfg.chunk_size, cfg, store, {true, 13});
  ASSERT_TRUE(run.completed);
  for (std::uint32_t c = 0; c < run.chunks_done; ++c) {
    const ParityChunk* entry = nullptr;
    ASSERT_EQ(store.get(11, c, &entry), ParityGetStatus::kOk);
    std::vector<ConstShardSpan> data;
    for (const auto& s : run.ground_truth[c]) data.emplace_back(s.bytes);
    EXPECT_EQ(encode(cfg.scheme, data), entry->parity);
  }
}

TEST(Prefill, TimelineSanityNoOverlapPerWorker) {
  auto cfg = tiny_config(4, CodingScheme::reed_solomon(4, 2));
  ParityStore store;
  auto run = run_prefill_with_checkpointing(2, 6 * cfg.chunk_size, cfg, store, {false, 0});
  // Per worker, non-overlappable events (everything except offload) must not
  // overlap; offload must never overlap an encode on the same worker.
  std::map<int, std::vector<const TimelineEvent*>> by_worker;
  for (const auto& ev : run.events) by_worker[ev.worker].push_back(&ev);
  for (auto& [worker, evs] : by_worker) {
    for (std::size_t i = 0; i < evs.size(); ++i)
      for (std::size_t j = i + 1; j < evs.size(); ++j) {
        const auto *a = evs[i], *b = evs[j];
        const bool overlap = a->start < b->end() && b->start < a->end();
        if (!overlap) continue;
        const bool either_offload =
            a->kind == EventKind::kOffload || b->kind == EventKind::kOffload;
        ASSERT_TRUE(either_offload)
            << "worker " << worker << ": " << to_string(a->kind) << " overlaps "
            << to_string(b->kind);
        ASSERT_NE(a->kind, EventKind::kEncode);
        ASSERT_NE(b->kind, EventKind::kEncode);
      }
  }
}

TEST(DecodeCheckpointer, EmitsPerChunkBoundary) {
  auto cfg = tiny_config();
  DecodeCheckpointer dec(4, 10, cfg, {true, 3});
  AssignmentState state;
  ChunkTiming timing;
  int emitted = 0;
  for (std::uint32_t t = 0; t < 2 * cfg.chunk_size; ++t)
    if (auto out = dec.step(state, timing)) {
      ++emitted;
      EXPECT_EQ(out->parity.valid_tokens, cfg.chunk_size);
      EXPECT_EQ(out->parity.chunk_id.index, 10u + static_cast<std::uint32_t>(emitted) - 1);
    }
  EXPECT_EQ(emitted, 2);
  EXPECT_FALSE(dec.flush(state, timing).has_value());  // nothing buffered
}

TEST(DecodeCheckpointer, FlushMasksPartialTail) {
  auto cfg = tiny_config();
  DecodeCheckpointer dec(4, 10, cfg, {true, 3});
  AssignmentState state;
  ChunkTiming timing;
  for (std::uint32_t t = 0; t < 5; ++t) EXPECT_FALSE(dec.step(state, timing).has_value());
  auto out = dec.flush(state, timing);
  ASSERT_TRUE(out.has_value());
  EXPECT_EQ(out->parity.valid_tokens, 5u);
  const auto& slices = dec.ground_truth().back();
  const auto stride = token_stride_bytes(cfg.model);
  for (std::size_t i = static_cast<std::size_t>(stride) * 5; i < stride * cfg.chunk_size; ++i)
    ASSERT_EQ(slices[0].bytes[i], 0);
}

// Decode-side overhead under calibrated defaults stays below 10% because the
// stall accrues once per m generated tokens.
TEST(DecodeCheckpointer, OverheadBoundUnderDefaults) {
  auto cfg = calibrated_config();
  DecodeCheckpointer dec(4, 32, cfg, {false, 0});
  AssignmentState state;
  ChunkTiming timing;
  double compute = 0, stall = 0;
  for (std::uint32_t t = 0; t < 4096; ++t)
    if (auto out = dec.step(state, timing)) {
      compute += out->compute;
      stall += out->stall;
    }
  ASSERT_GT(compute, 0);
  EXPECT_LT(stall / compute, 0.10);
}
