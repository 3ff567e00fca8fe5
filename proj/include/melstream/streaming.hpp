#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "melstream/dsp.hpp"
#include "melstream/model.hpp"
#include "melstream/ring_buffer.hpp"

namespace melstream {

struct StreamOptions {
  // Sample edge capacity; 0 means 4 x frame_size.
  std::size_t sample_capacity = 0;
  // Pull mode: mel frames are queued for pull_frames() instead of returned
  // from push(). A full queue raises BufferOverflow.
  bool pull_mode = false;
  std::size_t output_capacity_frames = 256;
  // Zero-pad a stream shorter than one patch at flush (mirrors PredictOptions).
  bool pad_short = false;
};

struct StreamOutput {
  int n_mels = 0;
  std::vector<float> mel_frames;  // row-major, frame_count() x n_mels
  std::vector<std::vector<float>> predictions;

  std::size_t frame_count() const {
    return n_mels == 0 ? 0 : mel_frames.size() / static_cast<std::size_t>(n_mels);
  }
  bool empty() const { return mel_frames.empty() && predictions.empty(); }
};

struct WallTimeStats {
  double min_seconds = 0.0;
  double mean_seconds = 0.0;
  double max_seconds = 0.0;
  std::size_t count = 0;
};

struct LatencyReport {
  // Samples that must arrive before the first output can be emitted.
  std::size_t algorithmic_latency = 0;
  WallTimeStats per_chunk;
};

// framing -> spectrum -> mel [-> patch -> model]. Caller-driven: push()
// emits exactly the outputs that became computable and never waits for
// future input. Output is bit-identical to the offline path for any chunking.
class StreamPipeline {
 public:
  StreamPipeline(const MelConfig& config, int sample_rate, StreamOptions options = {});
  explicit StreamPipeline(std::shared_ptr<const ModelGraph> model, StreamOptions options = {});

  StreamOutput push(std::span<const float> chunk);

  // Emits what remains complete, drops trailing partial data, closes the
  // pipeline. AlreadyFlushed on a second call.
  StreamOutput flush();

  // Pull mode only: moves up to out.size() / n_mels queued frames into out.
  std::size_t pull_frames(std::span<float> out);

  LatencyReport latency_report() const;

  bool flushed() const { return flushed_; }
  std::size_t edge_count() const;
  std::size_t total_capacity() const;
  std::size_t peak_buffered() const;
  std::size_t frames_emitted() const { return frames_emitted_; }
  std::size_t patches_emitted() const { return patches_emitted_; }
  const MelConfig& config() const { return extractor_.config(); }

 private:
  void drain_frames(StreamOutput& out);
  void emit_frame(std::span<const float> mel, StreamOutput& out);
  void run_patch(StreamOutput& out);

  MelExtractor extractor_;
  StreamOptions options_;
  std::shared_ptr<const ModelGraph> model_;
  RingBuffer<float> samples_;
  std::unique_ptr<RingBuffer<float>> patch_;
  std::unique_ptr<RingBuffer<float>> queued_;
  std::vector<float> frame_scratch_;
  std::vector<float> mel_scratch_;
  std::vector<float> patch_scratch_;
  std::size_t samples_seen_ = 0;
  std::size_t frames_emitted_ = 0;
  std::size_t patches_emitted_ = 0;
  bool flushed_ = false;
  std::vector<double> chunk_seconds_;
};

}  // namespace melstream
