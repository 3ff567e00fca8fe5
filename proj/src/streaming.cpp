#include "melstream/streaming.hpp"

#include <algorithm>
#include <numeric>

#include "melstream/error.hpp"
#include "melstream/inference.hpp"

namespace melstream {

StreamPipeline::StreamPipeline(const MelConfig& config, int sample_rate, StreamOptions options)
    : extractor_(config, sample_rate),
      options_(options),
      samples_(options.sample_capacity ? options.sample_capacity
                                       : 4 * static_cast<std::size_t>(config.frame_size)),
      frame_scratch_(static_cast<std::size_t>(config.frame_size)),
      mel_scratch_(static_cast<std::size_t>(config.n_mels)) {
  if (samples_.capacity() < static_cast<std::size_t>(config.frame_size)) {
    throw Error(ErrorCode::InvalidConfig, "sample capacity below frame_size");
  }
  if (options_.pull_mode) {
    queued_ = std::make_unique<RingBuffer<float>>(options_.output_capacity_frames *
                                                  static_cast<std::size_t>(config.n_mels));
  }
}

StreamPipeline::StreamPipeline(std::shared_ptr<const ModelGraph> model, StreamOptions options)
    : StreamPipeline(model->feature_config(), model->sample_rate(), options) {
  model_ = std::move(model);
  const std::size_t patch_values =
      static_cast<std::size_t>(model_->patch_frames()) * static_cast<std::size_t>(model_->feature_config().n_mels);
  patch_ = std::make_unique<RingBuffer<float>>(patch_values);
  patch_scratch_.resize(patch_values);
}

void StreamPipeline::emit_frame(std::span<const float> mel, StreamOutput& out) {
  ++frames_emitted_;
  if (queued_) {
    queued_->write_all(mel);
  } else {
    out.mel_frames.insert(out.mel_frames.end(), mel.begin(), mel.end());
  }
  if (patch_) {
    patch_->write_all(mel);
    if (patch_->size() == patch_->capacity()) run_patch(out);
  }
}

void StreamPipeline::run_patch(StreamOutput& out) {
  const std::size_t filled = patch_->read(patch_scratch_);
  std::fill(patch_scratch_.begin() + static_cast<std::ptrdiff_t>(filled), patch_scratch_.end(), 0.0f);
  const auto n_mels = static_cast<std::size_t>(model_->feature_config().n_mels);
  Tensor input = patch_input(*model_, patch_scratch_, filled / n_mels, 0);
  out.predictions.push_back(forward(*model_, input).data);
  ++patches_emitted_;
}

void StreamPipeline::drain_frames(StreamOutput& out) {
  const auto hop = static_cast<std::size_t>(extractor_.config().hop_size);
  while (samples_.peek(0, frame_scratch_)) {
    extractor_.compute_frame(frame_scratch_, mel_scratch_);
    emit_frame(mel_scratch_, out);
    samples_.discard(hop);
  }
}

StreamOutput StreamPipeline::push(std::span<const float> chunk) {
  if (flushed_) throw Error(ErrorCode::AlreadyFlushed, "push after flush");
  const auto start = std::chrono::steady_clock::now();
  StreamOutput out;
  out.n_mels = extractor_.config().n_mels;
  while (!chunk.empty()) {
    const std::size_t written = samples_.write(chunk);
    samples_seen_ += written;
    chunk = chunk.subspan(written);
    drain_frames(out);
  }
  chunk_seconds_.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return out;
}

StreamOutput StreamPipeline::flush() {
  if (flushed_) throw Error(ErrorCode::AlreadyFlushed, "flush called twice");
  flushed_ = true;
  StreamOutput out;
  out.n_mels = extractor_.config().n_mels;
  drain_frames(out);
  if (model_ && options_.pad_short && patches_emitted_ == 0) {
    if (frames_emitted_ == 0 && samples_seen_ > 0) {
      // Shorter than one frame: zero-pad to a single frame as offline predict does.
      std::fill(frame_scratch_.begin(), frame_scratch_.end(), 0.0f);
      samples_.read(std::span<float>(frame_scratch_).first(samples_.size()));
      extractor_.compute_frame(frame_scratch_, mel_scratch_);
      emit_frame(mel_scratch_, out);
    }
    if (patches_emitted_ == 0 && patch_->size() > 0) run_patch(out);
  }
  samples_.discard(samples_.size());
  if (patch_) patch_->discard(patch_->size());
  return out;
}

std::size_t StreamPipeline::pull_frames(std::span<float> out) {
  if (!queued_) throw Error(ErrorCode::InvalidConfig, "pull_frames requires pull_mode");
  const auto n_mels = static_cast<std::size_t>(extractor_.config().n_mels);
  const std::size_t frames = std::min(out.size() / n_mels, queued_->size() / n_mels);
  queued_->read(out.first(frames * n_mels));
  return frames;
}

LatencyReport StreamPipeline::latency_report() const {
  LatencyReport report;
  const auto frame = static_cast<std::size_t>(extractor_.config().frame_size);
  const auto hop = static_cast<std::size_t>(extractor_.config().hop_size);
  report.algorithmic_latency =
      model_ ? frame + (static_cast<std::size_t>(model_->patch_frames()) - 1) * hop : frame;
  if (!chunk_seconds_.empty()) {
    const auto [lo, hi] = std::minmax_element(chunk_seconds_.begin(), chunk_seconds_.end());
    report.per_chunk.min_seconds = *lo;
    report.per_chunk.max_seconds = *hi;
    report.per_chunk.mean_seconds =
        std::accumulate(chunk_seconds_.begin(), chunk_seconds_.end(), 0.0) / static_cast<double>(chunk_seconds_.size());
    report.per_chunk.count = chunk_seconds_.size();
  }
  return report;
}

std::size_t StreamPipeline::edge_count() const {
  return 1 + (patch_ ? 1 : 0) + (queued_ ? 1 : 0);
}

std::size_t StreamPipeline::total_capacity() const {
  return samples_.capacity() + (patch_ ? patch_->capacity() : 0) + (queued_ ? queued_->capacity() : 0);
}

std::size_t StreamPipeline::peak_buffered() const {
  return samples_.peak_size() + (patch_ ? patch_->peak_size() : 0) + (queued_ ? queued_->peak_size() : 0);
}

}  // namespace melstream
