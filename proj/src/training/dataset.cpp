#include "gridcast/training/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <numeric>
#include <random>
#include <thread>

#include "gridcast/error.hpp"
#include "gridcast/synthetic.hpp"

namespace gridcast::training {

std::vector<SampleKey> sample_keys(Date first, Date last, std::span<const int> anchors) {
  std::vector<SampleKey> keys;
  for (Date d = first; d <= last; d = d.plus_days(1)) {
    for (int t : anchors) keys.push_back({d, t});
  }
  return keys;
}

SampleSet::SampleSet(const FeaturePipeline& pipeline, std::vector<SampleKey> keys, FeatureMode mode,
                     std::uint64_t seed, unsigned threads)
    : keys_(std::move(keys)), manifest_(pipeline.manifest()) {
  const auto& spec = pipeline.spec();
  height_ = spec.height;
  width_ = spec.width;
  feature_channels_ = pipeline.channels();
  target_planes_ = static_cast<int>(pipeline.config().offsets.size()) * spec.dynamic_channels;
  const std::size_t plane = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  const std::size_t fstride = plane * static_cast<std::size_t>(feature_channels_);
  const std::size_t tstride = plane * static_cast<std::size_t>(target_planes_);
  features_.assign(fstride * keys_.size(), 0.0f);
  targets_.assign(tstride * keys_.size(), 0.0f);
  const int channels = spec.dynamic_channels;

  auto build_one = [&](std::size_t i) {
    const auto& key = keys_[i];
    auto sample = pipeline.build(key.date, key.t, mode, seed);
    std::copy(sample.bundle.input.begin(), sample.bundle.input.end(), features_.begin() + static_cast<std::ptrdiff_t>(i * fstride));
    // (T, H, W, C) -> (T*C, H, W)
    const auto& w = sample.window;
    float* out = targets_.data() + i * tstride;
    const std::size_t frames = w.offsets.size();
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < channels; ++c) {
          out[(f * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)) * plane + p] =
              w.targets[(f * plane + p) * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)];
        }
      }
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, keys_.size()))));
  if (threads == 1) {
    for (std::size_t i = 0; i < keys_.size(); ++i) build_one(i);
    return;
  }
  // Each slot is written by exactly one worker, so the output order is fixed.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < keys_.size(); i = next++) build_one(i);
      } catch (...) {
        errors[w] = std::current_exception();
        next = keys_.size();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::span<const float> SampleSet::features(std::size_t i) const {
  const std::size_t n = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_) * static_cast<std::size_t>(feature_channels_);
  return {features_.data() + i * n, n};
}

std::span<const float> SampleSet::targets(std::size_t i) const {
  const std::size_t n = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_) * static_cast<std::size_t>(target_planes_);
  return {targets_.data() + i * n, n};
}

SampleSet SampleSet::concat(const SampleSet& a, const SampleSet& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.height_ != b.height_ || a.width_ != b.width_ || a.feature_channels_ != b.feature_channels_ ||
      a.target_planes_ != b.target_planes_ || !(a.manifest_ == b.manifest_)) {
    throw ShapeError("cannot concatenate sample sets of different geometry");
  }
  SampleSet out = a;
  out.keys_.insert(out.keys_.end(), b.keys_.begin(), b.keys_.end());
  out.features_.insert(out.features_.end(), b.features_.begin(), b.features_.end());
  out.targets_.insert(out.targets_.end(), b.targets_.begin(), b.targets_.end());
  return out;
}

Batch make_batch(const SampleSet& set, std::span<const std::size_t> indices) {
  const std::size_t n = indices.size();
  const auto h = static_cast<std::size_t>(set.height());
  const auto w = static_cast<std::size_t>(set.width());
  Batch b{nn::Tensor({n, static_cast<std::size_t>(set.feature_channels()), h, w}),
          nn::Tensor({n, static_cast<std::size_t>(set.target_planes()), h, w})};
  auto fd = b.features.data();
  auto td = b.targets.data();
  std::size_t fo = 0;
  std::size_t to = 0;
  for (std::size_t idx : indices) {
    if (idx >= set.size()) throw ShapeError("sample index out of range");
    for (float v : set.features(idx)) fd[fo++] = v;
    for (float v : set.targets(idx)) td[to++] = v;
  }
  return b;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(hash_combine(seed, static_cast<std::uint64_t>(epoch) + 0x9e37u));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace gridcast::training
