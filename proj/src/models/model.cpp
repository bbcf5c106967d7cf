#include "gridcast/models/model.hpp"

#include <cmath>
#include <random>

#include "gridcast/error.hpp"

namespace gridcast::models {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

struct ConvBn {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  nn::BatchNormState* state = nullptr;
  std::string state_name;
  nn::ConvGeometry geom;
};

struct BasicBlock {
  ConvBn first;
  ConvBn second;
};

// Fusion path from branch `from` into branch `to`.
struct FusePath {
  int from = 0;
  int to = 0;
  std::vector<ConvBn> convs;  // 1 conv for upsampling paths, to-from strided convs for downsampling
};

struct HrStage {
  std::vector<ConvBn> transitions;  // one per newly created branch
  std::vector<std::vector<BasicBlock>> blocks;
  std::vector<FusePath> fuse;  // empty when the stage has a single branch
  int branches = 1;
};

struct DoubleConv {
  ConvBn first;
  ConvBn second;
};

}  // namespace

struct Model::Impl {
  std::vector<std::unique_ptr<Parameter>> params;
  std::vector<std::unique_ptr<nn::BatchNormState>> states;
  std::vector<std::string> state_names;
  std::mt19937_64 rng;

  // hrnet
  ConvBn stem;
  std::vector<HrStage> stages;
  // unet
  std::vector<DoubleConv> encoder;
  std::vector<DoubleConv> decoder;  // deepest first
  // both
  Parameter* head_weight = nullptr;
  Parameter* head_bias = nullptr;

  explicit Impl(std::uint64_t seed) : rng(seed) {}

  Parameter* add_param(const std::string& name, nn::Shape shape) {
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor(std::move(shape));
    p->zero_grad();
    params.push_back(std::move(p));
    return params.back().get();
  }

  Parameter* conv_weight(const std::string& name, int out, int in, int k) {
    auto* p = add_param(name, {static_cast<std::size_t>(out), static_cast<std::size_t>(in), static_cast<std::size_t>(k),
                               static_cast<std::size_t>(k)});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : p->value.data()) v = u(rng);
    return p;
  }

  ConvBn conv_bn(const std::string& name, int in, int out, int k, int stride, bool batch_norm) {
    ConvBn c;
    c.geom = {static_cast<std::size_t>(stride), static_cast<std::size_t>(k / 2)};
    c.weight = conv_weight(name + ".conv.weight", out, in, k);
    if (batch_norm) {
      c.gamma = add_param(name + ".bn.weight", {static_cast<std::size_t>(out)});
      c.gamma->value.fill(1.0);
      c.beta = add_param(name + ".bn.bias", {static_cast<std::size_t>(out)});
      states.push_back(std::make_unique<nn::BatchNormState>(static_cast<std::size_t>(out)));
      state_names.push_back(name + ".bn");
      c.state = states.back().get();
    } else {
      c.bias = add_param(name + ".conv.bias", {static_cast<std::size_t>(out)});
    }
    return c;
  }
};

namespace {

Var apply(Tape& tape, const ConvBn& c, Var x, const ActivationKind* act, bool training, nn::StatsSync* sync) {
  std::optional<Var> bias;
  if (c.bias != nullptr) bias = tape.param(*c.bias);
  Var y = nn::conv2d(x, tape.param(*c.weight), bias, c.geom);
  if (c.state != nullptr) y = nn::batch_norm(y, tape.param(*c.gamma), tape.param(*c.beta), *c.state, training, sync);
  if (act != nullptr) y = nn::activation(y, *act);
  return y;
}

}  // namespace

Model::Model(BackboneConfig config, int height, int width, std::uint64_t seed)
    : config_(std::move(config)), height_(height), width_(width), seed_(seed), impl_(std::make_unique<Impl>(seed)) {
  config_.validate();
  config_.check_grid(height_, width_);
  auto& m = *impl_;
  const bool bn = config_.batch_norm;
  const auto widths = config_.branch_widths();
  int head_in = 0;

  if (config_.family == Family::hrnet) {
    m.stem = m.conv_bn("stem", config_.in_channels, widths[0], 3, 1, bn);
    int prev_branches = 1;
    for (std::size_t s = 0; s < config_.stages.size(); ++s) {
      const auto& spec = config_.stages[s];
      const std::string sp = "stage" + std::to_string(s + 1);
      HrStage stage;
      stage.branches = spec.branches;
      for (int b = prev_branches; b < spec.branches; ++b) {
        stage.transitions.push_back(m.conv_bn(sp + ".transition" + std::to_string(b), widths[b - 1], widths[b], 3, 2, bn));
      }
      for (int b = 0; b < spec.branches; ++b) {
        std::vector<BasicBlock> blocks;
        for (int k = 0; k < spec.blocks; ++k) {
          const std::string bp = sp + ".branch" + std::to_string(b) + ".block" + std::to_string(k);
          blocks.push_back({m.conv_bn(bp + ".a", widths[b], widths[b], 3, 1, bn),
                            m.conv_bn(bp + ".b", widths[b], widths[b], 3, 1, bn)});
        }
        stage.blocks.push_back(std::move(blocks));
      }
      if (spec.branches > 1) {
        for (int to = 0; to < spec.branches; ++to) {
          for (int from = 0; from < spec.branches; ++from) {
            if (from == to) continue;
            FusePath path{from, to, {}};
            const std::string fp = sp + ".fuse" + std::to_string(from) + "to" + std::to_string(to);
            if (from > to) {
              path.convs.push_back(m.conv_bn(fp, widths[from], widths[to], 1, 1, bn));
            } else {
              for (int step = 0; step < to - from; ++step) {
                const bool last = step == to - from - 1;
                path.convs.push_back(m.conv_bn(fp + ".down" + std::to_string(step), widths[from],
                                               last ? widths[to] : widths[from], 3, 2, bn));
              }
            }
            stage.fuse.push_back(std::move(path));
          }
        }
      }
      m.stages.push_back(std::move(stage));
      prev_branches = spec.branches;
    }
    for (int b = 0; b < prev_branches; ++b) head_in += widths[b];
  } else {
    for (int l = 0; l < config_.depth; ++l) {
      const int in = l == 0 ? config_.in_channels : widths[l - 1];
      const std::string p = "enc" + std::to_string(l);
      m.encoder.push_back({m.conv_bn(p + ".a", in, widths[l], 3, 1, bn), m.conv_bn(p + ".b", widths[l], widths[l], 3, 1, bn)});
    }
    for (int l = config_.depth - 2; l >= 0; --l) {
      const std::string p = "dec" + std::to_string(l);
      m.decoder.push_back({m.conv_bn(p + ".a", widths[l] + widths[l + 1], widths[l], 3, 1, bn),
                           m.conv_bn(p + ".b", widths[l], widths[l], 3, 1, bn)});
    }
    head_in = widths[0];
  }
  m.head_weight = m.conv_weight("head.weight", config_.out_planes(), head_in, 1);
  m.head_bias = m.add_param("head.bias", {static_cast<std::size_t>(config_.out_planes())});

  if (config_.geo_embedding.dim > 0) {
    embedding_ = std::make_unique<GeoEmbedding>(config_.geo_embedding.dim, height_, width_, config_.geo_embedding.max_norm,
                                                m.rng());
  }
}

Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : impl_->params) out.push_back(p.get());
  if (embedding_) out.push_back(&embedding_->table());
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : impl_->params) out.push_back(p.get());
  if (embedding_) out.push_back(&embedding_->table());
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Model::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < impl_->states.size(); ++i) {
    out.emplace_back(impl_->state_names[i] + ".running_mean", &impl_->states[i]->running_mean);
    out.emplace_back(impl_->state_names[i] + ".running_var", &impl_->states[i]->running_var);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

Var Model::forward(Tape& tape, Var features) {
  const auto& s = features.shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(config_.feature_channels()) ||
      s[2] != static_cast<std::size_t>(height_) || s[3] != static_cast<std::size_t>(width_)) {
    throw ShapeError("model expects input (N, " + std::to_string(config_.feature_channels()) + ", " +
                     std::to_string(height_) + ", " + std::to_string(width_) + "), got " + nn::shape_string(s));
  }
  auto& m = *impl_;
  const ActivationKind* act = &config_.activation;
  Var x = features;
  if (embedding_) {
    const Var parts[] = {features, embedding_->lookup_batch(tape, s[0])};
    x = nn::concat_channels(parts);
  }

  std::vector<Var> head_inputs;
  if (config_.family == Family::hrnet) {
    std::vector<Var> branches{apply(tape, m.stem, x, act, training_, sync_)};
    for (const auto& stage : m.stages) {
      for (const auto& t : stage.transitions) branches.push_back(apply(tape, t, branches.back(), act, training_, sync_));
      for (int b = 0; b < stage.branches; ++b) {
        for (const auto& blk : stage.blocks[static_cast<std::size_t>(b)]) {
          Var h = apply(tape, blk.first, branches[b], act, training_, sync_);
          h = apply(tape, blk.second, h, nullptr, training_, sync_);
          branches[b] = nn::activation(nn::add(h, branches[b]), *act);
        }
      }
      if (!stage.fuse.empty()) {
        std::vector<std::vector<Var>> sums(static_cast<std::size_t>(stage.branches));
        for (int b = 0; b < stage.branches; ++b) sums[b].push_back(branches[b]);
        for (const auto& path : stage.fuse) {
          Var y = branches[path.from];
          if (path.from > path.to) {
            y = apply(tape, path.convs.front(), y, nullptr, training_, sync_);
            y = nn::upsample_nearest(y, std::size_t{1} << (path.from - path.to));
          } else {
            for (std::size_t k = 0; k < path.convs.size(); ++k) {
              const bool last = k + 1 == path.convs.size();
              y = apply(tape, path.convs[k], y, last ? nullptr : act, training_, sync_);
            }
          }
          sums[path.to].push_back(y);
        }
        for (int b = 0; b < stage.branches; ++b) branches[b] = nn::activation(nn::add_n(sums[b]), *act);
      }
    }
    for (std::size_t b = 0; b < branches.size(); ++b) head_inputs.push_back(nn::upsample_nearest(branches[b], std::size_t{1} << b));
  } else {
    std::vector<Var> skips;
    Var h = x;
    for (std::size_t l = 0; l < m.encoder.size(); ++l) {
      if (l > 0) h = nn::max_pool2(h);
      h = apply(tape, m.encoder[l].first, h, act, training_, sync_);
      h = apply(tape, m.encoder[l].second, h, act, training_, sync_);
      skips.push_back(h);
    }
    for (std::size_t d = 0; d < m.decoder.size(); ++d) {
      const std::size_t level = m.encoder.size() - 2 - d;
      const Var parts[] = {skips[level], nn::upsample_nearest(h, 2)};
      h = nn::concat_channels(parts);
      h = apply(tape, m.decoder[d].first, h, act, training_, sync_);
      h = apply(tape, m.decoder[d].second, h, act, training_, sync_);
    }
    head_inputs.push_back(h);
  }
  Var merged = head_inputs.size() == 1 ? head_inputs.front() : nn::concat_channels(head_inputs);
  return nn::conv2d(merged, tape.param(*m.head_weight), tape.param(*m.head_bias), {});
}

Tensor Model::predict(const Tensor& features) {
  Tape tape;
  return forward(tape, tape.constant(features)).value();
}

}  // namespace gridcast::models
