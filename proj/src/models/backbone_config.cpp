#include "gridcast/models/backbone_config.hpp"

#include "gridcast/error.hpp"

namespace gridcast::models {

std::string_view to_string(Family f) { return f == Family::hrnet ? "hrnet" : "unet"; }

Family parse_family(std::string_view text) {
  if (text == "hrnet") return Family::hrnet;
  if (text == "unet") return Family::unet;
  throw ConfigError("unknown model family '" + std::string(text) + "'");
}

void BackboneConfig::validate() const {
  activation.validate();
  if (width <= 0) throw ConfigError("backbone width must be positive");
  if (out_frames <= 0 || out_channels <= 0) throw ConfigError("output frames and channels must be positive");
  if (geo_embedding.dim < 0) throw ConfigError("geo-embedding dimension must be non-negative");
  if (geo_embedding.max_norm && !(*geo_embedding.max_norm > 0.0)) throw ConfigError("max_norm must be positive");
  if (in_channels <= 0 || feature_channels() < 0) throw ConfigError("in_channels must cover the geo-embedding channels");
  if (family == Family::hrnet) {
    if (stages.empty()) throw ConfigError("hrnet needs at least one stage");
    int prev = 1;
    for (const auto& s : stages) {
      if (s.branches < prev || s.branches > 4) {
        throw ConfigError("hrnet stage branch counts must be non-decreasing and at most 4");
      }
      if (s.blocks < 0) throw ConfigError("hrnet blocks per branch must be non-negative");
      prev = s.branches;
    }
  } else if (depth < 1) {
    throw ConfigError("unet depth must be at least 1");
  }
}

int BackboneConfig::max_branches() const {
  if (family == Family::unet) return depth;
  int m = 1;
  for (const auto& s : stages) m = std::max(m, s.branches);
  return m;
}

int BackboneConfig::downsample_levels() const { return max_branches() - 1; }

std::vector<int> BackboneConfig::branch_widths() const {
  std::vector<int> w;
  for (int i = 0; i < max_branches(); ++i) w.push_back(width << i);
  return w;
}

void BackboneConfig::check_grid(int height, int grid_width) const {
  const int div = 1 << downsample_levels();
  if (height <= 0 || grid_width <= 0 || height % div != 0 || grid_width % div != 0) {
    throw ConfigError("grid " + std::to_string(height) + "x" + std::to_string(grid_width) + " not divisible by " +
                      std::to_string(div) + " as the backbone requires");
  }
}

BackboneConfig BackboneConfig::hrnet_w18() {
  BackboneConfig c;
  c.width = 18;
  c.stages = {{1, 4}, {2, 4}, {3, 4}, {4, 4}};
  return c;
}

BackboneConfig BackboneConfig::hrnet_w48() {
  auto c = hrnet_w18();
  c.width = 48;
  return c;
}

void to_json(ordered_json& j, const BackboneConfig& c) {
  j = ordered_json::object();
  j["family"] = to_string(c.family);
  j["width"] = c.width;
  if (c.family == Family::hrnet) {
    auto st = ordered_json::array();
    for (const auto& s : c.stages) st.push_back({{"branches", s.branches}, {"blocks", s.blocks}});
    j["stages"] = st;
  } else {
    j["depth"] = c.depth;
  }
  j["activation"] = c.activation;
  j["batch_norm"] = c.batch_norm;
  ordered_json ge{{"dim", c.geo_embedding.dim}};
  ge["max_norm"] = c.geo_embedding.max_norm ? ordered_json(*c.geo_embedding.max_norm) : ordered_json(nullptr);
  j["geo_embedding"] = ge;
  j["in_channels"] = c.in_channels;
  j["out_frames"] = c.out_frames;
  j["out_channels"] = c.out_channels;
}

void from_json(const ordered_json& j, BackboneConfig& c) {
  c = BackboneConfig{};
  try {
    if (j.contains("preset")) {
      const auto p = j["preset"].get<std::string>();
      if (p == "hrnet_w18") c = BackboneConfig::hrnet_w18();
      else if (p == "hrnet_w48") c = BackboneConfig::hrnet_w48();
      else throw ConfigError("unknown backbone preset '" + p + "'");
    }
    if (j.contains("family")) c.family = parse_family(j["family"].get<std::string>());
    c.width = j.value("width", c.width);
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& s : j["stages"]) c.stages.push_back({s.at("branches").get<int>(), s.value("blocks", 1)});
    }
    c.depth = j.value("depth", c.depth);
    if (j.contains("activation")) c.activation = j["activation"].get<ActivationKind>();
    c.batch_norm = j.value("batch_norm", c.batch_norm);
    if (j.contains("geo_embedding")) {
      const auto& ge = j["geo_embedding"];
      c.geo_embedding.dim = ge.value("dim", c.geo_embedding.dim);
      if (ge.contains("max_norm") && !ge["max_norm"].is_null()) c.geo_embedding.max_norm = ge["max_norm"].get<double>();
    }
    c.in_channels = j.value("in_channels", c.in_channels);
    c.out_frames = j.value("out_frames", c.out_frames);
    c.out_channels = j.value("out_channels", c.out_channels);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  c.validate();
}

std::vector<int> unet_decoder_in_channels(const BackboneConfig& c) {
  std::vector<int> out;
  const auto w = c.branch_widths();
  for (int l = c.depth - 2; l >= 0; --l) out.push_back(w[static_cast<std::size_t>(l)] + w[static_cast<std::size_t>(l) + 1]);
  return out;
}

}  // namespace gridcast::models
