#include "gridcast/models/checkpoint.hpp"

#include <cstring>
#include <map>

#include "gridcast/error.hpp"

namespace gridcast::models {

namespace {

std::vector<std::pair<std::string, nn::Tensor*>> named_tensors(Model& model) {
  std::vector<std::pair<std::string, nn::Tensor*>> out;
  for (auto* p : model.parameters()) out.emplace_back(p->name, &p->value);
  for (auto& b : model.buffers()) out.push_back(b);
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta) {
  ordered_json h;
  h["format"] = "gridcast-checkpoint";
  h["dtype"] = "f64";
  h["config"] = model.config();
  h["grid"] = {model.height(), model.width()};
  h["seed"] = meta.seed;
  h["model_seed"] = model.seed();
  h["epoch"] = meta.epoch;
  h["metric"] = meta.metric ? ordered_json(*meta.metric) : ordered_json(nullptr);
  h["extra"] = meta.extra;
  auto list = ordered_json::array();
  std::size_t offset = 0;
  const auto tensors = named_tensors(model);
  for (const auto& [name, t] : tensors) {
    list.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}});
    offset += t->size() * sizeof(double);
  }
  h["tensors"] = list;
  std::vector<std::uint8_t> payload(offset);
  offset = 0;
  for (const auto& [name, t] : tensors) {
    std::memcpy(payload.data() + offset, t->ptr(), t->size() * sizeof(double));
    offset += t->size() * sizeof(double);
  }
  write_container(path, h, payload);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto c = read_container(path);
  const auto& h = c.header;
  if (h.value("format", "") != "gridcast-checkpoint" || h.value("dtype", "") != "f64") {
    throw FormatError(path.string() + ": not a gridcast checkpoint");
  }
  BackboneConfig config;
  try {
    config = h.at("config").get<BackboneConfig>();
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const int height = h.at("grid").at(0).get<int>();
  const int width = h.at("grid").at(1).get<int>();
  Model model(config, height, width, h.value("model_seed", std::uint64_t{0}));

  std::map<std::string, ordered_json> entries;
  for (const auto& e : h.at("tensors")) entries[e.at("name").get<std::string>()] = e;
  const auto tensors = named_tensors(model);
  if (entries.size() != tensors.size()) throw FormatError(path.string() + ": tensor list does not match the model");
  for (const auto& [name, t] : tensors) {
    auto it = entries.find(name);
    if (it == entries.end()) throw FormatError(path.string() + ": missing tensor " + name);
    if (it->second.at("shape").get<nn::Shape>() != t->shape()) throw FormatError(path.string() + ": shape mismatch for " + name);
    const auto offset = it->second.at("offset").get<std::size_t>();
    const std::size_t bytes = t->size() * sizeof(double);
    if (offset + bytes > c.payload.size()) throw CorruptionError(path.string() + ": payload truncated at " + name);
    std::memcpy(t->ptr(), c.payload.data() + offset, bytes);
  }
  CheckpointMeta meta;
  meta.seed = h.value("seed", std::uint64_t{0});
  meta.epoch = h.value("epoch", 0);
  if (h.contains("metric") && !h["metric"].is_null()) meta.metric = h["metric"].get<double>();
  meta.extra = h.value("extra", ordered_json::object());
  return {std::move(model), std::move(meta)};
}

}  // namespace gridcast::models
