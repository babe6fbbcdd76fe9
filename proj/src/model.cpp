#include "patchmil/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

#include "patchmil/error.hpp"
#include "patchmil/parallel.hpp"

namespace patchmil {
namespace {

constexpr char kMagic[8] = {'P', 'M', 'I', 'L', 'C', 'K', 'P', 'T'};
constexpr double kLogitClamp = 30.0;

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

nn::Network reference_cnn(const ScorerSpec& spec) {
  if (spec.reference_widths.size() != 4) throw InvalidArgument("reference CNN needs exactly 4 stage widths");
  if (spec.input_size < 16 || spec.input_size % 16 != 0)
    throw InvalidArgument("reference CNN input size must be a positive multiple of 16");
  nn::Network net;
  int in = 1;
  for (int width : spec.reference_widths) {
    net.add(std::make_unique<nn::Conv2d>(in, width));
    net.add(std::make_unique<nn::Relu>());
    net.add(std::make_unique<nn::MaxPool2>());
    in = width;
  }
  net.add(std::make_unique<nn::GlobalMaxPool>());
  net.add(std::make_unique<nn::Dense>(in, 1));
  return net;
}

// VGG16 layout: 13 convolutions in five pooled blocks, then a three-layer
// head, 16 weight-bearing layers in total.
nn::Network vgg16_style(const ScorerSpec& spec) {
  if (spec.input_size < 32 || spec.input_size % 32 != 0)
    throw InvalidArgument("VGG16-style input size must be a positive multiple of 32");
  const int blocks[5][2] = {{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
  nn::Network net;
  int in = 3;
  for (const auto& [width, reps] : blocks) {
    for (int r = 0; r < reps; ++r) {
      net.add(std::make_unique<nn::Conv2d>(in, width));
      net.add(std::make_unique<nn::Relu>());
      in = width;
    }
    net.add(std::make_unique<nn::MaxPool2>());
  }
  net.add(std::make_unique<nn::GlobalAvgPool>());
  net.add(std::make_unique<nn::Dense>(512, 512));
  net.add(std::make_unique<nn::Relu>());
  net.add(std::make_unique<nn::Dense>(512, 512));
  net.add(std::make_unique<nn::Relu>());
  net.add(std::make_unique<nn::Dense>(512, 1));
  return net;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}
void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}
std::uint64_t read_uint(std::istream& in, int bytes, const std::filesystem::path& path) {
  unsigned char b[8] = {};
  if (!in.read(reinterpret_cast<char*>(b), bytes)) throw IoError("truncated checkpoint: " + path.string());
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

std::string to_string(BackboneId id) {
  return id == BackboneId::pretrained_vgg16_style ? "pretrained_vgg16_style" : "reference_small_cnn";
}

BackboneId backbone_from_string(const std::string& name) {
  if (name == "pretrained_vgg16_style") return BackboneId::pretrained_vgg16_style;
  if (name == "reference_small_cnn") return BackboneId::reference_small_cnn;
  throw InvalidArgument("unknown backbone: " + name);
}

nlohmann::json to_json(const ScorerSpec& spec) {
  return {{"backbone", to_string(spec.backbone)},
          {"input_size", spec.input_size},
          {"frozen_layer_count", spec.frozen_layer_count},
          {"seed", spec.seed},
          {"reference_widths", spec.reference_widths},
          {"weights_path", spec.weights_path.string()}};
}

ScorerSpec scorer_spec_from_json(const nlohmann::json& j) {
  ScorerSpec s;
  s.backbone = backbone_from_string(j.at("backbone").get<std::string>());
  s.input_size = j.at("input_size").get<int>();
  s.frozen_layer_count = j.at("frozen_layer_count").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("reference_widths")) s.reference_widths = j.at("reference_widths").get<std::vector<int>>();
  if (j.contains("weights_path")) s.weights_path = j.at("weights_path").get<std::string>();
  return s;
}

PatchScorer PatchScorer::randomly_initialized(const ScorerSpec& spec) {
  if (spec.frozen_layer_count < 0) throw InvalidArgument("frozen layer count must be >= 0");
  PatchScorer s;
  s.spec_ = spec;
  if (spec.backbone == BackboneId::reference_small_cnn) {
    s.net_ = reference_cnn(spec);
    s.input_channels_ = 1;
    s.channel_mean_ = {0.5f};
    s.channel_std_ = {0.25f};
    s.center_patches_ = true;
  } else {
    s.net_ = vgg16_style(spec);
    s.input_channels_ = 3;
    s.channel_mean_ = {0.485f, 0.456f, 0.406f};
    s.channel_std_ = {0.229f, 0.224f, 0.225f};
  }
  Rng rng = substream(spec.seed, "init");
  s.net_.initialize(rng);
  s.set_frozen_layer_count(spec.frozen_layer_count);
  return s;
}

void PatchScorer::set_frozen_layer_count(int count) {
  const auto weight_layers = net_.weight_layer_indices();
  if (count < 0 || static_cast<std::size_t>(count) > weight_layers.size())
    throw InvalidArgument("frozen layer count " + std::to_string(count) + " exceeds the " +
                          std::to_string(weight_layers.size()) + " weight-bearing layers");
  spec_.frozen_layer_count = count;
  for (std::size_t i = 0; i < weight_layers.size(); ++i)
    net_.layer(weight_layers[i]).trainable = static_cast<int>(i) >= count;
}

nn::Tensor PatchScorer::adapt(const Image& patch, std::size_t index) const {
  if (patch.height != spec_.input_size || patch.width != spec_.input_size ||
      (patch.channels != 1 && patch.channels != input_channels_) ||
      patch.data.size() != patch.plane_size() * patch.channels)
    throw InvalidArgument("patch " + std::to_string(index) + " has shape " + std::to_string(patch.channels) + "x" +
                          std::to_string(patch.height) + "x" + std::to_string(patch.width) + ", scorer expects " +
                          std::to_string(input_channels_) + "x" + std::to_string(spec_.input_size) + "x" +
                          std::to_string(spec_.input_size));
  nn::Tensor t(patch.height, patch.width, input_channels_);
  const std::size_t hw = patch.plane_size();
  for (int c = 0; c < input_channels_; ++c) {
    const int src = patch.channels == 1 ? 0 : c;
    float mean = channel_mean_[c];
    if (center_patches_) {
      double sum = 0.0;
      for (std::size_t i = 0; i < hw; ++i) sum += patch.data[src * hw + i];
      mean = static_cast<float>(sum / static_cast<double>(hw));
    }
    const float inv = 1.0f / channel_std_[c];
    for (std::size_t i = 0; i < hw; ++i) t.data[c * hw + i] = (patch.data[src * hw + i] - mean) * inv;
  }
  return t;
}

namespace {
double squash(double logit) { return 1.0 / (1.0 + std::exp(-std::clamp(logit, -kLogitClamp, kLogitClamp))); }
}  // namespace

double PatchScorer::score(const Image& patch) const {
  const nn::Tensor out = net_.forward(adapt(patch, 0));
  return squash(out.data.at(0));
}

std::vector<double> PatchScorer::score_patches(std::span<const Patch> patches) const {
  for (std::size_t i = 0; i < patches.size(); ++i) adapt(patches[i].pixels, i);  // shape check up front
  std::vector<double> scores(patches.size());
  parallel_for(patches.size(), worker_count(), [&](std::size_t i) {
    scores[i] = squash(net_.forward(adapt(patches[i].pixels, i)).data.at(0));
  });
  return scores;
}

double PatchScorer::accumulate_gradient(const Image& patch, double dloss_dscore) {
  nn::Trace trace;
  const nn::Tensor out = net_.forward_recorded(adapt(patch, 0), trace);
  const double logit = out.data.at(0);
  const double s = squash(logit);
  const double dlogit = std::abs(logit) < kLogitClamp ? dloss_dscore * s * (1.0 - s) : 0.0;
  nn::Tensor g(1, 1, 1, static_cast<float>(dlogit));
  net_.backward(trace, g);
  return s;
}

std::vector<LayerInfo> PatchScorer::weight_layers() const {
  std::vector<LayerInfo> info;
  for (std::size_t i : net_.weight_layer_indices()) {
    const nn::Layer& l = net_.layer(i);
    std::size_t n = 0;
    for (const auto& p : l.params()) n += p.value.size();
    info.push_back({std::string(l.kind()), n, l.trainable});
  }
  return info;
}

std::vector<std::uint64_t> PatchScorer::layer_checksums() const {
  std::vector<std::uint64_t> sums;
  for (std::size_t i : net_.weight_layer_indices()) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : net_.layer(i).params()) h = fnv1a(p.value.data(), p.value.size() * sizeof(float), h);
    sums.push_back(h);
  }
  return sums;
}

std::vector<nn::Parameter*> PatchScorer::trainable_parameters() {
  std::vector<nn::Parameter*> out;
  for (std::size_t i : net_.weight_layer_indices()) {
    nn::Layer& l = net_.layer(i);
    if (!l.trainable) continue;
    for (auto& p : l.params()) out.push_back(&p);
  }
  return out;
}

std::vector<const nn::Parameter*> PatchScorer::all_parameters() const {
  std::vector<const nn::Parameter*> out;
  for (std::size_t i : net_.weight_layer_indices())
    for (const auto& p : net_.layer(i).params()) out.push_back(&p);
  return out;
}

std::vector<nn::Parameter*> PatchScorer::all_parameters() {
  std::vector<nn::Parameter*> out;
  for (std::size_t i : net_.weight_layer_indices())
    for (auto& p : net_.layer(i).params()) out.push_back(&p);
  return out;
}

PatchScorer build_scorer(const ScorerSpec& spec) {
  if (spec.backbone == BackboneId::reference_small_cnn) return PatchScorer::randomly_initialized(spec);
  if (spec.weights_path.empty())
    throw IoError("pretrained backbone requested but no weights file was given (weights_path is empty)");
  if (!std::filesystem::exists(spec.weights_path))
    throw IoError("pretrained weights not found: " + spec.weights_path.string());
  Checkpoint ck = load_checkpoint(spec.weights_path);
  if (ck.scorer.spec().backbone != spec.backbone || ck.scorer.spec().input_size != spec.input_size)
    throw IoError("weights file " + spec.weights_path.string() + " holds a " + to_string(ck.scorer.spec().backbone) +
                  " backbone at input " + std::to_string(ck.scorer.spec().input_size) + ", not the requested one");
  ck.scorer.spec_.seed = spec.seed;
  ck.scorer.spec_.weights_path = spec.weights_path;
  ck.scorer.set_frozen_layer_count(spec.frozen_layer_count);
  return std::move(ck.scorer);
}

void save_checkpoint(const std::filesystem::path& path, const PatchScorer& scorer, const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["spec"] = to_json(scorer.spec());
  nlohmann::json layers = nlohmann::json::array();
  std::size_t total = 0;
  for (const LayerInfo& l : scorer.weight_layers()) {
    layers.push_back({{"kind", l.kind}, {"parameters", l.parameter_count}});
    total += l.parameter_count;
  }
  header["layers"] = layers;
  header["metadata"] = metadata;
  const std::string text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kCheckpointVersion);
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_u64(out, total);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    static_assert(std::endian::native == std::endian::little, "checkpoint blob assumes little-endian floats");
    for (const nn::Parameter* p : scorer.all_parameters()) {
      out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(float)));
      h = fnv1a(p->value.data(), p->value.size() * sizeof(float), h);
    }
    write_u64(out, h);
    if (!out) throw IoError("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint file: " + path.string());
  const auto version = static_cast<std::uint32_t>(read_uint(in, 4, path));
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string() +
                  " (expected " + std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t len = read_uint(in, 8, path);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("truncated checkpoint: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  if (header.value("format_version", 0u) != kCheckpointVersion)
    throw IoError("checkpoint header version mismatch in " + path.string());

  ScorerSpec spec = scorer_spec_from_json(header.at("spec"));
  const int frozen = spec.frozen_layer_count;
  spec.frozen_layer_count = 0;
  PatchScorer scorer = PatchScorer::randomly_initialized(spec);
  const std::uint64_t count = read_uint(in, 8, path);
  std::size_t expected = 0;
  for (const nn::Parameter* p : scorer.all_parameters()) expected += p->value.size();
  if (count != expected)
    throw IoError("checkpoint " + path.string() + " holds " + std::to_string(count) + " parameters, architecture needs " +
                  std::to_string(expected));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (nn::Parameter* p : scorer.all_parameters()) {
    if (!in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(float))))
      throw IoError("truncated checkpoint parameters: " + path.string());
    h = fnv1a(p->value.data(), p->value.size() * sizeof(float), h);
  }
  if (read_uint(in, 8, path) != h) throw IoError("checkpoint checksum mismatch: " + path.string());
  scorer.set_frozen_layer_count(frozen);
  return {std::move(scorer), header.value("metadata", nlohmann::json::object())};
}

unsigned worker_count() {
  if (const char* env = std::getenv("PATCHMIL_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace patchmil
