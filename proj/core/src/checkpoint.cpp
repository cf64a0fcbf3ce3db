#include "fds/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "fds/error.hpp"

namespace fds {
namespace {

using nlohmann::json;
constexpr char kMagic[8] = {'F', 'D', 'S', 'C', 'K', 'P', 'T', '1'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

json config_to_json(const ModelConfig& c) {
  return {{"encoder_depth_channels", c.encoder_depth_channels},
          {"encoder_blocks", c.encoder_blocks},
          {"decoder_channels", c.decoder_channels},
          {"input_resolution", c.input_resolution},
          {"backbone_pretrained", c.backbone_pretrained}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.encoder_depth_channels = j.at("encoder_depth_channels").get<std::vector<int>>();
  c.encoder_blocks = j.at("encoder_blocks").get<std::vector<int>>();
  c.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
  c.input_resolution = j.at("input_resolution").get<int>();
  c.backbone_pretrained = j.at("backbone_pretrained").get<bool>();
  return c;
}

}  // namespace

std::string model_config_json(const ModelConfig& config) { return config_to_json(config).dump(); }

void save_checkpoint(const std::filesystem::path& path, const SegmentationNet& model,
                     std::uint64_t training_seed) {
  json header;
  header["format_version"] = kFormatVersion;
  header["model_config"] = config_to_json(model.config());
  header["init_seed"] = model.init_seed();
  header["training_seed"] = training_seed;
  std::vector<const double*> blobs;
  std::vector<std::size_t> sizes;
  std::size_t offset = 0;
  json entries = json::array();
  for (const auto& p : model.parameters()) {
    const Tensor& t = p.var.value();
    entries.push_back({{"name", p.name}, {"kind", "param"}, {"shape", t.shape()}, {"offset", offset}});
    blobs.push_back(t.data());
    sizes.push_back(t.size());
    offset += t.size();
  }
  for (const auto& b : model.buffers()) {
    const std::size_t n = b.buffers->running_mean.size();
    entries.push_back({{"name", b.name}, {"kind", "bn"}, {"channels", n}, {"offset", offset}});
    blobs.push_back(b.buffers->running_mean.data());
    sizes.push_back(n);
    blobs.push_back(b.buffers->running_var.data());
    sizes.push_back(n);
    offset += 2 * n;
  }
  header["entries"] = std::move(entries);
  header["payload_doubles"] = offset;

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    out.write(reinterpret_cast<const char*>(blobs[i]), static_cast<std::streamsize>(sizes[i] * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  if (header.value("format_version", 0) != kFormatVersion) {
    throw DataError("unsupported checkpoint format version in " + path.string());
  }
  const std::size_t total = header.at("payload_doubles").get<std::size_t>();
  std::vector<double> payload(total);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total * sizeof(double)));
  if (!in) throw DataError("truncated checkpoint payload in " + path.string());

  CheckpointContents c;
  c.config = config_from_json(header.at("model_config"));
  c.init_seed = header.at("init_seed").get<std::uint64_t>();
  c.training_seed = header.at("training_seed").get<std::uint64_t>();
  for (const auto& e : header.at("entries")) {
    const std::size_t off = e.at("offset").get<std::size_t>();
    const std::string name = e.at("name").get<std::string>();
    if (e.at("kind") == "param") {
      const auto shape = e.at("shape").get<std::array<int, 4>>();
      Tensor t(shape[0], shape[1], shape[2], shape[3]);
      if (off + t.size() > total) throw DataError("checkpoint entry out of range: " + name);
      std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(off), t.size(), t.data());
      c.tensors.emplace(name, std::move(t));
    } else {
      const std::size_t n = e.at("channels").get<std::size_t>();
      if (off + 2 * n > total) throw DataError("checkpoint entry out of range: " + name);
      ag::BatchNormBuffers b(static_cast<int>(n));
      std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(off), n, b.running_mean.begin());
      std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(off + n), n, b.running_var.begin());
      c.buffers.emplace(name, std::move(b));
    }
  }
  return c;
}

void restore_state(SegmentationNet& model, const CheckpointContents& contents) {
  if (contents.tensors.size() != model.parameters().size() ||
      contents.buffers.size() != model.buffers().size()) {
    throw DataError("checkpoint does not match the model architecture");
  }
  for (auto& p : model.parameters()) {
    const auto it = contents.tensors.find(p.name);
    if (it == contents.tensors.end() || !it->second.same_shape(p.var.value())) {
      throw DataError("checkpoint/model mismatch at parameter " + p.name);
    }
    p.var.mutable_value() = it->second;
  }
  for (auto& b : model.buffers()) {
    const auto it = contents.buffers.find(b.name);
    if (it == contents.buffers.end() ||
        it->second.running_mean.size() != b.buffers->running_mean.size()) {
      throw DataError("checkpoint/model mismatch at buffer " + b.name);
    }
    *b.buffers = it->second;
  }
}

std::unique_ptr<SegmentationNet> load_checkpoint(const std::filesystem::path& path,
                                                 std::uint64_t* training_seed) {
  const CheckpointContents contents = read_checkpoint(path);
  auto model = std::make_unique<SegmentationNet>(contents.config, contents.init_seed,
                                                 /*load_pretrained=*/false);
  restore_state(*model, contents);
  if (training_seed) *training_seed = contents.training_seed;
  return model;
}

}  // namespace fds
