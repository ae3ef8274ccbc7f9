#include "lulc/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lulc {

namespace fs = std::filesystem;

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::IoFailure, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

void append_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t read_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> encode_blobs(const std::vector<Blob>& blobs) {
  std::vector<std::uint8_t> out;
  for (const auto& b : blobs) {
    for (float f : b.tensor.values()) append_le(out, std::bit_cast<std::uint32_t>(f), 4);
  }
  return out;
}

nlohmann::json shape_json(const Shape& s) { return {s.n, s.c, s.h, s.w}; }

}  // namespace

Checkpoint make_checkpoint(const Fcn8Model& model, const CheckpointManifest& manifest) {
  Checkpoint cp;
  cp.manifest = manifest;
  cp.manifest.architecture = model.architecture_name();
  cp.manifest.width_multiplier = model.width_multiplier();
  for (const auto& l : model.layers()) {
    if (!l.has_params()) continue;
    cp.blobs.push_back({l.name + ".weight", l.weight});
    cp.blobs.push_back({l.name + ".bias", l.bias});
  }
  return cp;
}

std::size_t load_matching_weights(Fcn8Model& model, const Checkpoint& cp) {
  std::size_t loaded = 0;
  for (auto& l : model.layers()) {
    if (!l.has_params()) continue;
    for (const auto& b : cp.blobs) {
      Tensor<float>* dst = nullptr;
      if (b.name == l.name + ".weight") dst = &l.weight;
      if (b.name == l.name + ".bias") dst = &l.bias;
      if (dst && dst->shape() == b.tensor.shape()) {
        *dst = b.tensor;
        ++loaded;
      }
    }
    ++l.version;
  }
  return loaded;
}

Fcn8Model model_from_checkpoint(const Checkpoint& cp) {
  Fcn8Model model = Fcn8Model::architecture(cp.manifest.width_multiplier);
  std::size_t expected = 0;
  for (const auto& l : model.layers()) expected += l.has_params() ? 2 : 0;
  const std::size_t loaded = load_matching_weights(model, cp);
  if (loaded != expected || cp.blobs.size() != expected) {
    throw Error(ErrorKind::ShapeMismatch, "checkpoint blobs do not describe a " +
                                              model.architecture_name() + " model (" +
                                              std::to_string(loaded) + " of " +
                                              std::to_string(expected) + " tensors matched)");
  }
  return model;
}

std::optional<std::string> class_mismatch_warning(const Checkpoint& cp, LulcClass expected) {
  if (cp.manifest.target_class == expected) return std::nullopt;
  return "checkpoint was trained for class " + std::string(to_string(cp.manifest.target_class)) +
         ", evaluating it for " + std::string(to_string(expected));
}

void save_checkpoint(const Checkpoint& cp, const fs::path& path) {
  const std::vector<std::uint8_t> payload = encode_blobs(cp.blobs);
  const CheckpointManifest& m = cp.manifest;
  nlohmann::json blobs = nlohmann::json::array();
  for (const auto& b : cp.blobs) {
    blobs.push_back({{"name", b.name}, {"shape", shape_json(b.tensor.shape())},
                     {"bytes", b.tensor.size() * 4}});
  }
  const nlohmann::json manifest = {
      {"format", "fcn8-checkpoint"},
      {"architecture", m.architecture},
      {"width_multiplier", m.width_multiplier},
      {"class", to_string(m.target_class)},
      {"mode", to_string(m.mode)},
      {"epoch", m.epoch},
      {"epochs", m.epochs},
      {"learning_rate", m.learning_rate},
      {"batch_size", m.batch_size},
      {"seed", m.seed},
      {"metrics", m.metrics},
      {"blobs", blobs},
      {"blob_sha256", sha256_hex(payload)},
  };
  const std::string text = manifest.dump(2);

  std::vector<std::uint8_t> header(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  append_le(header, kCheckpointVersion, 2);
  append_le(header, text.size(), 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorKind::IoFailure, path.string() + ": write failed");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, path.string() + ": cannot open checkpoint");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = 8 + 2 + 4;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw Error(ErrorKind::IoFailure, path.string() + ": not an FCN8CKPT file");
  }
  const auto version = static_cast<std::uint16_t>(read_le(bytes.data() + 8, 2));
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::SchemaVersionUnknown,
                path.string() + ": checkpoint version " + std::to_string(version));
  }
  const std::size_t manifest_len = read_le(bytes.data() + 10, 4);
  if (bytes.size() < kHeader + manifest_len) {
    throw Error(ErrorKind::HashMismatch, path.string() + ": truncated manifest");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + kHeader,
                                     bytes.begin() + static_cast<std::ptrdiff_t>(kHeader + manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoFailure, path.string() + ": malformed manifest: " + e.what());
  }

  Checkpoint cp;
  try {
    CheckpointManifest& m = cp.manifest;
    m.architecture = manifest.at("architecture").get<std::string>();
    m.width_multiplier = manifest.at("width_multiplier").get<double>();
    const auto cls = parse_class(manifest.at("class").get<std::string>());
    const auto mode = parse_mode(manifest.at("mode").get<std::string>());
    if (!cls || !mode) throw Error(ErrorKind::IoFailure, path.string() + ": bad class or mode");
    m.target_class = *cls;
    m.mode = *mode;
    m.epoch = manifest.at("epoch").get<int>();
    m.epochs = manifest.at("epochs").get<int>();
    m.learning_rate = manifest.at("learning_rate").get<double>();
    m.batch_size = manifest.at("batch_size").get<int>();
    m.seed = manifest.at("seed").get<std::uint64_t>();
    m.metrics = manifest.value("metrics", nlohmann::json::object());

    const std::vector<std::uint8_t> payload(bytes.begin() + static_cast<std::ptrdiff_t>(kHeader + manifest_len),
                                            bytes.end());
    if (sha256_hex(payload) != manifest.at("blob_sha256").get<std::string>()) {
      throw Error(ErrorKind::HashMismatch, path.string() + ": blob hash does not match manifest");
    }
    std::size_t offset = 0;
    for (const auto& b : manifest.at("blobs")) {
      const auto dims = b.at("shape").get<std::vector<std::size_t>>();
      if (dims.size() != 4) throw Error(ErrorKind::IoFailure, path.string() + ": bad blob shape");
      const Shape shape{dims[0], dims[1], dims[2], dims[3]};
      const std::size_t nbytes = b.at("bytes").get<std::size_t>();
      if (nbytes != shape.size() * 4 || offset + nbytes > payload.size()) {
        throw Error(ErrorKind::HashMismatch, path.string() + ": blob lengths disagree with file");
      }
      std::vector<float> values(shape.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(read_le(&payload[offset + i * 4], 4)));
      }
      offset += nbytes;
      cp.blobs.push_back({b.at("name").get<std::string>(), Tensor<float>(shape, std::move(values))});
    }
    if (offset != payload.size()) {
      throw Error(ErrorKind::HashMismatch, path.string() + ": trailing bytes after blobs");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoFailure, path.string() + ": malformed manifest: " + e.what());
  }
  return cp;
}

}  // namespace lulc
