#include "edgeshield/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "edgeshield/hash.hpp"
#include "edgeshield/image_io.hpp"
#include "json.hpp"

namespace edgeshield {

namespace {

constexpr char kMagic[4] = {'E', 'D', 'G', 'S'};

static_assert(std::endian::native == std::endian::little, "payload writer assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

std::uint32_t crc(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Model<float>& model) {
  nlohmann::ordered_json header;
  header["architecture"] = model.architecture();
  const auto& in = model.input_shape();
  header["input"] = {in.channels, in.height, in.width};
  header["classes"] = model.num_classes();
  header["seed"] = model.seed();
  std::vector<float> payload;
  auto table = nlohmann::ordered_json::array();
  for (const auto& entry : model.state()) {
    table.push_back({{"name", entry.name},
                     {"shape", entry.tensor.shape()},
                     {"offset", payload.size()},
                     {"trainable", entry.trainable}});
    payload.insert(payload.end(), entry.tensor.data().begin(), entry.tensor.data().end());
  }
  header["tensors"] = table;
  header["count"] = payload.size();
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t at = out.size();
  out.resize(at + payload.size() * sizeof(float));
  std::memcpy(out.data() + at, payload.data(), payload.size() * sizeof(float));
  put_u32(out, crc(out));
  return out;
}

Model<float> decode_model(std::span<const std::uint8_t> bytes,
                          const std::optional<std::string>& expected_architecture) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError("not a model file (missing EDGS magic)");
  }
  if (bytes.size() < 16) throw ChecksumError("model file truncated");
  const std::size_t body = bytes.size() - 4;
  if (crc(bytes.first(body)) != get_u32(bytes, body)) {
    throw ChecksumError("model file checksum mismatch (corrupt or truncated)");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kModelFormatVersion) {
    throw VersionMismatchError("model format version " + std::to_string(version) + ", expected " +
                               std::to_string(kModelFormatVersion));
  }
  const std::size_t header_len = get_u32(bytes, 8);
  if (12 + header_len > body) throw ModelFormatError("header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("bad model header: ") + e.what());
  }
  try {
    const auto arch = header.at("architecture").get<std::string>();
    if (expected_architecture && *expected_architecture != arch) {
      throw ArchitectureMismatchError("model file holds '" + arch + "', expected '" +
                                      *expected_architecture + "'");
    }
    const auto in = header.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw ModelFormatError("input shape must have three entries");
    const std::size_t count = header.at("count").get<std::size_t>();
    const std::size_t payload_at = 12 + header_len;
    if (payload_at + count * sizeof(float) != body) throw ModelFormatError("payload size mismatch");
    std::vector<float> payload(count);
    std::memcpy(payload.data(), bytes.data() + payload_at, count * sizeof(float));

    Model<float> model = build_model<float>(arch, ImageShape{in[0], in[1], in[2]},
                                            header.at("classes").get<std::size_t>(),
                                            header.at("seed").get<std::uint64_t>());
    std::vector<NamedTensor<float>> state;
    for (const auto& t : header.at("tensors")) {
      const Shape shape = t.at("shape").get<Shape>();
      const std::size_t offset = t.at("offset").get<std::size_t>(), n = shape_numel(shape);
      if (offset + n > count) throw ModelFormatError("tensor table points past the payload");
      std::vector<float> values(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                                payload.begin() + static_cast<std::ptrdiff_t>(offset + n));
      state.push_back({t.at("name").get<std::string>(), Tensor(shape, std::move(values)),
                       t.at("trainable").get<bool>()});
    }
    if (state.size() != model.state().size()) throw ModelFormatError("tensor table does not match the architecture");
    model.load_state(state);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("bad model header: ") + e.what());
  } catch (const ModelError& e) {
    throw ModelFormatError(e.what());
  }
}

void save_model(const Model<float>& model, const std::filesystem::path& path) {
  const auto bytes = encode_model(model);
  atomic_write(path, std::span<const std::uint8_t>(bytes));
}

Model<float> load_model(const std::filesystem::path& path,
                        const std::optional<std::string>& expected_architecture) {
  const auto bytes = read_file(path);
  return decode_model(bytes, expected_architecture);
}

std::string file_checksum(const std::filesystem::path& path) {
  // Not CRC-32: a CRC over a file that ends in its own CRC is a constant.
  const auto bytes = read_file(path);
  return fnv1a64_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace edgeshield
