#include "jcapa/io.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <string>

#include "config_json.hpp"
#include "jcapa/error.hpp"

namespace jcapa::io {
namespace {

constexpr char kTensorMagic[4] = {'J', 'C', 'P', 'T'};
constexpr char kCheckpointMagic[4] = {'J', 'C', 'K', 'P'};
constexpr const char* kMetaEntry = "__meta__";

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t& offset) : bytes_(bytes), pos_(offset) {}

  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(std::string("truncated ") + what + ": expected " + std::to_string(n) +
                            " more bytes, got " + std::to_string(bytes_.size() - pos_),
                        pos_);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  void magic(const char (&expected)[4]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) {
      throw FormatError(std::string("bad magic, expected ") + std::string(expected, 4), pos_);
    }
    pos_ += 4;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t& pos_;
};

void put_header(std::vector<std::uint8_t>& out, DType dtype, const Shape& dims) {
  out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
  out.push_back(kFormatVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  if (dims.empty() || dims.size() > 255) throw ShapeError("JCPT supports ranks 1..255");
  out.push_back(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) {
    if (d <= 0 || d > 0xffffffffLL) throw ShapeError("JCPT dim out of range in " + shape_str(dims));
    put_u32(out, static_cast<std::uint32_t>(d));
  }
}

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& t) {
  std::vector<std::uint8_t> out;
  put_header(out, DType::kFloat32, t.dims());
  out.reserve(out.size() + t.data().size() * 4);
  for (float v : t.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
  }
  return out;
}

std::vector<std::uint8_t> encode(const LabelMap& m) {
  std::vector<std::uint8_t> out;
  put_header(out, DType::kUInt8, m.dims);
  out.insert(out.end(), m.data.begin(), m.data.end());
  return out;
}

Array decode(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  Reader r(bytes, offset);
  r.magic(kTensorMagic);
  const auto version_at = r.pos();
  const auto version = r.u8("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported JCPT version " + std::to_string(version), version_at);
  }
  const auto dtype_at = r.pos();
  const auto dtype = r.u8("dtype");
  if (dtype > 1) throw FormatError("unknown dtype " + std::to_string(dtype), dtype_at);
  const auto ndim_at = r.pos();
  const auto ndim = r.u8("ndim");
  if (ndim == 0) throw FormatError("ndim must be >= 1", ndim_at);

  Array a;
  a.dtype = static_cast<DType>(dtype);
  std::uint64_t count = 1;
  for (int i = 0; i < ndim; ++i) {
    const auto dim_at = r.pos();
    const auto d = r.u32("dims");
    if (d == 0) throw FormatError("zero-length dimension", dim_at);
    a.dims.push_back(d);
    count *= d;
    if (count > (1ULL << 40)) throw FormatError("implausible element count", dim_at);
  }
  const std::size_t width = a.dtype == DType::kFloat32 ? 4 : 1;
  auto payload = r.take(static_cast<std::size_t>(count) * width, "payload");
  if (a.dtype == DType::kFloat32) {
    a.f32.resize(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < a.f32.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[i * 4 + b]) << (8 * b);
      std::memcpy(&a.f32[i], &bits, 4);
    }
  } else {
    a.u8.assign(payload.begin(), payload.end());
  }
  return a;
}

Array decode(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  Array a = decode(bytes, offset);
  if (offset != bytes.size()) {
    throw FormatError(std::to_string(bytes.size() - offset) + " trailing bytes after tensor",
                      offset);
  }
  return a;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) { write_file(path, encode(t)); }

Tensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Array a = decode(bytes);
  if (a.dtype != DType::kFloat32) throw FormatError(path.string() + " is not a float32 tensor", 5);
  return Tensor(std::move(a.dims), std::move(a.f32));
}

void write_label_map(const std::filesystem::path& path, const LabelMap& m) {
  write_file(path, encode(m));
}

LabelMap read_label_map(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Array a = decode(bytes);
  if (a.dtype != DType::kUInt8) throw FormatError(path.string() + " is not a uint8 label map", 5);
  return LabelMap(std::move(a.dims), std::move(a.u8));
}

std::vector<std::uint8_t> encode_checkpoint(const ModelState& m) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  out.push_back(kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(m.params().size() + 1));

  auto put_entry = [&out](const std::string& name, const std::vector<std::uint8_t>& blob) {
    if (name.size() > 0xffff) throw ContractError("parameter name too long: " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.insert(out.end(), blob.begin(), blob.end());
  };

  detail::Json meta;
  meta["model"] = detail::to_json(m.config());
  meta["variant"] = std::string(variant_name(m.variant()));
  const std::string text = meta.dump();
  put_entry(kMetaEntry, encode(LabelMap({static_cast<std::int64_t>(text.size())},
                                        std::vector<std::uint8_t>(text.begin(), text.end()))));
  for (const auto& [name, t] : m.params()) put_entry(name, encode(t));
  return out;
}

ModelState decode_checkpoint(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  Reader r(bytes, offset);
  r.magic(kCheckpointMagic);
  const auto version_at = r.pos();
  const auto version = r.u8("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported JCKP version " + std::to_string(version), version_at);
  }
  const auto count = r.u32("entry count");

  std::map<std::string, Array> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u16("name length");
    const auto name_at = r.pos();
    auto raw = r.take(len, "name");
    std::string name(raw.begin(), raw.end());
    if (!entries.emplace(name, decode(bytes, offset)).second) {
      throw FormatError("duplicate entry " + name, name_at);
    }
  }
  if (offset != bytes.size()) {
    throw FormatError(std::to_string(bytes.size() - offset) + " trailing bytes after checkpoint",
                      offset);
  }

  auto meta_it = entries.find(kMetaEntry);
  if (meta_it == entries.end() || meta_it->second.dtype != DType::kUInt8) {
    throw CompatibilityError("checkpoint has no __meta__ entry");
  }
  NetworkConfig config;
  Variant variant;
  try {
    const auto& u8 = meta_it->second.u8;
    auto meta = detail::Json::parse(std::string(u8.begin(), u8.end()));
    config = detail::network_config_from_json(meta.at("model"));
    variant = parse_variant(meta.at("variant").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw CompatibilityError(std::string("unreadable checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw CompatibilityError(std::string("invalid checkpoint metadata: ") + e.what());
  }
  entries.erase(meta_it);

  ModelState m = ModelState::create(config, variant, 0);
  std::string missing, extra;
  for (const auto& [name, t] : m.params()) {
    if (!entries.count(name)) missing += (missing.empty() ? "" : ", ") + name;
  }
  for (const auto& [name, a] : entries) {
    if (!m.contains(name)) extra += (extra.empty() ? "" : ", ") + name;
  }
  if (!missing.empty() || !extra.empty()) {
    throw CompatibilityError("checkpoint parameters do not match the model; missing: [" + missing +
                             "] extra: [" + extra + "]");
  }
  for (const auto& [name, t] : m.params()) {
    const auto& a = entries.at(name);
    if (a.dtype != DType::kFloat32 || a.dims != t.dims()) {
      throw CompatibilityError("parameter " + name + " has shape " + shape_str(a.dims) +
                               ", model expects " + shape_str(t.dims()));
    }
    Tensor handle = t;
    std::copy(a.f32.begin(), a.f32.end(), handle.mutable_data().begin());
  }
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& m) {
  write_file(path, encode_checkpoint(m));
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

ModelState load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected,
                           Variant expected_variant) {
  ModelState m = load_checkpoint(path);
  if (!(m.config() == expected)) {
    throw CompatibilityError("checkpoint " + path.string() +
                             " was trained with a different model config: " +
                             detail::to_json(m.config()).dump());
  }
  if (m.variant() != expected_variant) {
    throw CompatibilityError("checkpoint " + path.string() + " holds variant '" +
                             std::string(variant_name(m.variant())) + "', expected '" +
                             std::string(variant_name(expected_variant)) + "'");
  }
  return m;
}

}  // namespace jcapa::io
