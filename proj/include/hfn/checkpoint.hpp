#pragma once

// Checkpoint file layout:
//
//   HFN1\n
//   tensors <count>\n
//   <name> f32 <d0>,<d1>,...\n        one manifest line per tensor
//   <raw little-endian float32 payloads, manifest order>
//
// Loading checks every name and shape against the layer table and rejects the
// file without returning a partial model.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfn/network.hpp"

namespace hfn {

/// Malformed, truncated or unreadable checkpoint.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[] = "HFN1";

namespace detail {

inline std::string shape_field(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out;
}

inline Shape parse_shape_field(const std::string& field) {
  Shape s;
  std::stringstream ss(field);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw FormatError("checkpoint: bad shape field '" + field + "'");
    }
    s.push_back(std::stoul(part));
  }
  if (s.empty()) throw FormatError("checkpoint: empty shape field");
  return s;
}

inline std::string read_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint: truncated manifest");
  return line;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const ModelParams<float>& params) {
  params.validate();
  const auto tensors = params.tensors();
  os << kCheckpointMagic << '\n' << "tensors " << tensors.size() << '\n';
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    os << ModelParams<float>::tensor_name(i) << " f32 " << detail::shape_field(tensors[i]->shape()) << '\n';
  }
  for (const auto* t : tensors) {
    for (float v : t->data()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                             static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
      os.write(bytes, 4);
    }
  }
}

inline ModelParams<float> read_checkpoint(std::istream& in) {
  if (detail::read_line(in) != kCheckpointMagic) throw FormatError("checkpoint: bad magic (expected HFN1)");
  const std::string count_line = detail::read_line(in);
  std::size_t count = 0;
  {
    std::istringstream ss(count_line);
    std::string word;
    if (!(ss >> word >> count) || word != "tensors") throw FormatError("checkpoint: bad tensor count line");
  }
  const std::size_t expected = 2 * kLayerCount;
  if (count != expected) {
    throw SchemaError("checkpoint: holds " + std::to_string(count) + " tensors, expected " + std::to_string(expected));
  }

  std::map<std::string, std::size_t> slot_of;
  for (std::size_t i = 0; i < expected; ++i) slot_of[ModelParams<float>::tensor_name(i)] = i;

  struct Entry {
    std::size_t slot;
    Shape shape;
  };
  std::vector<Entry> manifest;
  std::vector<bool> seen(expected, false);
  ModelParams<float> params = ModelParams<float>::zeros();
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream ss(detail::read_line(in));
    std::string name, dtype, shape_text;
    if (!(ss >> name >> dtype >> shape_text)) throw FormatError("checkpoint: malformed manifest line " + std::to_string(i + 1));
    if (dtype != "f32") throw FormatError("checkpoint: " + name + " has unsupported dtype " + dtype);
    const auto it = slot_of.find(name);
    if (it == slot_of.end()) throw SchemaError("checkpoint: unknown tensor " + name);
    if (seen[it->second]) throw SchemaError("checkpoint: duplicate tensor " + name);
    seen[it->second] = true;
    const Shape shape = detail::parse_shape_field(shape_text);
    const Shape& want = tensors[it->second]->shape();
    if (shape != want) {
      const LayerSpec& spec = kLayerTable[it->second / 2];
      throw SchemaError("checkpoint: " + name + " has shape " + to_string(shape) + ", expected " + to_string(want) +
                        " (" + std::to_string(spec.in_channels) + "->" + std::to_string(spec.out_channels) +
                        " channels, kernel " + std::to_string(spec.kernel) + ")");
    }
    manifest.push_back({it->second, shape});
  }

  for (const auto& e : manifest) {
    Tensor<float>& t = *tensors[e.slot];
    std::vector<char> raw(t.size() * 4);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
      throw FormatError("checkpoint: truncated payload for " + ModelParams<float>::tensor_name(e.slot));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(raw.data() + 4 * i);
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
      t[i] = std::bit_cast<float>(bits);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes after payload");
  return params;
}

inline void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path.string() + ": cannot open for writing");
  write_checkpoint(os, params);
  if (!os) throw FormatError(path.string() + ": write failed");
}

inline ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open checkpoint");
  return read_checkpoint(in);
}

}  // namespace hfn
