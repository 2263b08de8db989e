// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bimamba/error.hpp"

namespace bimamba {
namespace {

static_assert(std::endian::native == std::endian::little, "tensor serialization assumes a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  const std::size_t pos = out.size();
  out.resize(pos + sizeof(T));
  std::memcpy(out.data() + pos, &value, sizeof(T));
}

template <class T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("truncated tensor payload");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * t.rank() + 8 * t.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  for (double v : t.data()) put<double>(out, v);
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  const auto rank = take<std::uint32_t>(bytes, pos);
  if (rank > 16) throw IoError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = take<std::uint32_t>(bytes, pos);
  const std::size_t n = shape_size(shape);
  if (bytes.size() - pos != n * sizeof(double)) throw IoError("tensor payload length does not match header");
  std::vector<double> data(n);
  std::memcpy(data.data(), bytes.data() + pos, n * sizeof(double));
  try {
    return Tensor(std::move(shape), std::move(data));
  } catch (const Error& e) {
    throw IoError(std::string("invalid tensor: ") + e.what());
  }
}

void write_tensor(std::ostream& os, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed to write tensor");
}

Tensor read_tensor(std::istream& is) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_tensor(is);
}

std::string tensor_to_jsonl(const Tensor& t) {
  nlohmann::json j;
  j["shape"] = t.shape();
  j["data"] = t.values();
  return j.dump();
}

Tensor tensor_from_jsonl(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed tensor json: ") + e.what());
  }
}

}  // namespace bimamba
