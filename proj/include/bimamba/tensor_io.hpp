// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Binary layout (little-endian): u32 rank, u32 extent x rank, f64 payload.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bimamba/tensor.hpp"

namespace bimamba {

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// One JSON object per line: {"shape":[..],"data":[..]}.
std::string tensor_to_jsonl(const Tensor& t);
Tensor tensor_from_jsonl(const std::string& line);

}  // namespace bimamba
