#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssmae/tensor.hpp"

namespace ssmae {

// Binary tensor container:
//   "MST1" | u8 dtype | u8 rank | rank × u32 LE extents | row-major LE payload
// Multi-tensor files: u16 count, then per entry u16 name length, name bytes, block.
enum class DType : std::uint8_t { f64 = 0, f32 = 1, u16 = 2, u8 = 3 };

std::size_t dtype_size(DType t);

struct StoredTensor {
  std::string name;
  DType dtype = DType::f64;
  Shape shape;
  std::vector<double> values;  // integer dtypes hold exact integers

  static StoredTensor of(std::string name, const Tensor& t, DType dtype = DType::f64);
  Tensor tensor() const { return Tensor(shape, values); }
};

std::vector<std::uint8_t> encode_block(const StoredTensor& t);
StoredTensor decode_block(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_entries(const std::vector<StoredTensor>& entries);
std::vector<StoredTensor> decode_entries(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const StoredTensor& t);
StoredTensor read_tensor(const std::filesystem::path& path);
void write_tensors(const std::filesystem::path& path, const std::vector<StoredTensor>& entries);
std::vector<StoredTensor> read_tensors(const std::filesystem::path& path);

const StoredTensor& find_entry(const std::vector<StoredTensor>& entries, const std::string& name);

}  // namespace ssmae
