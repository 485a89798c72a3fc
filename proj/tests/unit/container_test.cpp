#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "ssmae/container.hpp"

using namespace ssmae;

namespace {

std::string hex(const std::vector<std::uint8_t>& b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto v : b) {
    s += digits[v >> 4];
    s += digits[v & 15];
  }
  return s;
}

std::filesystem::path temp(const char* name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(Container, KnownByteLayout) {
  StoredTensor t{"", DType::f64, {2, 3}, {0.5, -1, 2, 0, 1.25, 3}};
  EXPECT_EQ(hex(encode_block(t)),
            "4d535431"          // MST1
            "00" "02"           // f64, rank 2
            "02000000" "03000000"
            "000000000000e03f" "000000000000f0bf" "0000000000000040"
            "0000000000000000" "000000000000f43f" "0000000000000840");
}

TEST(Container, IntegerLayout) {
  StoredTensor t{"", DType::u16, {3}, {1, 258, 65535}};
  EXPECT_EQ(hex(encode_block(t)), "4d53543102010300000001000201ffff");
}

TEST(Container, RoundTripAllTypes) {
  std::vector<StoredTensor> in{
      {"a", DType::f64, {2, 2}, {0.1, -2e300, 3.5, 4}},
      {"b", DType::f32, {3}, {0.5, -1.25, 8}},
      {"c", DType::u16, {1, 2}, {7, 65535}},
      {"d", DType::u8, {}, {200}},
  };
  const auto path = temp("ssmae_roundtrip.mst");
  write_tensors(path, in);
  auto out = read_tensors(path);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].name, in[i].name);
    EXPECT_EQ(out[i].dtype, in[i].dtype);
    EXPECT_EQ(out[i].shape, in[i].shape);
    EXPECT_EQ(out[i].values, in[i].values);
  }
  EXPECT_EQ(find_entry(out, "c").values[1], 65535);
  EXPECT_ERRC(find_entry(out, "zz"), Errc::format);
  std::filesystem::remove(path);

  const auto single = temp("ssmae_single.mst");
  write_tensor(single, in[0]);
  EXPECT_EQ(read_tensor(single).values, in[0].values);
  std::filesystem::remove(single);
}

TEST(Container, CorruptMagic) {
  auto bytes = encode_block({"", DType::f64, {1}, {1.0}});
  bytes[0] = 'X';
  EXPECT_ERRC(decode_block(bytes), Errc::format);
}

TEST(Container, Truncated) {
  auto bytes = encode_block({"", DType::f64, {2}, {1.0, 2.0}});
  bytes.pop_back();
  EXPECT_ERRC(decode_block(bytes), Errc::format);
  bytes.push_back(0);
  bytes.push_back(0);
  EXPECT_ERRC(decode_block(bytes), Errc::format);  // trailing byte
}

TEST(Container, UnknownDtype) {
  auto bytes = encode_block({"", DType::u8, {1}, {1}});
  bytes[4] = 9;
  EXPECT_ERRC(decode_block(bytes), Errc::format);
}

TEST(Container, EncodeChecks) {
  EXPECT_ERRC(encode_block({"", DType::u8, {1}, {256}}), Errc::format);
  EXPECT_ERRC(encode_block({"", DType::u16, {1}, {1.5}}), Errc::format);
  EXPECT_ERRC(encode_block({"", DType::f64, {2}, {1}}), Errc::dimension);
  EXPECT_ERRC(encode_entries({{"x", DType::u8, {1}, {1}}, {"x", DType::u8, {1}, {1}}}), Errc::format);
}

TEST(Container, MissingFile) { EXPECT_ERRC(read_tensor(temp("ssmae_does_not_exist.mst")), Errc::io); }
