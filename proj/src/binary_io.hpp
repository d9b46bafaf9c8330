#pragma once

// Little/big-endian helpers shared by the binary file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "ccnn/error.hpp"

namespace ccnn::detail {

class ByteReader {
public:
  ByteReader(const std::filesystem::path &path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
      fail(ErrorKind::missing_input, "cannot open " + path_);
    bytes_.assign(std::istreambuf_iterator<char>(in), {});
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string &path() const { return path_; }

  void expect_magic(std::string_view magic) {
    need(magic.size());
    if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0)
      fail(ErrorKind::malformed_magic,
           path_ + ": expected magic \"" + std::string(magic) + "\"");
    pos_ += magic.size();
  }

  std::uint32_t u32_be() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_++]);
    return v;
  }

  std::uint32_t u32_le() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + i]);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64_le() {
    const std::uint64_t lo = u32_le();
    const std::uint64_t hi = u32_le();
    return lo | (hi << 32);
  }

  float f32_le() { return std::bit_cast<float>(u32_le()); }
  double f64_le() { return std::bit_cast<double>(u64_le()); }

  unsigned char byte() {
    need(1);
    return static_cast<unsigned char>(bytes_[pos_++]);
  }

  void need(std::size_t count) const {
    if (remaining() < count)
      fail(ErrorKind::truncated_file, path_ + ": file ends early");
  }

private:
  std::string path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

class ByteWriter {
public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

  void u32_be(std::uint32_t v) {
    for (int i = 3; i >= 0; --i)
      bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void u32_le(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void u64_le(std::uint64_t v) {
    u32_le(static_cast<std::uint32_t>(v));
    u32_le(static_cast<std::uint32_t>(v >> 32));
  }

  void f32_le(float v) { u32_le(std::bit_cast<std::uint32_t>(v)); }
  void f64_le(double v) { u64_le(std::bit_cast<std::uint64_t>(v)); }
  void byte(unsigned char b) { bytes_.push_back(static_cast<char>(b)); }

  void save(const std::filesystem::path &path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
      fail(ErrorKind::io_error, "cannot write " + path.string());
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out)
      fail(ErrorKind::io_error, "short write to " + path.string());
  }

private:
  std::vector<char> bytes_;
};

} // namespace ccnn::detail
