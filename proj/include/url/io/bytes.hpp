#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "url/errors.hpp"

namespace url::io {

// Raw-byte serialization shared by the binary file formats (checkpoints,
// reference indexes). Fixed-width values are memcpy'd verbatim, so a file
// written on one machine reads back bit-identically on any machine with the
// same endianness.

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

// Bounds-checked sequential reader over an in-memory file image. Every read
// past the end raises DataError mentioning `what` (e.g. "checkpoint <path>").
class ByteReader {
 public:
  ByteReader(const std::string& data, std::string what)
      : data_(data), what_(std::move(what)) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_str(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void get_doubles(double* dst, size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(size_t n) {
    if (data_.size() - pos_ < n) {
      throw DataError(what_ + ": truncated");
    }
  }

  const std::string& data_;
  std::string what_;
  size_t pos_ = 0;
};

}  // namespace url::io
