// Copyright 2026 The dpalm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPALM_IO_H_
#define DPALM_IO_H_

// File formats for datasets and weight vectors.
//
// Dataset CSV: header "f0,...,f{F-1},label", then one record per line.
// Dataset snapshot: "DPALMDS1", u64 count, u64 feature_dim, u64 num_classes,
//   then per record F float64 features and a u64 label.
// Weight file: three text lines "dpalm-weights v1", "shape_tag <tag>",
//   "count <n>", followed by n float64 values.
// All binary numbers are little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dpalm/dataset.h"
#include "dpalm/weights.h"

namespace dpalm {

namespace io_internal {

inline std::ofstream OpenForWrite(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::ifstream OpenForRead(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return in;
}

inline void Finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("error writing '" + path.string() + "'");
}

template <class T>
void WriteLE(std::ostream& out, T value) {
  static_assert(sizeof(T) == 8);
  uint64_t bits;
  std::memcpy(&bits, &value, 8);
  std::array<char, 8> bytes;
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes.data(), 8);
}

template <class T>
T ReadLE(std::istream& in) {
  static_assert(sizeof(T) == 8);
  std::array<unsigned char, 8> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 8)) throw std::runtime_error("unexpected end of file");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(bytes[static_cast<std::size_t>(i)]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, 8);
  return value;
}

// Shortest text that parses back to the same double.
inline std::string FormatDouble(double v) {
  std::array<char, 32> buf;
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

inline double ParseDouble(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::runtime_error("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::size_t ParseCount(std::string_view s) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::runtime_error("not a nonnegative integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> SplitCsv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view StripCr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

constexpr char kDatasetMagic[8] = {'D', 'P', 'A', 'L', 'M', 'D', 'S', '1'};

}  // namespace io_internal

inline void SaveDatasetCsv(const Dataset& d, const std::filesystem::path& path) {
  d.Validate();
  auto out = io_internal::OpenForWrite(path, false);
  for (std::size_t f = 0; f < d.feature_dim; ++f) out << 'f' << f << ',';
  out << "label\n";
  for (const Record& r : d.records) {
    for (double v : r.features) out << io_internal::FormatDouble(v) << ',';
    out << r.label << '\n';
  }
  io_internal::Finish(out, path);
}

// num_classes = 0 infers the class count as the largest label plus one.
inline Dataset LoadDatasetCsv(const std::filesystem::path& path, std::size_t num_classes = 0) {
  auto in = io_internal::OpenForRead(path, false);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path.string() + "' is empty");
  const auto header = io_internal::SplitCsv(io_internal::StripCr(line));
  if (header.size() < 2 || header.back() != "label") {
    throw std::runtime_error("'" + path.string() + "': header must list feature columns then 'label'");
  }
  Dataset d{{}, header.size() - 1, 0};
  std::size_t max_label = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = io_internal::StripCr(line);
    if (row.empty()) continue;
    const auto cells = io_internal::SplitCsv(row);
    if (cells.size() != header.size()) {
      throw std::runtime_error("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " columns");
    }
    Record r{std::vector<double>(d.feature_dim), io_internal::ParseCount(cells.back())};
    for (std::size_t f = 0; f < d.feature_dim; ++f) r.features[f] = io_internal::ParseDouble(cells[f]);
    max_label = std::max(max_label, r.label);
    d.records.push_back(std::move(r));
  }
  d.num_classes = num_classes != 0 ? num_classes : max_label + 1;
  d.Validate();
  return d;
}

inline void SaveDatasetSnapshot(const Dataset& d, const std::filesystem::path& path) {
  d.Validate();
  auto out = io_internal::OpenForWrite(path, true);
  out.write(io_internal::kDatasetMagic, 8);
  io_internal::WriteLE<uint64_t>(out, d.size());
  io_internal::WriteLE<uint64_t>(out, d.feature_dim);
  io_internal::WriteLE<uint64_t>(out, d.num_classes);
  for (const Record& r : d.records) {
    for (double v : r.features) io_internal::WriteLE<double>(out, v);
    io_internal::WriteLE<uint64_t>(out, r.label);
  }
  io_internal::Finish(out, path);
}

inline Dataset LoadDatasetSnapshot(const std::filesystem::path& path) {
  auto in = io_internal::OpenForRead(path, true);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, io_internal::kDatasetMagic, 8) != 0) {
    throw std::runtime_error("'" + path.string() + "' is not a dataset snapshot");
  }
  const auto n = io_internal::ReadLE<uint64_t>(in);
  Dataset d{{}, io_internal::ReadLE<uint64_t>(in), io_internal::ReadLE<uint64_t>(in)};
  if (d.feature_dim == 0 || d.feature_dim > (1u << 24)) throw std::runtime_error("implausible feature_dim in snapshot");
  d.records.reserve(static_cast<std::size_t>(std::min<uint64_t>(n, 1u << 20)));
  for (uint64_t i = 0; i < n; ++i) {
    Record r{std::vector<double>(d.feature_dim), 0};
    for (double& v : r.features) v = io_internal::ReadLE<double>(in);
    r.label = io_internal::ReadLE<uint64_t>(in);
    d.records.push_back(std::move(r));
  }
  d.Validate();
  return d;
}

inline void SaveWeights(const WeightVector& w, const std::filesystem::path& path) {
  if (w.shape_tag.empty() || w.shape_tag.find_first_of(" \n\r") != std::string::npos) {
    throw std::invalid_argument("shape tag must be a non-empty token");
  }
  auto out = io_internal::OpenForWrite(path, true);
  out << "dpalm-weights v1\nshape_tag " << w.shape_tag << "\ncount " << w.size() << '\n';
  for (double v : w.values) io_internal::WriteLE<double>(out, v);
  io_internal::Finish(out, path);
}

inline WeightVector LoadWeights(const std::filesystem::path& path) {
  auto in = io_internal::OpenForRead(path, true);
  std::string magic, tag_line, count_line;
  if (!std::getline(in, magic) || magic != "dpalm-weights v1") {
    throw std::runtime_error("'" + path.string() + "' is not a weight file");
  }
  if (!std::getline(in, tag_line) || !tag_line.starts_with("shape_tag ") || !std::getline(in, count_line) ||
      !count_line.starts_with("count ")) {
    throw std::runtime_error("'" + path.string() + "': malformed weight header");
  }
  WeightVector w;
  w.shape_tag = tag_line.substr(10);
  const std::size_t n = io_internal::ParseCount(std::string_view(count_line).substr(6));
  w.values.resize(n);
  for (double& v : w.values) v = io_internal::ReadLE<double>(in);
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("'" + path.string() + "': trailing bytes");
  return w;
}

}  // namespace dpalm

#endif  // DPALM_IO_H_
