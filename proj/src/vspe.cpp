#include "embshift/vspe.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace embshift::vspe {

namespace {

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

} // namespace

std::vector<std::uint8_t> encode(const Tensor &t) {
  std::vector<std::uint8_t> out;
  out.reserve(6 + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw FormatError("dimension too large for VSPE: " + std::to_string(d));
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : t.data()) {
    // Narrowing conversion rounds to nearest-even under the default FP env.
    const auto f = static_cast<float>(v);
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Tensor decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not a VSPE file (bad magic)");
  if (bytes[4] != kVersion)
    throw FormatError("unsupported VSPE version " + std::to_string(bytes[4]));
  const std::size_t rank = bytes[5];
  if (rank < 1 || rank > kMaxRank)
    throw FormatError("VSPE rank must be 1..4, got " + std::to_string(rank));
  const std::size_t header = 6 + 4 * rank;
  if (bytes.size() < header)
    throw FormatError("truncated VSPE header");

  Shape shape(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(bytes, 6 + 4 * i);
    if (shape[i] == 0)
      throw FormatError("VSPE dimension of size 0");
    count *= shape[i];
  }
  if (bytes.size() != header + 4 * count)
    throw FormatError("VSPE payload is " + std::to_string(bytes.size() - header) +
                      " bytes, expected " + std::to_string(4 * count));

  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i)
    data[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, header + 4 * i)));
  return Tensor(std::move(shape), std::move(data));
}

void write(std::ostream &out, const Tensor &t) {
  const auto bytes = encode(t);
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw std::runtime_error("VSPE write failed");
}

Tensor read(std::istream &in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

void save(const std::filesystem::path &path, const Tensor &t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  write(out, t);
}

Tensor load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path.string());
  return read(in);
}

} // namespace embshift::vspe
