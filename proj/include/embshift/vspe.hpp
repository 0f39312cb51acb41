#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "embshift/tensor.hpp"

namespace embshift::vspe {

// Layout: "VSPE", version 0x01, rank byte (1..4), rank x u32 LE dims,
// then product(dims) f32 LE values, row-major.

inline constexpr char kMagic[4] = {'V', 'S', 'P', 'E'};
inline constexpr std::uint8_t kVersion = 0x01;

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode(const Tensor &t);
Tensor decode(std::span<const std::uint8_t> bytes);

void write(std::ostream &out, const Tensor &t);
Tensor read(std::istream &in);

void save(const std::filesystem::path &path, const Tensor &t);
Tensor load(const std::filesystem::path &path);

} // namespace embshift::vspe
