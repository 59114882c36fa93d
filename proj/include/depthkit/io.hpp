#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "depthkit/param.hpp"
#include "depthkit/tensor.hpp"

namespace depthkit {

struct BadMagic : std::runtime_error {
    explicit BadMagic(const std::string& what) : std::runtime_error(what) {}
};
struct TruncatedFile : std::runtime_error {
    explicit TruncatedFile(const std::string& what) : std::runtime_error(what) {}
};
struct UnknownDtype : std::runtime_error {
    explicit UnknownDtype(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor record layout, all integers little-endian:
///   "HQT1" | dtype u8 (0 = f32, 1 = f64) | ndim u8 | 2 zero bytes |
///   ndim x u32 extents | row-major payload.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);

/// Decodes one record starting at `data`. Trailing bytes beyond the record
/// are permitted; `consumed`, when non-null, receives the record length.
Tensor decode_tensor(const std::uint8_t* data, std::size_t size, std::size_t* consumed = nullptr);

/// Whole-file codec; the file must contain exactly one record.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

/// Checkpoint layout: u32 index length | JSON index | concatenated tensor
/// records. The index maps each param name to its record offset (relative to
/// the first record byte) and length.
void save_checkpoint(const std::string& path, const ParamRegistry& reg);

/// Restores values into the registry's existing params by name; every param
/// must be present with matching shape and dtype.
void load_checkpoint(const std::string& path, ParamRegistry& reg);

}  // namespace depthkit
