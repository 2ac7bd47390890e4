#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "ovfuse/scene.hpp"
#include "ovfuse/tensor.hpp"

namespace ovfuse::io {

// .ovt tensor file: 8-byte magic "OVFTENS1", then a UTF-8 JSON header
// {"byte_offset":..,"dtype":"f32"|"u8"|"i32","shape":[..]} space-padded so
// the payload starts at byte_offset (a multiple of 64), then the raw
// little-endian payload. Bytes are deterministic for identical input.

enum class Dtype { f32, u8, i32 };

using AnyTensor = std::variant<Tensor, TensorU8, TensorI32>;

AnyTensor read_tensor(const std::filesystem::path& path);
Tensor read_tensor_f32(const std::filesystem::path& path);
TensorU8 read_tensor_u8(const std::filesystem::path& path);
TensorI32 read_tensor_i32(const std::filesystem::path& path);

void write_tensor(const Tensor& t, const std::filesystem::path& path);
void write_tensor(const TensorU8& t, const std::filesystem::path& path);
void write_tensor(const TensorI32& t, const std::filesystem::path& path);

// Binary PGM (P5) masks, maxval <= 255, nonzero = foreground.
TensorU8 read_pgm(const std::filesystem::path& path);
void write_pgm(const TensorU8& mask, const std::filesystem::path& path);

// PLY point clouds / meshes: ascii or binary_little_endian, float x,y,z,
// optional integer "label" per vertex, optional faces. Other properties are
// skipped on read. Written form is binary_little_endian.
PointScene read_ply(const std::filesystem::path& path);
void write_ply(const PointScene& scene, const std::filesystem::path& path, bool binary = true);

}  // namespace ovfuse::io
