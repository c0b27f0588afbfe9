#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace osscl::numcore::io {

// Little-endian primitives for the on-disk formats, independent of host order.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_i32(std::ostream& out, std::int32_t v);
void write_magic(std::ostream& out, std::string_view magic);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
std::int32_t read_i32(std::istream& in);
// Throws if the next bytes differ from `magic`.
void expect_magic(std::istream& in, std::string_view magic, const std::string& what);

}  // namespace osscl::numcore::io
