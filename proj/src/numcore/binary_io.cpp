#include "osscl/numcore/binary_io.hpp"

#include <array>
#include <bit>
#include <vector>

#include "osscl/numcore/error.hpp"

namespace osscl::numcore::io {

namespace {

template <std::size_t N, class U>
void put(std::ostream& out, U v) {
    std::array<char, N> bytes{};
    for (std::size_t i = 0; i < N; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes.data(), N);
    if (!out) throw Error("write failed");
}

template <std::size_t N, class U>
U get(std::istream& in) {
    std::array<unsigned char, N> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), N);
    if (in.gcount() != static_cast<std::streamsize>(N)) throw FormatError("unexpected end of file");
    U v = 0;
    for (std::size_t i = 0; i < N; ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put<4>(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put<8>(out, v); }
void write_f32(std::ostream& out, float v) { put<4>(out, std::bit_cast<std::uint32_t>(v)); }
void write_i32(std::ostream& out, std::int32_t v) { put<4>(out, static_cast<std::uint32_t>(v)); }

void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (!out) throw Error("write failed");
}

std::uint32_t read_u32(std::istream& in) { return get<4, std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get<8, std::uint64_t>(in); }
float read_f32(std::istream& in) { return std::bit_cast<float>(get<4, std::uint32_t>(in)); }
std::int32_t read_i32(std::istream& in) { return static_cast<std::int32_t>(get<4, std::uint32_t>(in)); }

void expect_magic(std::istream& in, std::string_view magic, const std::string& what) {
    std::vector<char> buf(magic.size());
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()) || std::string_view(buf.data(), buf.size()) != magic)
        throw FormatError(what + ": bad magic, expected '" + std::string(magic) + "'");
}

}  // namespace osscl::numcore::io
