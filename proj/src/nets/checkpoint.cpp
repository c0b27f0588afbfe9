#include "osscl/nets/checkpoint.hpp"

#include <fstream>

#include "osscl/numcore/binary_io.hpp"

namespace osscl::nets {

namespace io = numcore::io;

namespace {
constexpr std::string_view kMagic = "OSSCLNET";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const EncoderProjector<float>& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
    const Architecture& arch = net.architecture();
    io::write_magic(out, kMagic);
    io::write_u32(out, kVersion);
    io::write_u32(out, arch.conv_stem ? 1 : 0);
    io::write_u32(out, static_cast<std::uint32_t>(arch.input_dim));
    io::write_u32(out, static_cast<std::uint32_t>(arch.encoder_widths.size()));
    for (std::size_t w : arch.encoder_widths) io::write_u32(out, static_cast<std::uint32_t>(w));
    io::write_u32(out, static_cast<std::uint32_t>(arch.projector_hidden));
    io::write_u32(out, static_cast<std::uint32_t>(arch.embed_dim));
    io::write_u32(out, static_cast<std::uint32_t>(net.parameters().size()));
    for (const auto& p : net.parameters()) {
        io::write_u32(out, static_cast<std::uint32_t>(p.size()));
        for (float v : p.values()) io::write_f32(out, v);
    }
}

EncoderProjector<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path.string());
    io::expect_magic(in, kMagic, "checkpoint " + path.string());
    if (io::read_u32(in) != kVersion) throw Error("checkpoint " + path.string() + ": unsupported version");
    Architecture arch;
    arch.conv_stem = io::read_u32(in) != 0;
    arch.input_dim = io::read_u32(in);
    const std::uint32_t layers = io::read_u32(in);
    if (layers == 0 || layers > 1024) throw Error("checkpoint " + path.string() + ": bad encoder layer count");
    arch.encoder_widths.resize(layers);
    for (auto& w : arch.encoder_widths) w = io::read_u32(in);
    arch.projector_hidden = io::read_u32(in);
    arch.embed_dim = io::read_u32(in);

    EncoderProjector<float> net(arch, 0);
    auto& params = net.parameters();
    if (io::read_u32(in) != params.size()) throw Error("checkpoint " + path.string() + ": parameter count mismatch");
    for (auto& p : params) {
        if (io::read_u32(in) != p.size()) throw Error("checkpoint " + path.string() + ": parameter size mismatch");
        for (float& v : p.values()) v = io::read_f32(in);
    }
    return net;
}

}  // namespace osscl::nets
