#include "depthkit/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace depthkit {
namespace {

constexpr char kMagic[4] = {'H', 'Q', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
    return static_cast<std::uint64_t>(get_u32(p)) | (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TruncatedFile("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    const Shape& shape = t.shape();
    if (shape.size() > 255) throw std::invalid_argument("rank exceeds the u8 header field");
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(t.dtype() == Dtype::F32 ? 0 : 1);
    out.push_back(static_cast<std::uint8_t>(shape.size()));
    out.push_back(0);
    out.push_back(0);
    for (std::int64_t e : shape) {
        if (e < 0 || e > std::numeric_limits<std::uint32_t>::max())
            throw std::invalid_argument("extent does not fit the u32 header field");
        put_u32(out, static_cast<std::uint32_t>(e));
    }
    const std::int64_t n = t.numel();
    out.reserve(out.size() + static_cast<std::size_t>(n) * (t.dtype() == Dtype::F32 ? 4 : 8));
    if (t.dtype() == Dtype::F32) {
        auto src = t.data<float>();
        for (std::int64_t i = 0; i < n; ++i)
            put_u32(out, std::bit_cast<std::uint32_t>(src[static_cast<std::size_t>(i)]));
    } else {
        auto src = t.data<double>();
        for (std::int64_t i = 0; i < n; ++i)
            put_u64(out, std::bit_cast<std::uint64_t>(src[static_cast<std::size_t>(i)]));
    }
    return out;
}

Tensor decode_tensor(const std::uint8_t* data, std::size_t size, std::size_t* consumed) {
    if (size < 8) throw TruncatedFile("header requires 8 bytes, got " + std::to_string(size));
    if (std::memcmp(data, kMagic, 4) != 0)
        throw BadMagic("expected magic HQT1, got \"" + std::string(data, data + 4) + "\"");
    const std::uint8_t code = data[4];
    if (code > 1) throw UnknownDtype("dtype code " + std::to_string(int(code)));
    const Dtype dt = code == 0 ? Dtype::F32 : Dtype::F64;
    const std::size_t ndim = data[5];
    if (data[6] != 0 || data[7] != 0) throw BadMagic("reserved header bytes are not zero");
    if (size < 8 + 4 * ndim)
        throw TruncatedFile("header declares " + std::to_string(ndim) + " extents but ends early");
    Shape shape(ndim);
    std::size_t numel = 1;
    for (std::size_t d = 0; d < ndim; ++d) {
        const std::uint32_t e = get_u32(data + 8 + 4 * d);
        shape[d] = static_cast<std::int64_t>(e);
        numel *= e;
    }
    const std::size_t width = dt == Dtype::F32 ? 4 : 8;
    const std::size_t offset = 8 + 4 * ndim;
    if (size - offset < numel * width)
        throw TruncatedFile("payload requires " + std::to_string(numel * width) + " bytes, got " +
                            std::to_string(size - offset));
    Tensor t = Tensor::zeros(shape, dt);
    if (dt == Dtype::F32) {
        auto dst = t.data<float>();
        for (std::size_t i = 0; i < numel; ++i)
            dst[i] = std::bit_cast<float>(get_u32(data + offset + 4 * i));
    } else {
        auto dst = t.data<double>();
        for (std::size_t i = 0; i < numel; ++i)
            dst[i] = std::bit_cast<double>(get_u64(data + offset + 8 * i));
    }
    if (consumed != nullptr) *consumed = offset + numel * width;
    return t;
}

void write_tensor(const std::string& path, const Tensor& t) {
    write_file(path, encode_tensor(t));
}

Tensor read_tensor(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    std::size_t consumed = 0;
    Tensor t = decode_tensor(bytes.data(), bytes.size(), &consumed);
    if (consumed != bytes.size())
        throw TruncatedFile("file holds " + std::to_string(bytes.size()) + " bytes but the record ends at " +
                            std::to_string(consumed));
    return t;
}

void save_checkpoint(const std::string& path, const ParamRegistry& reg) {
    std::vector<std::uint8_t> records;
    nlohmann::json index = nlohmann::json::array();
    for (const ParamPtr& p : reg.params()) {
        const std::vector<std::uint8_t> rec = encode_tensor(p->value);
        index.push_back({{"name", p->name}, {"offset", records.size()}, {"size", rec.size()}});
        records.insert(records.end(), rec.begin(), rec.end());
    }
    const std::string header = nlohmann::json{{"records", std::move(index)}}.dump();
    std::vector<std::uint8_t> out;
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), records.begin(), records.end());
    write_file(path, out);
}

void load_checkpoint(const std::string& path, ParamRegistry& reg) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() < 4) throw TruncatedFile("checkpoint index length missing");
    const std::size_t header_len = get_u32(bytes.data());
    if (bytes.size() < 4 + header_len) throw TruncatedFile("checkpoint index ends early");
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw BadMagic(std::string("checkpoint index is not valid JSON: ") + e.what());
    }
    const std::uint8_t* base = bytes.data() + 4 + header_len;
    const std::size_t avail = bytes.size() - 4 - header_len;
    std::size_t loaded = 0;
    for (const auto& entry : index.at("records")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t rec_size = entry.at("size").get<std::size_t>();
        if (offset + rec_size > avail || offset + rec_size < offset)
            throw TruncatedFile("checkpoint record " + name + " extends past the file");
        ParamPtr p = reg.find(name);
        if (!p) throw std::runtime_error("checkpoint names unknown param " + name);
        Tensor t = decode_tensor(base + offset, rec_size);
        if (t.shape() != p->value.shape() || t.dtype() != p->value.dtype())
            throw ShapeMismatch(shape_str(p->value.shape()), shape_str(t.shape()));
        p->value = std::move(t);
        ++loaded;
    }
    if (loaded != reg.params().size())
        throw std::runtime_error("checkpoint restores " + std::to_string(loaded) + " of " +
                                 std::to_string(reg.params().size()) + " params");
}

}  // namespace depthkit
