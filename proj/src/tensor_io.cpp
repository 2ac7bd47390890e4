#include "ovfuse/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ovfuse::io {

namespace {

constexpr char kMagic[8] = {'O', 'V', 'F', 'T', 'E', 'N', 'S', '1'};
constexpr std::size_t kHeaderAlign = 64;

const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::f32: return "f32";
        case Dtype::u8: return "u8";
        case Dtype::i32: return "i32";
    }
    return "?";
}

std::size_t dtype_size(Dtype d) { return d == Dtype::u8 ? 1 : 4; }

void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string encode_payload(const Tensor& t) {
    std::string out;
    out.reserve(t.numel() * 4);
    for (float v : t.data) put_u32le(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

std::string encode_payload(const TensorU8& t) {
    return std::string(reinterpret_cast<const char*>(t.data.data()), t.data.size());
}

std::string encode_payload(const TensorI32& t) {
    std::string out;
    out.reserve(t.numel() * 4);
    for (std::int32_t v : t.data) put_u32le(out, static_cast<std::uint32_t>(v));
    return out;
}

// Header JSON length depends on the byte_offset digits, so iterate the
// padding target until it is stable.
std::string build_header(Dtype dtype, const std::vector<std::size_t>& shape) {
    std::size_t offset = kHeaderAlign;
    for (int pass = 0; pass < 8; ++pass) {
        nlohmann::json h;
        h["byte_offset"] = offset;
        h["dtype"] = dtype_name(dtype);
        h["shape"] = shape;
        std::string j = h.dump();
        const std::size_t need = sizeof(kMagic) + j.size();
        const std::size_t padded = ((need + kHeaderAlign - 1) / kHeaderAlign) * kHeaderAlign;
        if (padded == offset) {
            j.append(offset - need, ' ');
            return j;
        }
        offset = padded;
    }
    throw IoFailure("tensor header: padding did not converge");
}

template <typename T>
void write_tensor_impl(const TensorT<T>& t, Dtype dtype, const std::filesystem::path& path) {
    const std::string header = build_header(dtype, t.shape);
    const std::string payload = encode_payload(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open for writing: " + path.string());
    f.write(kMagic, sizeof(kMagic));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw IoFailure("write failed: " + path.string());
}

struct ParsedHeader {
    Dtype dtype;
    std::vector<std::size_t> shape;
    std::size_t byte_offset;
};

ParsedHeader parse_header(const std::string& file, const std::string& bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw BadMagic(file + ": bad magic (expected OVFTENS1)");

    // The JSON region ends on a 64-byte boundary; grow by blocks until the
    // accumulated text parses.
    nlohmann::json h;
    std::size_t end = kHeaderAlign;
    for (;; end += kHeaderAlign) {
        if (end > bytes.size() || end > (1u << 20))
            throw TruncatedPayload(file + ": header never terminates");
        std::string text(bytes.data() + sizeof(kMagic), end - sizeof(kMagic));
        while (!text.empty() && text.back() == ' ') text.pop_back();
        h = nlohmann::json::parse(text, nullptr, false);
        if (!h.is_discarded()) break;
    }
    if (!h.is_object()) throw ShapeMismatch(file + ": header is not a JSON object");

    ParsedHeader out;
    if (!h.contains("dtype") || !h["dtype"].is_string())
        throw ShapeMismatch(file + ": header field 'dtype' missing or not a string");
    const std::string d = h["dtype"].get<std::string>();
    if (d == "f32") out.dtype = Dtype::f32;
    else if (d == "u8") out.dtype = Dtype::u8;
    else if (d == "i32") out.dtype = Dtype::i32;
    else throw ShapeMismatch(file + ": header field 'dtype' has unknown value '" + d + "'");

    if (!h.contains("shape") || !h["shape"].is_array())
        throw ShapeMismatch(file + ": header field 'shape' missing or not an array");
    for (const auto& e : h["shape"]) {
        if (!e.is_number_unsigned())
            throw ShapeMismatch(file + ": header field 'shape' has a non-natural extent");
        out.shape.push_back(e.get<std::size_t>());
    }

    if (!h.contains("byte_offset") || !h["byte_offset"].is_number_unsigned())
        throw ShapeMismatch(file + ": header field 'byte_offset' missing or invalid");
    out.byte_offset = h["byte_offset"].get<std::size_t>();
    if (out.byte_offset < end || out.byte_offset > bytes.size())
        throw TruncatedPayload(file + ": header field 'byte_offset' points outside the file");
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return std::move(ss).str();
}

}  // namespace

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    require_finite(t, "write_tensor");
    write_tensor_impl(t, Dtype::f32, path);
}

void write_tensor(const TensorU8& t, const std::filesystem::path& path) {
    write_tensor_impl(t, Dtype::u8, path);
}

void write_tensor(const TensorI32& t, const std::filesystem::path& path) {
    write_tensor_impl(t, Dtype::i32, path);
}

AnyTensor read_tensor(const std::filesystem::path& path) {
    const std::string file = path.string();
    const std::string bytes = read_file(path);
    const ParsedHeader h = parse_header(file, bytes);

    const std::size_t n = Tensor::numel_of(h.shape);
    const std::size_t expect = n * dtype_size(h.dtype);
    const std::size_t have = bytes.size() - h.byte_offset;
    if (have != expect)
        throw TruncatedPayload(file + ": payload holds " + std::to_string(have) +
                               " bytes, shape requires " + std::to_string(expect));

    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.byte_offset;
    switch (h.dtype) {
        case Dtype::u8: {
            TensorU8 t;
            t.shape = h.shape;
            t.data.assign(p, p + n);
            return t;
        }
        case Dtype::i32: {
            TensorI32 t;
            t.shape = h.shape;
            t.data.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                t.data[i] = static_cast<std::int32_t>(get_u32le(p + 4 * i));
            return t;
        }
        case Dtype::f32: {
            Tensor t;
            t.shape = h.shape;
            t.data.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                t.data[i] = std::bit_cast<float>(get_u32le(p + 4 * i));
            require_finite(t, ("read_tensor " + file).c_str());
            return t;
        }
    }
    throw IoFailure(file + ": unreachable dtype");
}

Tensor read_tensor_f32(const std::filesystem::path& path) {
    AnyTensor t = read_tensor(path);
    if (auto* p = std::get_if<Tensor>(&t)) return std::move(*p);
    throw ValidationError(path.string() + ": expected dtype f32");
}

TensorU8 read_tensor_u8(const std::filesystem::path& path) {
    AnyTensor t = read_tensor(path);
    if (auto* p = std::get_if<TensorU8>(&t)) return std::move(*p);
    throw ValidationError(path.string() + ": expected dtype u8");
}

TensorI32 read_tensor_i32(const std::filesystem::path& path) {
    AnyTensor t = read_tensor(path);
    if (auto* p = std::get_if<TensorI32>(&t)) return std::move(*p);
    throw ValidationError(path.string() + ": expected dtype i32");
}

// --- PGM ---

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

}  // namespace

TensorU8 read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open: " + path.string());
    if (next_pgm_token(f) != "P5") throw BadMagic(path.string() + ": not a binary PGM (P5)");
    const std::string ws = next_pgm_token(f), hs = next_pgm_token(f), ms = next_pgm_token(f);
    long w = 0, h = 0, maxval = 0;
    try {
        w = std::stol(ws);
        h = std::stol(hs);
        maxval = std::stol(ms);
    } catch (const std::exception&) {
        throw ShapeMismatch(path.string() + ": malformed PGM header");
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw ShapeMismatch(path.string() + ": unsupported PGM dimensions or maxval");

    TensorU8 t({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.numel()));
    if (f.gcount() != static_cast<std::streamsize>(t.numel()))
        throw TruncatedPayload(path.string() + ": PGM payload shorter than width*height");
    return t;
}

void write_pgm(const TensorU8& mask, const std::filesystem::path& path) {
    if (mask.rank() != 2) throw ValidationError("write_pgm: mask must be rank 2");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open for writing: " + path.string());
    f << "P5\n" << mask.dim(1) << " " << mask.dim(0) << "\n255\n";
    for (std::uint8_t v : mask.data) f.put(v ? static_cast<char>(255) : 0);
    if (!f) throw IoFailure("write failed: " + path.string());
}

// --- PLY ---

namespace {

struct PlyProperty {
    std::string name;
    std::string type;       // scalar type, or element type for lists
    std::string count_type; // non-empty for list properties
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

std::size_t ply_type_size(const std::string& t, const std::string& file) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
        t == "float32")
        return 4;
    if (t == "double" || t == "float64" || t == "int64" || t == "uint64") return 8;
    throw ShapeMismatch(file + ": unknown PLY property type '" + t + "'");
}

double ply_read_scalar_binary(std::istream& in, const std::string& type, const std::string& file) {
    unsigned char buf[8];
    const std::size_t sz = ply_type_size(type, file);
    in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(sz));
    if (!in) throw TruncatedPayload(file + ": PLY binary payload truncated");
    auto u16 = [&] { return static_cast<std::uint16_t>(buf[0] | (buf[1] << 8)); };
    auto u32 = [&] { return get_u32le(buf); };
    auto u64 = [&] {
        return static_cast<std::uint64_t>(u32()) |
               (static_cast<std::uint64_t>(get_u32le(buf + 4)) << 32);
    };
    if (type == "char" || type == "int8") return static_cast<std::int8_t>(buf[0]);
    if (type == "uchar" || type == "uint8") return buf[0];
    if (type == "short" || type == "int16") return static_cast<std::int16_t>(u16());
    if (type == "ushort" || type == "uint16") return u16();
    if (type == "int" || type == "int32") return static_cast<std::int32_t>(u32());
    if (type == "uint" || type == "uint32") return u32();
    if (type == "float" || type == "float32") return std::bit_cast<float>(u32());
    if (type == "double" || type == "float64") return std::bit_cast<double>(u64());
    if (type == "int64") return static_cast<double>(static_cast<std::int64_t>(u64()));
    if (type == "uint64") return static_cast<double>(u64());
    throw ShapeMismatch(file + ": unknown PLY property type '" + type + "'");
}

double ply_read_scalar_ascii(std::istream& in, const std::string& file) {
    double v;
    if (!(in >> v)) throw TruncatedPayload(file + ": PLY ascii payload truncated");
    return v;
}

}  // namespace

PointScene read_ply(const std::filesystem::path& path) {
    const std::string file = path.string();
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open: " + file);

    std::string line;
    if (!std::getline(f, line) || line.substr(0, 3) != "ply")
        throw BadMagic(file + ": not a PLY file");

    bool binary = false;
    std::vector<PlyElement> elements;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment" || word == "obj_info" || word.empty()) continue;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else throw ShapeMismatch(file + ": unsupported PLY format '" + fmt + "'");
        } else if (word == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (word == "property") {
            if (elements.empty()) throw ShapeMismatch(file + ": property before element");
            std::string t;
            ls >> t;
            PlyProperty p;
            if (t == "list") {
                ls >> p.count_type >> p.type >> p.name;
            } else {
                p.type = t;
                ls >> p.name;
            }
            elements.back().props.push_back(p);
        } else if (word == "end_header") {
            break;
        } else {
            throw ShapeMismatch(file + ": unexpected header keyword '" + word + "'");
        }
    }

    PointScene scene;
    auto read_scalar = [&](const std::string& type) {
        return binary ? ply_read_scalar_binary(f, type, file) : ply_read_scalar_ascii(f, file);
    };

    for (const PlyElement& e : elements) {
        if (e.name == "vertex") {
            int xi = -1, yi = -1, zi = -1, li = -1;
            for (std::size_t i = 0; i < e.props.size(); ++i) {
                if (!e.props[i].count_type.empty()) continue;
                if (e.props[i].name == "x") xi = static_cast<int>(i);
                if (e.props[i].name == "y") yi = static_cast<int>(i);
                if (e.props[i].name == "z") zi = static_cast<int>(i);
                if (e.props[i].name == "label") li = static_cast<int>(i);
            }
            if (xi < 0 || yi < 0 || zi < 0)
                throw ShapeMismatch(file + ": vertex element lacks x/y/z properties");
            scene.points = Tensor({e.count, 3});
            if (li >= 0) scene.labels.resize(e.count);
            for (std::size_t v = 0; v < e.count; ++v) {
                for (std::size_t i = 0; i < e.props.size(); ++i) {
                    const PlyProperty& p = e.props[i];
                    if (!p.count_type.empty()) {
                        const std::size_t cnt = static_cast<std::size_t>(read_scalar(p.count_type));
                        for (std::size_t j = 0; j < cnt; ++j) read_scalar(p.type);
                        continue;
                    }
                    const double val = read_scalar(p.type);
                    if (static_cast<int>(i) == xi) scene.points(v, 0) = static_cast<float>(val);
                    else if (static_cast<int>(i) == yi) scene.points(v, 1) = static_cast<float>(val);
                    else if (static_cast<int>(i) == zi) scene.points(v, 2) = static_cast<float>(val);
                    else if (static_cast<int>(i) == li)
                        scene.labels[v] = static_cast<std::int32_t>(val);
                }
            }
        } else if (e.name == "face") {
            for (std::size_t v = 0; v < e.count; ++v) {
                for (const PlyProperty& p : e.props) {
                    if (p.count_type.empty()) {
                        read_scalar(p.type);
                        continue;
                    }
                    const std::size_t cnt = static_cast<std::size_t>(read_scalar(p.count_type));
                    std::vector<std::int32_t> idx(cnt);
                    for (std::size_t j = 0; j < cnt; ++j)
                        idx[j] = static_cast<std::int32_t>(read_scalar(p.type));
                    if (p.name == "vertex_indices" || p.name == "vertex_index") {
                        // Triangulate as a fan.
                        for (std::size_t j = 2; j < cnt; ++j)
                            scene.faces.push_back({idx[0], idx[j - 1], idx[j]});
                    }
                }
            }
        } else {
            // Unknown element: consume its payload.
            for (std::size_t v = 0; v < e.count; ++v) {
                for (const PlyProperty& p : e.props) {
                    if (p.count_type.empty()) {
                        read_scalar(p.type);
                    } else {
                        const std::size_t cnt = static_cast<std::size_t>(read_scalar(p.count_type));
                        for (std::size_t j = 0; j < cnt; ++j) read_scalar(p.type);
                    }
                }
            }
        }
    }
    scene.validate();
    return scene;
}

void write_ply(const PointScene& scene, const std::filesystem::path& path, bool binary) {
    scene.validate();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open for writing: " + path.string());

    const std::size_t n = scene.size();
    f << "ply\n";
    f << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
    f << "element vertex " << n << "\n";
    f << "property float x\nproperty float y\nproperty float z\n";
    if (scene.has_labels()) f << "property int label\n";
    if (scene.has_mesh()) {
        f << "element face " << scene.faces.size() << "\n";
        f << "property list uchar int vertex_indices\n";
    }
    f << "end_header\n";

    std::string buf;
    if (binary) {
        for (std::size_t i = 0; i < n; ++i) {
            buf.clear();
            put_u32le(buf, std::bit_cast<std::uint32_t>(scene.points(i, 0)));
            put_u32le(buf, std::bit_cast<std::uint32_t>(scene.points(i, 1)));
            put_u32le(buf, std::bit_cast<std::uint32_t>(scene.points(i, 2)));
            if (scene.has_labels())
                put_u32le(buf, static_cast<std::uint32_t>(scene.labels[i]));
            f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        }
        for (const auto& face : scene.faces) {
            buf.clear();
            buf.push_back(3);
            for (std::int32_t v : face) put_u32le(buf, static_cast<std::uint32_t>(v));
            f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            f << scene.points(i, 0) << " " << scene.points(i, 1) << " " << scene.points(i, 2);
            if (scene.has_labels()) f << " " << scene.labels[i];
            f << "\n";
        }
        for (const auto& face : scene.faces)
            f << "3 " << face[0] << " " << face[1] << " " << face[2] << "\n";
    }
    if (!f) throw IoFailure("write failed: " + path.string());
}

}  // namespace ovfuse::io
