#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "ovfuse/digest.hpp"
#include "ovfuse/tensor.hpp"
#include "ovfuse/tensor_io.hpp"
#include "test_util.hpp"

using namespace ovfuse;
namespace fs = std::filesystem;

TEST_CASE("ovt round-trip identity for a [2,3] tensor") {
    const auto dir = ovtest::temp_dir("tensor_roundtrip");
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    io::write_tensor(t, dir / "t.ovt");
    const Tensor back = io::read_tensor_f32(dir / "t.ovt");
    CHECK(back == t);
}

TEST_CASE("ovt round-trip for every dtype including zero-extent shapes") {
    const auto dir = ovtest::temp_dir("tensor_dtypes");
    std::mt19937_64 rng(3);

    SUBCASE("f32 random") {
        const Tensor t = ovtest::random_tensor({4, 5, 2}, rng);
        io::write_tensor(t, dir / "f.ovt");
        CHECK(io::read_tensor_f32(dir / "f.ovt") == t);
    }
    SUBCASE("u8") {
        TensorU8 t({3, 7});
        for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = static_cast<std::uint8_t>(i * 11);
        io::write_tensor(t, dir / "u.ovt");
        CHECK(io::read_tensor_u8(dir / "u.ovt") == t);
    }
    SUBCASE("i32 negative values") {
        TensorI32 t({5}, {-1, 0, 2147483647, -2147483648, 42});
        io::write_tensor(t, dir / "i.ovt");
        CHECK(io::read_tensor_i32(dir / "i.ovt") == t);
    }
    SUBCASE("scalar (empty shape) holds one element") {
        Tensor t({}, {3.5f});
        io::write_tensor(t, dir / "s.ovt");
        const Tensor back = io::read_tensor_f32(dir / "s.ovt");
        CHECK(back.numel() == 1);
        CHECK(back.data[0] == 3.5f);
    }
    SUBCASE("[0] shape gives a zero-length payload and a valid header") {
        Tensor t({0});
        io::write_tensor(t, dir / "z.ovt");
        const Tensor back = io::read_tensor_f32(dir / "z.ovt");
        CHECK(back.shape == std::vector<std::size_t>{0});
        CHECK(back.numel() == 0);
    }
    SUBCASE("[0,4] rank-2 zero extent") {
        Tensor t({0, 4});
        io::write_tensor(t, dir / "z2.ovt");
        CHECK(io::read_tensor_f32(dir / "z2.ovt") == t);
    }
}

TEST_CASE("bad magic is rejected and names the file") {
    const auto dir = ovtest::temp_dir("tensor_badmagic");
    {
        std::ofstream f(dir / "bad.ovt", std::ios::binary);
        f << "XXXXXXXX" << std::string(64, ' ');
    }
    CHECK_THROWS_AS(io::read_tensor(dir / "bad.ovt"), BadMagic);
    try {
        io::read_tensor(dir / "bad.ovt");
    } catch (const BadMagic& e) {
        CHECK(std::string(e.what()).find("bad.ovt") != std::string::npos);
    }
}

TEST_CASE("truncated payload is rejected with both sizes named") {
    const auto dir = ovtest::temp_dir("tensor_trunc");
    // Header claims shape [4] (16 payload bytes) but carries only 12.
    Tensor t({4}, {1, 2, 3, 4});
    io::write_tensor(t, dir / "t.ovt");
    std::string bytes;
    {
        std::ifstream f(dir / "t.ovt", std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(f), {});
    }
    bytes.resize(bytes.size() - 4);
    {
        std::ofstream f(dir / "short.ovt", std::ios::binary);
        f << bytes;
    }
    CHECK_THROWS_AS(io::read_tensor(dir / "short.ovt"), TruncatedPayload);
}

TEST_CASE("malformed header shape is a ShapeMismatch") {
    const auto dir = ovtest::temp_dir("tensor_shape");
    {
        std::ofstream f(dir / "neg.ovt", std::ios::binary);
        std::string header = R"({"byte_offset":64,"dtype":"f32","shape":[-3]})";
        header.append(64 - 8 - header.size(), ' ');
        f << "OVFTENS1" << header;
    }
    CHECK_THROWS_AS(io::read_tensor(dir / "neg.ovt"), ShapeMismatch);

    {
        std::ofstream f(dir / "dtype.ovt", std::ios::binary);
        std::string header = R"({"byte_offset":64,"dtype":"f64","shape":[1]})";
        header.append(64 - 8 - header.size(), ' ');
        f << "OVFTENS1" << header << std::string(4, '\0');
    }
    CHECK_THROWS_AS(io::read_tensor(dir / "dtype.ovt"), ShapeMismatch);
}

TEST_CASE("non-finite payloads are rejected on both ends") {
    const auto dir = ovtest::temp_dir("tensor_nan");
    Tensor t({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
    CHECK_THROWS_AS(io::write_tensor(t, dir / "nan.ovt"), ValidationError);
}

TEST_CASE("emitted bytes are deterministic; golden hash of the [3,3] identity") {
    const auto dir = ovtest::temp_dir("tensor_golden");
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0f;
    io::write_tensor(eye, dir / "a.ovt");
    io::write_tensor(eye, dir / "b.ovt");
    CHECK(sha256_file(dir / "a.ovt") == sha256_file(dir / "b.ovt"));

    // Golden bytes frozen from the format definition: 8-byte magic, JSON
    // header space-padded to offset 64, little-endian f32 payload.
    CHECK(sha256_file(dir / "a.ovt") ==
          "483d560a64be98347b833e9accd3a4563dc0ea7c41842fd982319125acb70203");

    // Byte-for-byte identical to the checked-in golden file.
    std::ifstream got(dir / "a.ovt", std::ios::binary);
    std::ifstream want(fs::path(__FILE__).parent_path() / "golden" / "identity3.ovt",
                       std::ios::binary);
    const std::string got_bytes(std::istreambuf_iterator<char>(got), {});
    const std::string want_bytes(std::istreambuf_iterator<char>(want), {});
    CHECK(got_bytes == want_bytes);
}

TEST_CASE("l2_normalize_rows hand values") {
    Tensor t({1, 2}, {3, 4});
    const auto r = l2_normalize_rows(t, 1e-12f);
    CHECK(r.values(0, 0) == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(r.values(0, 1) == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(r.zeroed[0] == 0);
}

TEST_CASE("l2_normalize_rows flags zero rows instead of failing") {
    Tensor t({2, 3}, {0, 0, 0, 1, 1, 1});
    const auto r = l2_normalize_rows(t, 1e-12f);
    CHECK(r.zeroed[0] == 1);
    CHECK(r.zeroed[1] == 0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(r.values(0, j) == 0.0f);
}

TEST_CASE("l2_normalize_rows: random matrix checked by independent summation") {
    std::mt19937_64 rng(17);
    const Tensor t = ovtest::random_tensor({5, 8}, rng);
    const auto r = l2_normalize_rows(t, 1e-12f);
    for (std::size_t i = 0; i < 5; ++i) {
        const double norm_in = ovtest::norm_d(t.row(i), 8);
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(r.values(i, j) == doctest::Approx(t(i, j) / norm_in).epsilon(1e-6));
        CHECK(ovtest::norm_d(r.values.row(i), 8) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("l2_normalize_rows is idempotent") {
    std::mt19937_64 rng(23);
    const Tensor t = ovtest::random_tensor({7, 5}, rng, -3.0f, 3.0f);
    const auto once = l2_normalize_rows(t, 1e-12f);
    const auto twice = l2_normalize_rows(once.values, 1e-12f);
    for (std::size_t i = 0; i < t.numel(); ++i)
        CHECK(twice.values.data[i] == doctest::Approx(once.values.data[i]).epsilon(1e-6));
}

TEST_CASE("pgm round trip and foreground semantics") {
    const auto dir = ovtest::temp_dir("pgm");
    TensorU8 m({2, 3}, {0, 1, 0, 255, 7, 0});
    io::write_pgm(m, dir / "m.pgm");
    const TensorU8 back = io::read_pgm(dir / "m.pgm");
    REQUIRE(back.shape == m.shape);
    for (std::size_t i = 0; i < m.numel(); ++i) CHECK((back.data[i] != 0) == (m.data[i] != 0));
}

TEST_CASE("pgm reader accepts comments and rejects bad headers") {
    const auto dir = ovtest::temp_dir("pgm_hdr");
    {
        std::ofstream f(dir / "c.pgm", std::ios::binary);
        f << "P5\n# a comment\n2 1\n255\n";
        f.put(0);
        f.put(static_cast<char>(200));
    }
    const TensorU8 m = io::read_pgm(dir / "c.pgm");
    CHECK(m.dim(0) == 1);
    CHECK(m.dim(1) == 2);
    CHECK(m(0, 1) != 0);

    {
        std::ofstream f(dir / "p2.pgm", std::ios::binary);
        f << "P2\n2 1\n255\n0 1\n";
    }
    CHECK_THROWS_AS(io::read_pgm(dir / "p2.pgm"), BadMagic);
}

TEST_CASE("ply round trip with labels and faces, binary and ascii") {
    const auto dir = ovtest::temp_dir("ply");
    PointScene scene;
    scene.points = Tensor({4, 3}, {0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0});
    scene.labels = {0, 1, 1, 2};
    scene.faces = {{0, 1, 2}, {0, 2, 3}};

    for (bool binary : {true, false}) {
        const auto path = dir / (binary ? "b.ply" : "a.ply");
        io::write_ply(scene, path, binary);
        const PointScene back = io::read_ply(path);
        CHECK(back.points == scene.points);
        CHECK(back.labels == scene.labels);
        CHECK(back.faces == scene.faces);
    }
}

TEST_CASE("ply reader skips unknown properties and triangulates quads") {
    const auto dir = ovtest::temp_dir("ply_extra");
    {
        std::ofstream f(dir / "q.ply");
        f << "ply\nformat ascii 1.0\n"
          << "element vertex 4\n"
          << "property float x\nproperty float y\nproperty float z\n"
          << "property uchar red\n"
          << "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
          << "0 0 0 255\n1 0 0 0\n1 1 0 0\n0 1 0 0\n"
          << "4 0 1 2 3\n";
    }
    const PointScene scene = io::read_ply(dir / "q.ply");
    CHECK(scene.size() == 4);
    REQUIRE(scene.faces.size() == 2);  // fan triangulation of the quad
    CHECK(scene.faces[0] == std::array<std::int32_t, 3>{0, 1, 2});
    CHECK(scene.faces[1] == std::array<std::int32_t, 3>{0, 2, 3});
}
