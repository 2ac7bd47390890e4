#include "ovfuse/digest.hpp"

#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "ovfuse/error.hpp"

namespace ovfuse {

std::string sha256_hex(const void* data, std::size_t size) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr))
        throw IoFailure("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(const std::string& data) { return sha256_hex(data.data(), data.size()); }

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string bytes = std::move(ss).str();
    return sha256_hex(bytes);
}

}  // namespace ovfuse
