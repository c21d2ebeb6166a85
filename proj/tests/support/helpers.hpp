// helpers.hpp -- shared test utilities
#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "dcs/bytes.hpp"
#include "dcs/crypto.hpp"

namespace dcs::test {

// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        std::string tmpl =
            (std::filesystem::temp_directory_path() / "dcs-test-XXXXXX")
                .string();
        if (!mkdtemp(tmpl.data()))
            throw std::runtime_error("mkdtemp failed");
        path = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

// Entropy stub for the EntropyUnavailable paths.
struct FailingRng final : Rng {
    void fill(std::span<std::uint8_t>) override {
        throw Error(Errc::EntropyUnavailable, "stubbed out");
    }
};

inline Bytes read_file(const std::filesystem::path& p) {
    Bytes out;
    std::FILE* f = std::fopen(p.c_str(), "rb");
    if (!f)
        return out;
    std::uint8_t buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0)
        out.insert(out.end(), buf, buf + n);
    std::fclose(f);
    return out;
}

} // namespace dcs::test
