#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "hydrostat/time.hpp"

namespace test {

inline std::filesystem::path fixture(const std::string& name)
{
    return std::filesystem::path(HYDROSTAT_FIXTURES) / name;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "hydrostat")
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline hydrostat::Instant at(const char* rfc3339) { return hydrostat::parse_rfc3339(rfc3339); }

} // namespace test
