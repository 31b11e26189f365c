#pragma once

#include "holab/tracegen.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace holab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// `holab gen|baseline|train|eval|compare ...`; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct ManifestEntry
{
    std::string id;
    std::string file;
    double speed_kmh = 0.0;
    tracegen::Split split = tracegen::Split::Train;
};

void write_manifest(const std::filesystem::path& dir, std::uint64_t seed, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

/// Traces listed in the manifest of `dir`, filtered by split (all when
/// empty) and speed (all when empty). Requested speeds absent from the
/// manifest throw naming the speed.
std::vector<tracegen::RadioTrace> load_traces(const std::filesystem::path& dir, std::optional<tracegen::Split> split,
                                              const std::vector<double>& speeds);

} // namespace holab::cli
