#pragma once

#include "holab/env.hpp"
#include "holab/ppo.hpp"
#include "holab/protocol.hpp"
#include "holab/tracegen.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace holab::config {

/// Everything a pipeline run can be configured with.
struct LabConfig
{
    std::optional<std::uint64_t> seed;
    tracegen::RadioMap map = tracegen::default_map();
    tracegen::RouteSetOptions routes;
    tracegen::DatasetOptions dataset;
    std::vector<double> speeds = {3.0, 30.0, 50.0};
    double train_speed_kmh = 50.0;
    protocol::ProtocolConfig protocol;
    env::EnvConfig env;
    ppo::PpoConfig ppo;

    /// Throws ConfigError.
    void validate() const;
};

/// INI-style `key = value` text with `[section]` headers and `#` comments.
/// Sections: run, map, routes, dataset, protocol, env, ppo, iteration.N.
/// Unknown sections or keys, duplicates and malformed values throw
/// ConfigError naming the location.
LabConfig parse_config(std::istream& in, const std::string& source = "<config>");
LabConfig load_config(const std::filesystem::path& path);

/// Text that parse_config() reads back into an equal configuration.
std::string dump_config(const LabConfig& cfg);

std::vector<double> parse_speed_list(const std::string& text);

} // namespace holab::config
