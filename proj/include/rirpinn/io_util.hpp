#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rirpinn {

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// FNV-1a over the file bytes; stable content fingerprint for manifests and
// determinism checks.
std::uint64_t fnv1a_file(const std::string& path);
std::string hex64(std::uint64_t v);

// Shortest round-trip decimal formatting ("%.17g" is the fallback upper
// bound; value parses back bit-exactly).
std::string format_double(double v);

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

}  // namespace rirpinn
