#pragma once

#include <string>

#include "aop/types.hpp"

namespace aop {

inline constexpr const char* kMemorySchemaVersion = "1";
inline constexpr const char* kMemoryManifestName = "memory.json";

// Writes `directory/memory.json` (creating the directory if needed) and
// returns the manifest path. Floats are serialized with round-trip
// precision, so load(store(m)) reproduces m bit-exactly.
std::string store_memory(const HierarchicalMemory& memory, const std::string& directory);

// Loads and validates a memory directory. Missing manifest, schema-version
// mismatch and corrupted fields raise errors naming the offending field.
HierarchicalMemory load_memory(const std::string& directory);

}  // namespace aop
