#pragma once

#include <string>

#include "lgmatch/types.hpp"

namespace lgmatch::io {

// Reads a line-delimited manifest (one JSON record per line). Validates
// landmark-count consistency per (modality, view), id uniqueness, and
// landmark bounds. Throws Error with the offending line number on bad input.
DatasetManifest load_manifest(const std::string& path);

// Writes records one per line with a fixed field order; output is
// byte-deterministic for a given manifest.
void save_manifest(const DatasetManifest& m, const std::string& path);

// For paired training: every id present in modality A must appear in
// modality B of the same view, and vice versa. Throws on violation.
void check_paired_identities(const DatasetManifest& m);

}  // namespace lgmatch::io
