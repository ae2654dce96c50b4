#pragma once

#include <filesystem>
#include <string>

#include "protofuse/corpus/dataset.hpp"

namespace protofuse::corpus {

/// Manifest JSON: {"domain_id": str, "labels": [{"name": str, "definition": str}, ...],
///                 "source_meta": [str, ...]}  (source_meta optional)
DomainManifest parse_manifest(const std::string& json_text);
DomainManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const DomainManifest& manifest);

/// Reads a manifest plus line-delimited {"text", "label", "id"?} records.
/// Texts are preprocessed. Unknown labels are rejected with the line number.
Dataset load_domain(const std::filesystem::path& manifest_file,
                    const std::filesystem::path& records_file);

/// Canonical dataset file written by `ingest`: one JSON document holding the
/// manifest, split tag and examples (label stored by name).
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace protofuse::corpus
