#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dncl::util {

// SHA-1 of "blob <len>\0<content>", hex-encoded — the hash git assigns to a
// file's content. Used to stamp output artifacts with input provenance.
std::string git_blob_sha1(const std::string& content);
std::string git_blob_sha1_file(const std::string& path);

// FNV-1a 64 over a byte string; cheap content fingerprint for vocab/config.
uint64_t fnv1a(const std::string& s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Fixed-format double -> string ("%.*g"); all CSV/JSON artifact writers go
// through this so byte-level reproducibility does not depend on locale or
// stream state.
std::string fmt_g(double v, int digits = 12);

std::vector<std::string> split(const std::string& s, char sep);
std::string lower(std::string s);

// THREADS env var / --threads flag resolution; 0 means "not set".
int env_threads();

} // namespace dncl::util
