#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mvherit {

// Shortest decimal form that round-trips a 64-bit float exactly.
std::string format_double(double v);

std::vector<std::string> split_fields(const std::string& line, char delim);

// FNV-1a 64-bit digest of a file's bytes, as 16 hex characters.
std::string digest_file(const std::string& path);

void ensure_dir(const std::string& path);

// Run manifest for a subcommand: version, command, canonicalized flags, and
// input-file digests. Contains no timestamps so identical reruns produce
// identical manifests. write_manifest puts it at out_dir/manifest.json;
// manifest_text returns the JSON for callers that name the file themselves.
std::string manifest_text(const std::string& command,
                          const std::map<std::string, std::string>& flags,
                          const std::vector<std::string>& input_paths);
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::map<std::string, std::string>& flags,
                    const std::vector<std::string>& input_paths);

void write_matrix_tsv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& col_names,
                      const std::vector<std::string>& row_names);

}  // namespace mvherit
