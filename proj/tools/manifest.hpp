#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace effdim::cli {

/// SHA-1 of "blob <size>\0<content>", the same id `git hash-object` prints.
std::string git_blob_sha1(const std::string& content);
std::string git_blob_sha1_file(const std::filesystem::path& path);

/// key = value lines; '#' starts a comment. Keys are normalized so that
/// "k_max" and "k-max" name the same option.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);
std::string normalize_key(std::string key);

struct Manifest {
  std::string subcommand;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> seeds;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;  // relative to the output directory
};

/// Writes manifest.json next to the outputs and returns its path.
std::filesystem::path write_manifest(const std::filesystem::path& out_dir, const Manifest& m);

}  // namespace effdim::cli
