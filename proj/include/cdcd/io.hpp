#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cdcd/data.hpp"
#include "cdcd/denoiser.hpp"

namespace cdcd {

/// Corpus text format:
///   cdcd-corpus v1
///   K=<int> L=<int> classes=<int>
///   <class>\t<tok> <tok> ...
void write_corpus(std::ostream& out, const Dataset& data);
Dataset read_corpus(std::istream& in, const std::string& source = "corpus");
void save_corpus(const std::filesystem::path& path, const Dataset& data);
Dataset load_corpus(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);

/// Checkpoint: a text manifest (version line, config snapshot, one line per
/// tensor with shape, byte offset and length, then the blob size and its
/// SHA-256) followed by the tensors as little-endian f64.
struct Checkpoint {
  std::vector<std::string> config;  // key=value lines
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
/// Writes to a temporary sibling and renames, so a failed write leaves no checkpoint behind.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds Params, checking names and shapes against the layout of `config`.
Params params_from_checkpoint(const DenoiserConfig& config, const Checkpoint& ckpt);

/// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string file_digest(const std::filesystem::path& path);

}  // namespace cdcd
