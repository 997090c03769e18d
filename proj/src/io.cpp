#include "cdcd/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "cdcd/error.hpp"

namespace cdcd {

namespace {

constexpr const char* kCorpusMagic = "cdcd-corpus v1";
constexpr const char* kCheckpointMagic = "cdcd-ckpt v1";

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& what) {
  throw Error(source + ":" + std::to_string(line) + ": " + what);
}

int parse_int(const std::string& s, const std::string& source, std::size_t line) {
  if (s.empty()) fail_at(source, line, "expected an integer");
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::logic_error&) {
    fail_at(source, line, "expected an integer, got '" + s + "'");
  }
  if (used != s.size()) fail_at(source, line, "expected an integer, got '" + s + "'");
  return v;
}

int header_field(const std::string& token, const std::string& key, const std::string& source) {
  if (token.rfind(key + "=", 0) != 0) fail_at(source, 2, "expected '" + key + "=<int>', got '" + token + "'");
  return parse_int(token.substr(key.size() + 1), source, 2);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

void write_corpus(std::ostream& out, const Dataset& data) {
  validate(data);
  out << kCorpusMagic << '\n';
  out << "K=" << data.codebook << " L=" << data.length << " classes=" << data.classes << '\n';
  for (const TokenSequence& x : data.items) {
    out << *x.label << '\t';
    for (std::size_t l = 0; l < x.size(); ++l) out << (l ? " " : "") << x.tokens[l];
    out << '\n';
  }
  if (!out) throw Error("write_corpus: stream error");
}

Dataset read_corpus(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != kCorpusMagic) fail_at(source, 1, "expected '" + std::string(kCorpusMagic) + "'");
  if (!std::getline(in, line)) fail_at(source, 2, "missing 'K=<int> L=<int> classes=<int>' header");

  Dataset d;
  {
    std::istringstream hs(line);
    std::string a, b, c, extra;
    if (!(hs >> a >> b >> c) || (hs >> extra)) fail_at(source, 2, "expected 'K=<int> L=<int> classes=<int>'");
    d.codebook = header_field(a, "K", source);
    d.length = header_field(b, "L", source);
    d.classes = header_field(c, "classes", source);
    if (d.codebook < 1 || d.length < 1 || d.classes < 1) fail_at(source, 2, "K, L and classes must be positive");
  }

  std::size_t n = 2;
  while (std::getline(in, line)) {
    ++n;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail_at(source, n, "expected '<class>\\t<tokens>'");
    TokenSequence x;
    const int label = parse_int(line.substr(0, tab), source, n);
    if (label < 0 || label >= d.classes) fail_at(source, n, "class " + std::to_string(label) + " out of range");
    x.label = label;
    std::istringstream ts(line.substr(tab + 1));
    std::string tok;
    while (ts >> tok) {
      const int v = parse_int(tok, source, n);
      if (v < 0 || v >= d.codebook)
        fail_at(source, n, "token " + std::to_string(v) + " outside [0, " + std::to_string(d.codebook) + ")");
      x.tokens.push_back(v);
    }
    if (static_cast<int>(x.size()) != d.length)
      fail_at(source, n, "row has " + std::to_string(x.size()) + " tokens, expected " + std::to_string(d.length));
    d.items.push_back(std::move(x));
  }
  return d;
}

void save_corpus(const std::filesystem::path& path, const Dataset& data) {
  std::ostringstream os;
  write_corpus(os, data);
  write_file_atomic(path, os.str());
}

Dataset load_corpus(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_corpus(in, path.string());
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error("sha256: digest computation failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  if (ckpt.names.size() != ckpt.tensors.size()) throw Error("write_checkpoint: name and tensor counts differ");
  std::string blob;
  std::ostringstream manifest;
  manifest << kCheckpointMagic << '\n';
  manifest << "config " << ckpt.config.size() << '\n';
  for (const std::string& kv : ckpt.config) {
    if (kv.find('\n') != std::string::npos) throw Error("write_checkpoint: config line holds a newline");
    manifest << kv << '\n';
  }
  manifest << "tensors " << ckpt.tensors.size() << '\n';
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    const Tensor& t = ckpt.tensors[i];
    if (ckpt.names[i].empty() || ckpt.names[i].find_first_of(" \t\n") != std::string::npos)
      throw Error("write_checkpoint: tensor name '" + ckpt.names[i] + "' is empty or holds whitespace");
    const std::size_t offset = blob.size();
    for (double v : t.data) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
    manifest << "tensor " << ckpt.names[i] << ' ' << (t.shape.empty() ? std::string("scalar") : "");
    for (std::size_t k = 0; k < t.shape.size(); ++k) manifest << (k ? "x" : "") << t.shape[k];
    manifest << " offset " << offset << " length " << blob.size() - offset << '\n';
  }
  manifest << "blob " << blob.size() << " sha256 " << sha256_hex(blob) << '\n';
  out << manifest.str();
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw Error("write_checkpoint: stream error");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  const auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) fail_at("checkpoint", n + 1, std::string("unexpected end of manifest, expected ") + what);
    ++n;
    return line;
  };
  const auto count_after = [&](const std::string& l, const std::string& key) {
    if (l.rfind(key + " ", 0) != 0) fail_at("checkpoint", n, "expected '" + key + " <count>'");
    return static_cast<std::size_t>(parse_int(l.substr(key.size() + 1), "checkpoint", n));
  };

  if (next_line("version") != kCheckpointMagic)
    throw Error("checkpoint: unsupported version line '" + line + "' (expected '" + kCheckpointMagic + "')");
  Checkpoint ck;
  const std::size_t cfg = count_after(next_line("config count"), "config");
  for (std::size_t i = 0; i < cfg; ++i) ck.config.push_back(next_line("config line"));

  struct Entry {
    std::vector<std::size_t> shape;
    std::size_t offset, length;
  };
  std::vector<Entry> entries;
  const std::size_t count = count_after(next_line("tensor count"), "tensors");
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream ls(next_line("tensor line"));
    std::string tag, name, shape, off_key, len_key;
    Entry e{};
    if (!(ls >> tag >> name >> shape >> off_key >> e.offset >> len_key >> e.length) || tag != "tensor" ||
        off_key != "offset" || len_key != "length")
      fail_at("checkpoint", n, "malformed tensor line");
    if (shape != "scalar") {
      std::istringstream ss(shape);
      std::string dim;
      while (std::getline(ss, dim, 'x')) e.shape.push_back(static_cast<std::size_t>(parse_int(dim, "checkpoint", n)));
    }
    if (shape_size(e.shape) * 8 != e.length) fail_at("checkpoint", n, "tensor length does not match its shape");
    ck.names.push_back(name);
    entries.push_back(std::move(e));
  }
  std::istringstream bs(next_line("blob line"));
  std::string tag, sha_key, digest;
  std::size_t blob_size = 0;
  if (!(bs >> tag >> blob_size >> sha_key >> digest) || tag != "blob" || sha_key != "sha256")
    fail_at("checkpoint", n, "expected 'blob <bytes> sha256 <hex>'");

  std::string blob(blob_size, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(blob_size));
  if (static_cast<std::size_t>(in.gcount()) != blob_size || in.peek() != std::char_traits<char>::eof() ||
      sha256_hex(blob) != digest)
    throw Error("checkpoint: blob digest mismatch (file truncated or corrupted)");

  for (const Entry& e : entries) {
    if (e.offset + e.length > blob.size()) throw Error("checkpoint: tensor extends past the blob");
    Tensor t(e.shape, 0.0);
    for (std::size_t k = 0; k < t.size(); ++k) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[e.offset + 8 * k + b])) << (8 * b);
      t.data[k] = std::bit_cast<double>(bits);
    }
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, ckpt);
  write_file_atomic(path, os.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_checkpoint(in);
}

Params params_from_checkpoint(const DenoiserConfig& config, const Checkpoint& ckpt) {
  const auto layout = param_layout(config);
  if (layout.size() != ckpt.tensors.size())
    throw Error("checkpoint: holds " + std::to_string(ckpt.tensors.size()) + " tensors, the model needs " +
                std::to_string(layout.size()));
  Params p;
  p.config = config;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != ckpt.names[i] || layout[i].shape != ckpt.tensors[i].shape)
      throw Error("checkpoint: tensor " + std::to_string(i) + " is '" + ckpt.names[i] + "' " +
                  shape_string(ckpt.tensors[i].shape) + ", expected '" + layout[i].name + "' " +
                  shape_string(layout[i].shape));
    p.names.push_back(ckpt.names[i]);
    p.tensors.push_back(ckpt.tensors[i]);
  }
  return p;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error("write failed for " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string file_digest(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return sha256_hex(os.str());
}

}  // namespace cdcd
