#include "pg2/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "pg2/errors.hpp"

namespace pg2 {

namespace {

constexpr char kMagic[8] = {'P', 'G', '2', 'C', 'K', 'P', 'T', '\0'};

std::uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32:
      return 1;
    case torch::kFloat64:
      return 2;
    case torch::kInt64:
      return 3;
    case torch::kUInt8:
      return 4;
    default:
      throw UsageError("checkpoint: unsupported tensor dtype");
  }
}

torch::ScalarType dtype_from_code(std::uint8_t code) {
  switch (code) {
    case 1:
      return torch::kFloat32;
    case 2:
      return torch::kFloat64;
    case 3:
      return torch::kInt64;
    case 4:
      return torch::kUInt8;
    default:
      throw DataError("checkpoint: unknown dtype code " + std::to_string(code));
  }
}

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::size_t end, std::string source)
      : buf_(buf), end_(end), source_(std::move(source)) {}

  template <typename T>
  T pod() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void take(void* out, std::size_t n) {
    if (pos_ + n > end_) throw DataError("checkpoint " + source_ + " is truncated");
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > end_ - pos_) throw DataError("checkpoint " + source_ + " is truncated");
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<char>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.pod(Checkpoint::kVersion);
  w.pod(ckpt.training_hash);
  w.pod(ckpt.model_hash);
  w.pod(ckpt.iteration);
  w.str(ckpt.kind);
  w.str(ckpt.config.dump());
  w.pod<std::uint64_t>(ckpt.tensors.size());
  for (const auto& [name, tensor] : ckpt.tensors) {
    auto t = tensor.detach().contiguous().cpu();
    w.str(name);
    w.pod(dtype_code(t.scalar_type()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.pod<std::int64_t>(d);
    const std::uint64_t nbytes = t.numel() * t.element_size();
    w.pod(nbytes);
    w.bytes(t.data_ptr(), nbytes);
  }
  const auto& buf = w.buffer();
  const std::uint64_t checksum = fnv1a64(std::string(buf.begin(), buf.end()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not a checkpoint");
  }
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (stored != fnv1a64(std::string(buf.begin(), buf.begin() + static_cast<long>(body)))) {
    throw DataError("checkpoint " + path.string() + " failed its checksum");
  }

  Reader r(buf, body, path.string());
  char magic[sizeof(kMagic)];
  r.take(magic, sizeof(magic));
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw DataError("checkpoint " + path.string() + " has unsupported version " +
                    std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.training_hash = r.pod<std::uint64_t>();
  ckpt.model_hash = r.pod<std::uint64_t>();
  ckpt.iteration = r.pod<std::int64_t>();
  ckpt.kind = r.str();
  try {
    ckpt.config = json::parse(r.str());
  } catch (const json::parse_error& e) {
    throw DataError("checkpoint " + path.string() + " carries an unreadable config");
  }
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = r.str();
    const auto dtype = dtype_from_code(r.pod<std::uint8_t>());
    const auto ndim = r.pod<std::uint32_t>();
    std::vector<std::int64_t> shape(ndim);
    for (auto& d : shape) d = r.pod<std::int64_t>();
    const auto nbytes = r.pod<std::uint64_t>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    if (static_cast<std::uint64_t>(t.numel() * t.element_size()) != nbytes) {
      throw DataError("checkpoint tensor '" + name + "' has inconsistent size");
    }
    r.take(t.data_ptr(), nbytes);
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  if (r.position() != body) throw DataError("checkpoint " + path.string() + " has trailing bytes");
  return ckpt;
}

}  // namespace pg2
