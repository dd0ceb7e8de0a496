#include "cgt/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cgt/errors.hpp"

namespace cgt::train {

namespace {

constexpr char kMagic[8] = {'C', 'G', 'T', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<char>& out, T value) {
  const char* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

void put_string(std::vector<char>& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  void get_raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated data");
  }
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> Checkpoint::to_bytes() const {
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    const char* p = reinterpret_cast<const char*>(t.data().data());
    out.insert(out.end(), p, p + t.size() * sizeof(double));
  }
  return out;
}

Checkpoint Checkpoint::from_bytes(const std::vector<char>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.get_raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("checkpoint: bad magic");
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>();
  if (ck.version != kVersion) {
    throw FormatError("checkpoint: version " + std::to_string(ck.version) + " unsupported (expected " +
                      std::to_string(kVersion) + ")");
  }
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_string();
    ck.meta[std::move(k)] = r.get_string();
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("checkpoint: implausible rank for '" + name + "'");
    grad::Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    grad::Tensor t(shape);
    r.get_raw(t.data().data(), t.size() * sizeof(double));
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = to_bytes();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("checkpoint: cannot open '" + path.string() + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("checkpoint: write to '" + path.string() + "' failed");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return from_bytes(bytes);
}

const std::string& Checkpoint::require_meta(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint: missing metadata '" + key + "'");
  return it->second;
}

const grad::Tensor& Checkpoint::require_tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

}  // namespace cgt::train
