#include "fgmae/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fgmae {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename U>
void put(std::string& buf, U v) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  buf.append(bytes, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end, const std::string& path) : buf_(buf), end_(end), path_(path) {}
  template <typename U>
  U get() {
    U v;
    need(sizeof(U));
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void read_floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, buf_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CorruptFile(path_ + ": truncated checkpoint");
  }
  const std::string& buf_;
  std::size_t end_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& entries) {
  std::string buf = "PMUD";
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xFFFF) throw InvalidParam("checkpoint entry name too long: " + e.name.substr(0, 40));
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(e.name.size()));
    buf += e.name;
    put<std::uint8_t>(buf, 2);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.value.rows()));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.value.cols()));
    buf.append(reinterpret_cast<const char*>(e.value.data()), static_cast<std::size_t>(e.value.size()) * sizeof(float));
  }
  put<std::uint32_t>(buf, crc(buf.data(), buf.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (buf.size() < 16 || buf.compare(0, 4, "PMUD") != 0) throw CorruptFile(name + ": not a checkpoint");
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (stored != crc(buf.data(), buf.size() - 4)) throw CorruptFile(name + ": checksum mismatch");
  Reader r(buf, buf.size() - 4, name);
  r.bytes(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw IncompatibleCheckpoint(name + ": version " + std::to_string(version) + " is not supported");
  const auto count = r.get<std::uint32_t>();
  Checkpoint out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.bytes(r.get<std::uint16_t>());
    const auto ndim = r.get<std::uint8_t>();
    std::vector<std::uint32_t> dims(ndim);
    for (auto& d : dims) d = r.get<std::uint32_t>();
    Index rows = 1, cols = 1;
    if (ndim == 1) {
      cols = dims[0];
    } else if (ndim == 2) {
      rows = dims[0];
      cols = dims[1];
    } else {
      for (std::size_t k = 0; k + 1 < dims.size(); ++k) rows *= dims[k];
      cols = ndim ? dims.back() : 1;
    }
    e.value.resize(rows, cols);
    r.read_floats(e.value.data(), static_cast<std::size_t>(rows * cols));
    out.push_back(std::move(e));
  }
  if (r.pos() != buf.size() - 4) throw CorruptFile(name + ": trailing bytes after the last entry");
  return out;
}

const CheckpointEntry* find_entry(const Checkpoint& c, const std::string& name) {
  for (const auto& e : c)
    if (e.name == name) return &e;
  return nullptr;
}

}  // namespace fgmae
