#include "adafuse/tensor_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "adafuse/error.hpp"

namespace adafuse {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'T', 'F'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(source_ + ": truncated " + what + " at byte offset " +
                       std::to_string(pos_));
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8, "tensor data");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_mdtf(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * t.rank() + 8 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_f64(out, v);
  return out;
}

Tensor decode_mdtf(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  Reader r(bytes, source);
  r.need(4, "magic");
  for (int i = 0; i < 4; ++i) {
    if (bytes[i] != static_cast<std::uint8_t>(kMagic[i])) {
      throw ParseError(source + ": bad magic at byte offset 0");
    }
  }
  r.skip(4);
  const std::size_t rank_offset = r.pos();
  const std::uint32_t rank = r.u32("rank");
  if (rank == 0) {
    throw ParseError(source + ": zero rank at byte offset " + std::to_string(rank_offset));
  }
  Shape shape;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::size_t at = r.pos();
    const std::uint32_t d = r.u32("dimension");
    if (d == 0) {
      throw ParseError(source + ": zero dimension at byte offset " + std::to_string(at));
    }
    shape.push_back(d);
    count *= d;
  }
  if (r.remaining() / 8 < count) {
    throw ParseError(source + ": truncated tensor data at byte offset " +
                     std::to_string(r.pos()) + " (need " + std::to_string(count * 8) +
                     " bytes, have " + std::to_string(r.remaining()) + ")");
  }
  std::vector<double> data(count);
  for (auto& v : data) v = r.f64();
  if (r.remaining() != 0) {
    throw ParseError(source + ": trailing bytes at byte offset " + std::to_string(r.pos()));
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_mdtf(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_mdtf(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

Tensor read_mdtf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open at byte offset 0");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_mdtf(bytes, path.string());
}

}  // namespace adafuse
