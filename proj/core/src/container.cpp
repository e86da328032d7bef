#include "difflab/container.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace difflab {

namespace {

void write_le(std::ostream& out, std::uint64_t v, int bytes) {
  char buf[8];
  for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, bytes);
}

std::uint64_t read_le(std::istream& in, int bytes, const char* what) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), bytes);
  if (in.gcount() != bytes)
    throw std::runtime_error(std::string("container: truncated while reading ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { write_le(out, v, 1); }
void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v, 4); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v, 8); }

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_le(out, bits, 8);
}

std::uint8_t read_u8(std::istream& in, const char* what) {
  return static_cast<std::uint8_t>(read_le(in, 1, what));
}
std::uint32_t read_u32(std::istream& in, const char* what) {
  return static_cast<std::uint32_t>(read_le(in, 4, what));
}
std::uint64_t read_u64(std::istream& in, const char* what) {
  return read_le(in, 8, what);
}
double read_f64(std::istream& in, const char* what) {
  std::uint64_t bits = read_le(in, 8, what);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void write_array(std::ostream& out, const std::vector<std::uint64_t>& dims,
                 const std::vector<double>& data) {
  std::uint64_t total = 1;
  for (std::uint64_t d : dims) total *= d;
  if (total != data.size())
    throw std::invalid_argument("container: array dims do not match payload size");
  write_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (std::uint64_t d : dims) write_u64(out, d);
  for (double v : data) write_f64(out, v);
}

ArrayRecord read_array(std::istream& in, const char* what) {
  ArrayRecord rec;
  std::uint32_t rank = read_u32(in, what);
  if (rank > 8)
    throw std::runtime_error(std::string("container: implausible array rank in ") + what);
  std::uint64_t total = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    rec.dims.push_back(read_u64(in, what));
    total *= rec.dims.back();
  }
  if (total > (1ULL << 32))
    throw std::runtime_error(std::string("container: implausible array size in ") + what);
  rec.data.resize(total);
  for (std::uint64_t i = 0; i < total; ++i) rec.data[i] = read_f64(in, what);
  return rec;
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("container: cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("container: write failed: " + path);
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("container: cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace difflab
