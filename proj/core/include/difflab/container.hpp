#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace difflab {

// Low-level helpers for the flat binary container formats used by noise-map
// stacks and classifier checkpoints: fixed-width little-endian integers and
// IEEE-754 doubles, plus shape-prefixed float64 arrays
// (u32 rank, u64 dims..., then row-major float64 payload).
// Readers throw std::runtime_error on truncation.

void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_array(std::ostream& out, const std::vector<std::uint64_t>& dims,
                 const std::vector<double>& data);

std::uint8_t read_u8(std::istream& in, const char* what);
std::uint32_t read_u32(std::istream& in, const char* what);
std::uint64_t read_u64(std::istream& in, const char* what);
double read_f64(std::istream& in, const char* what);

struct ArrayRecord {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};
ArrayRecord read_array(std::istream& in, const char* what);

// Opens the file for binary writing/reading; throws std::runtime_error when
// the file cannot be opened.
void write_file_bytes(const std::string& path, const std::string& bytes);
std::string read_file_bytes(const std::string& path);

}  // namespace difflab
