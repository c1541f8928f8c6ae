#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvhct/image.hpp"

namespace cvhct {

enum class Domain : std::uint8_t { A = 0, B = 1 };

std::string to_string(Domain d);
Domain parse_domain(const std::string& s);
inline Domain opposite(Domain d) { return d == Domain::A ? Domain::B : Domain::A; }

/// One axial CT slice in Hounsfield units.
struct CTSlice {
  Image<std::int16_t> hu;
  Domain domain = Domain::A;
  std::string source_id;

  int height() const noexcept { return hu.height(); }
  int width() const noexcept { return hu.width(); }
};

/// Raw-slice container ("CVHS").
///
/// Layout (all little-endian, 64-byte header):
///   0  char[4]  magic "CVHS"
///   4  u16      version (1)
///   6  u16      height
///   8  u16      width
///   10 i32      rescale intercept
///   14 i32      rescale slope numerator
///   18 i32      rescale slope denominator (non-zero)
///   22 u8       domain tag (0 = A, 1 = B)
///   23 ...      zero padding up to byte 64
/// followed by height*width row-major i16 stored values.
/// HU = stored * numerator / denominator + intercept, rounded to nearest.
namespace slice_format {
inline constexpr char kMagic[4] = {'C', 'V', 'H', 'S'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 64;
}  // namespace slice_format

struct SliceHeader {
  std::uint16_t version = slice_format::kVersion;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::int32_t intercept = 0;
  std::int32_t slope_num = 1;
  std::int32_t slope_den = 1;
  Domain domain = Domain::A;
};

/// Parses and validates a header. Throws FormatError on bad magic, version,
/// zero dimensions, zero slope denominator or unknown domain tag.
SliceHeader decode_slice_header(const std::uint8_t* bytes, std::size_t n);

std::vector<std::uint8_t> encode_slice(const CTSlice& slice);
CTSlice decode_slice(const std::vector<std::uint8_t>& bytes, const std::string& source_id);

/// Reads a slice; source_id defaults to the file stem.
CTSlice load_slice(const std::filesystem::path& path);
void save_slice(const CTSlice& slice, const std::filesystem::path& path);

/// JSON-lines sidecar record: {path, domain, source_id}.
struct ManifestRecord {
  std::string path;
  Domain domain = Domain::A;
  std::string source_id;
};

void write_manifest(const std::filesystem::path& file, const std::vector<ManifestRecord>& recs);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& file);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
/// Writes to a sibling temporary and renames over the target; the previous
/// file survives any failure.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace cvhct
