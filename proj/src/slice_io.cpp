#include "cvhct/slice_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cvhct {

namespace fs = std::filesystem;

std::string to_string(Domain d) { return d == Domain::A ? "A" : "B"; }

Domain parse_domain(const std::string& s) {
  if (s == "A" || s == "a") return Domain::A;
  if (s == "B" || s == "b") return Domain::B;
  throw ParameterError("unknown domain '" + s + "'");
}

namespace {

template <typename T>
T get_le(const std::uint8_t* p) {
  std::make_unsigned_t<T> v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

template <typename T>
void put_le(std::uint8_t* p, T value) {
  auto v = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

SliceHeader decode_slice_header(const std::uint8_t* bytes, std::size_t n) {
  if (n < slice_format::kHeaderBytes) throw FormatError("slice file shorter than 64-byte header");
  if (std::memcmp(bytes, slice_format::kMagic, 4) != 0) throw FormatError("bad slice magic");
  SliceHeader h;
  h.version = get_le<std::uint16_t>(bytes + 4);
  if (h.version != slice_format::kVersion) {
    throw FormatError("unsupported slice version " + std::to_string(h.version));
  }
  h.height = get_le<std::uint16_t>(bytes + 6);
  h.width = get_le<std::uint16_t>(bytes + 8);
  h.intercept = get_le<std::int32_t>(bytes + 10);
  h.slope_num = get_le<std::int32_t>(bytes + 14);
  h.slope_den = get_le<std::int32_t>(bytes + 18);
  const std::uint8_t tag = bytes[22];
  if (h.height == 0 || h.width == 0) throw FormatError("zero slice dimension");
  if (h.slope_den == 0) throw FormatError("zero rescale slope denominator");
  if (tag > 1) throw FormatError("unknown domain tag " + std::to_string(tag));
  h.domain = static_cast<Domain>(tag);
  return h;
}

std::vector<std::uint8_t> encode_slice(const CTSlice& slice) {
  if (slice.height() <= 0 || slice.width() <= 0 || slice.height() > 65535 ||
      slice.width() > 65535) {
    throw ShapeError("slice dimensions not encodable");
  }
  std::vector<std::uint8_t> out(slice_format::kHeaderBytes + 2 * slice.hu.size(), 0);
  std::memcpy(out.data(), slice_format::kMagic, 4);
  put_le<std::uint16_t>(out.data() + 4, slice_format::kVersion);
  put_le<std::uint16_t>(out.data() + 6, static_cast<std::uint16_t>(slice.height()));
  put_le<std::uint16_t>(out.data() + 8, static_cast<std::uint16_t>(slice.width()));
  put_le<std::int32_t>(out.data() + 10, 0);
  put_le<std::int32_t>(out.data() + 14, 1);
  put_le<std::int32_t>(out.data() + 18, 1);
  out[22] = static_cast<std::uint8_t>(slice.domain);
  std::uint8_t* p = out.data() + slice_format::kHeaderBytes;
  for (std::int16_t v : slice.hu.pixels()) {
    put_le<std::int16_t>(p, v);
    p += 2;
  }
  return out;
}

CTSlice decode_slice(const std::vector<std::uint8_t>& bytes, const std::string& source_id) {
  const SliceHeader h = decode_slice_header(bytes.data(), bytes.size());
  const std::size_t count = static_cast<std::size_t>(h.height) * h.width;
  const std::size_t payload = bytes.size() - slice_format::kHeaderBytes;
  if (payload != 2 * count) {
    throw IntegrityError("slice payload has " + std::to_string(payload / 2) + " values, header says " +
                         std::to_string(h.height) + "x" + std::to_string(h.width));
  }
  const bool identity = h.intercept == 0 && h.slope_num == h.slope_den;
  std::vector<std::int16_t> hu(count);
  const std::uint8_t* p = bytes.data() + slice_format::kHeaderBytes;
  for (std::size_t i = 0; i < count; ++i, p += 2) {
    const auto stored = get_le<std::int16_t>(p);
    if (identity) {
      hu[i] = stored;
      continue;
    }
    const double v = std::round(static_cast<double>(stored) * h.slope_num / h.slope_den + h.intercept);
    if (v < -32768.0 || v > 32767.0) throw IntegrityError("rescaled HU value out of 16-bit range");
    hu[i] = static_cast<std::int16_t>(v);
  }
  CTSlice s;
  s.hu = Image<std::int16_t>(h.height, h.width, std::move(hu));
  s.domain = h.domain;
  s.source_id = source_id;
  return s;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place at '" + path.string() + "'");
  }
}

CTSlice load_slice(const fs::path& path) {
  return decode_slice(read_file_bytes(path), path.stem().string());
}

void save_slice(const CTSlice& slice, const fs::path& path) { write_file_bytes(path, encode_slice(slice)); }

void write_manifest(const fs::path& file, const std::vector<ManifestRecord>& recs) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + file.string() + "'");
  for (const auto& r : recs) {
    nlohmann::json j{{"path", r.path}, {"domain", to_string(r.domain)}, {"source_id", r.source_id}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for manifest '" + file.string() + "'");
}

std::vector<ManifestRecord> read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest '" + file.string() + "'");
  std::vector<ManifestRecord> recs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      recs.push_back({j.at("path").get<std::string>(), parse_domain(j.at("domain").get<std::string>()),
                      j.at("source_id").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest '" + file.string() + "' line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return recs;
}

}  // namespace cvhct
