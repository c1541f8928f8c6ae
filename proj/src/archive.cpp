#include "cvhct/archive.hpp"

#include <cstring>

#include <torch/torch.h>

#include "cvhct/errors.hpp"
#include "cvhct/slice_io.hpp"

namespace cvhct {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'H', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint64_t get_le(const std::uint8_t* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

static_assert(std::endian::native == std::endian::little, "archive payloads assume a little-endian host");

}  // namespace

void TensorArchive::put(const std::string& name, const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  Entry e;
  e.shape = c.sizes().vec();
  e.data.resize(static_cast<std::size_t>(c.numel()) * sizeof(float));
  if (!e.data.empty()) std::memcpy(e.data.data(), c.data_ptr<float>(), e.data.size());
  if (!entries_.count(name)) order_.push_back(name);
  entries_[name] = std::move(e);
}

void TensorArchive::put_bytes(const std::string& name, std::vector<std::uint8_t> bytes) {
  Entry e;
  e.is_tensor = false;
  e.data = std::move(bytes);
  if (!entries_.count(name)) order_.push_back(name);
  entries_[name] = std::move(e);
}

bool TensorArchive::has(const std::string& name) const { return entries_.count(name) > 0; }

torch::Tensor TensorArchive::tensor(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw FormatError("archive has no entry '" + name + "'");
  if (!it->second.is_tensor) throw FormatError("archive entry '" + name + "' is not a tensor");
  auto t = torch::empty(it->second.shape, torch::kFloat32);
  if (!it->second.data.empty()) std::memcpy(t.data_ptr<float>(), it->second.data.data(), it->second.data.size());
  return t;
}

const std::vector<std::uint8_t>& TensorArchive::bytes(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw FormatError("archive has no entry '" + name + "'");
  return it->second.data;
}

std::vector<std::string> TensorArchive::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& n : order_) {
    if (n.starts_with(prefix)) out.push_back(n);
  }
  return out;
}

std::vector<std::uint8_t> TensorArchive::encode() const {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["meta"] = meta_;
  header["entries"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& name : order_) {
    const Entry& e = entries_.at(name);
    nlohmann::json je{{"name", name}, {"kind", e.is_tensor ? "f32" : "bytes"}, {"offset", offset},
                      {"nbytes", e.data.size()}};
    if (e.is_tensor) je["shape"] = e.shape;
    header["entries"].push_back(std::move(je));
    offset += e.data.size();
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kFormatVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& name : order_) {
    const auto& d = entries_.at(name).data;
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

TensorArchive TensorArchive::decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a CVHC archive");
  const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
  if (version != kFormatVersion) throw FormatError("unsupported archive version " + std::to_string(version));
  const auto meta_len = get_le(bytes.data() + 8, 8);
  if (meta_len > bytes.size() - 16) throw IntegrityError("archive header overruns file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("archive header is not JSON: ") + e.what());
  }
  const std::size_t payload = 16 + meta_len;
  TensorArchive ar;
  try {
    ar.meta_ = header.at("meta");
    for (const auto& je : header.at("entries")) {
      const auto off = je.at("offset").get<std::uint64_t>();
      const auto n = je.at("nbytes").get<std::uint64_t>();
      if (payload + off + n > bytes.size()) throw IntegrityError("archive entry overruns file");
      Entry e;
      e.is_tensor = je.at("kind").get<std::string>() == "f32";
      e.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(payload + off),
                    bytes.begin() + static_cast<std::ptrdiff_t>(payload + off + n));
      if (e.is_tensor) {
        e.shape = je.at("shape").get<std::vector<int64_t>>();
        std::int64_t count = 1;
        for (auto s : e.shape) count *= s;
        if (static_cast<std::uint64_t>(count) * sizeof(float) != n) {
          throw IntegrityError("archive entry '" + je.at("name").get<std::string>() + "' size mismatch");
        }
      }
      const auto name = je.at("name").get<std::string>();
      ar.order_.push_back(name);
      ar.entries_[name] = std::move(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed archive header: ") + e.what());
  }
  return ar;
}

void TensorArchive::save(const std::filesystem::path& path) const { write_file_atomic(path, encode()); }

TensorArchive TensorArchive::load(const std::filesystem::path& path) { return decode(read_file_bytes(path)); }

void save_module(TensorArchive& ar, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters(/*recurse=*/true)) ar.put(prefix + "." + p.key(), p.value());
  for (const auto& b : module.named_buffers(/*recurse=*/true)) ar.put(prefix + "." + b.key(), b.value());
}

void load_module(const TensorArchive& ar, const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard guard;
  auto copy = [&](const std::string& key, torch::Tensor& dst) {
    const std::string name = prefix + "." + key;
    if (!ar.has(name)) throw FormatError("archive is missing '" + name + "'");
    const auto src = ar.tensor(name);
    if (src.sizes() != dst.sizes()) throw FormatError("shape mismatch for '" + name + "'");
    dst.copy_(src);
  };
  for (auto& p : module.named_parameters(true)) copy(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) copy(b.key(), b.value());
}

}  // namespace cvhct
