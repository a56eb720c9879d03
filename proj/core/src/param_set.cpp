#include "pfl/param_set.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pfl {

std::string_view to_string(Partition p) {
  return p == Partition::kEncoder ? "encoder" : "decoder";
}

std::string_view to_string(PartitionSel p) {
  switch (p) {
    case PartitionSel::kEncoder: return "encoder";
    case PartitionSel::kDecoder: return "decoder";
    case PartitionSel::kAll: return "all";
  }
  return "?";
}

bool selects(PartitionSel sel, Partition p) {
  switch (sel) {
    case PartitionSel::kAll: return true;
    case PartitionSel::kEncoder: return p == Partition::kEncoder;
    case PartitionSel::kDecoder: return p == Partition::kDecoder;
  }
  return false;
}

void ParamSet::add(const std::string& name, Tensor value, Partition partition) {
  if (name.empty()) throw std::invalid_argument("parameter name must be non-empty");
  auto [it, inserted] = params_.emplace(name, Param{std::move(value), partition});
  if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
}

const Param& ParamSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Param& ParamSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamSet::count_values() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

std::size_t ParamSet::count_values(Partition part) const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_)
    if (p.partition == part) n += p.value.size();
  return n;
}

ParamSet ParamSet::subset(Partition p) const {
  ParamSet out;
  for (const auto& [name, param] : params_)
    if (param.partition == p) out.params_.emplace(name, param);
  return out;
}

void ParamSet::overwrite(const ParamSet& other) {
  for (const auto& [name, param] : other.params_) params_[name] = param;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.partition != b->second.partition ||
        !a->second.value.same_shape(b->second.value)) {
      return false;
    }
  }
  return true;
}

bool ParamSet::bit_equal(const ParamSet& other) const {
  if (!same_layout(other)) return false;
  auto b = other.params_.begin();
  for (auto a = params_.begin(); a != params_.end(); ++a, ++b) {
    if (!a->second.value.bit_equal(b->second.value)) return false;
  }
  return true;
}

ParamSet merge(const ParamSet& encoder, const ParamSet& decoder) {
  ParamSet out;
  for (const auto& [name, p] : encoder) {
    if (p.partition != Partition::kEncoder) {
      throw std::invalid_argument("merge: '" + name + "' is not encoder-tagged");
    }
    out.add(name, p.value, p.partition);
  }
  for (const auto& [name, p] : decoder) {
    if (p.partition != Partition::kDecoder) {
      throw std::invalid_argument("merge: '" + name + "' is not decoder-tagged");
    }
    out.add(name, p.value, p.partition);
  }
  return out;
}

ParamSet sgd_step(const ParamSet& params, const GradMap& grads, double lr,
                  PartitionSel partition) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  ParamSet out = params;
  for (auto& [name, p] : out) {
    if (!selects(partition, p.partition)) continue;
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("no gradient for parameter " + name);
    const Tensor& g = it->second;
    if (!g.same_shape(p.value)) {
      throw ShapeError("gradient for " + name + " has shape " + g.shape_str() +
                       ", parameter has " + p.value.shape_str());
    }
    auto dst = p.value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= lr * g[i];
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'F', 'L', 'L'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
    }
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }

  std::string string(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("truncated checkpoint in name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    if (name.size() > 0xFFFF) throw CheckpointError("parameter name too long: " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.partition));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.rank()));
    for (auto d : p.value.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) put<double>(out, v);
  }
  return out;
}

ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a PFLL checkpoint (bad magic)");
  }
  Reader in(bytes.subspan(4));
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>("count");
  ParamSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = in.get<std::uint16_t>("name length");
    std::string name = in.string(len);
    const auto tag = in.get<std::uint8_t>("partition tag");
    if (tag > 1) throw CheckpointError("bad partition tag for " + name);
    const auto rank = in.get<std::uint8_t>("rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = in.get<std::uint32_t>("dimension");
      if (d == 0) throw CheckpointError("zero dimension for " + name);
      n *= d;
    }
    std::vector<double> data(n);
    for (auto& v : data) v = in.get<double>("payload");
    try {
      out.add(name, Tensor(std::move(shape), std::move(data)), static_cast<Partition>(tag));
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(e.what());
    }
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return out;
}

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed for " + path.string());
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace pfl
