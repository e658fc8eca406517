#include "logonet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "logonet/error.hpp"

namespace logonet {
namespace {

constexpr char kMagic[4] = {'D', 'L', 'C', 'K'};
constexpr std::string_view kBufferPrefix = "buffer:";

class Writer {
 public:
  void bytes(const void* data, size_t n) {
    out_.append(static_cast<const char*>(data), n);
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::string& data() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  const char* take(size_t n) {
    if (n > data_.size() - pos_) {
      throw FormatError("checkpoint '" + source_ + "' is truncated at byte " +
                        std::to_string(pos_));
    }
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  uint64_t uint(int width) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(static_cast<size_t>(width)));
    uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
  }
  uint32_t u32() { return static_cast<uint32_t>(uint(4)); }
  uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint32_t n = u32();
    const char* p = take(n);
    return std::string(p, n);
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string source_;
  size_t pos_ = 0;
};

void write_tensor(Writer& w, std::string_view name, const Tensor& t) {
  w.str(name);
  w.u32(4);
  const Shape& s = t.shape();
  for (int64_t d : {s.n, s.c, s.h, s.w}) w.u64(static_cast<uint64_t>(d));
  w.u64(static_cast<uint64_t>(t.size()));
  for (double v : t.data()) w.f64(v);
}

struct Contents {
  Fingerprint fingerprint{};
  uint64_t iteration = 0;
  NetworkSpec spec;
  std::map<std::string, Tensor, std::less<>> params;
  std::map<std::string, Tensor> buffers;
};

Contents read_contents(const std::filesystem::path& path) {
  CheckpointFile file = read_checkpoint_file(path);
  Contents c;
  c.fingerprint = file.fingerprint;
  c.iteration = file.iteration;
  try {
    c.spec = spec_from_json(nlohmann::json::parse(file.spec_json));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint '" + path.string() + "' has a malformed spec: " + e.what());
  }
  for (auto& [name, t] : file.records) {
    if (name.starts_with(kBufferPrefix)) {
      c.buffers[name.substr(kBufferPrefix.size())] = std::move(t);
    } else {
      c.params[name] = std::move(t);
    }
  }
  return c;
}

bool allowlisted(std::string_view name, const std::vector<std::string>& allowlist) {
  const std::string group = parameter_group(name);
  const std::string layer = owning_layer(name);
  for (const std::string& entry : allowlist) {
    if (entry == name || entry == group || entry == layer) return true;
    if (group.size() > entry.size() && group.starts_with(entry) &&
        (group[entry.size()] == '_' || group[entry.size()] == '/')) {
      return true;
    }
  }
  return false;
}

}  // namespace

void write_checkpoint_file(const CheckpointFile& file, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.bytes(file.fingerprint.data(), file.fingerprint.size());
  w.u64(file.iteration);
  w.str(file.spec_json);
  w.u32(static_cast<uint32_t>(file.records.size()));
  for (const auto& [name, value] : file.records) write_tensor(w, name, value);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data, path.string());

  if (std::memcmp(r.take(4), kMagic, 4) != 0) {
    throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic bytes)");
  }
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint '" + path.string() + "' has unsupported version " +
                      std::to_string(version));
  }
  CheckpointFile file;
  std::memcpy(file.fingerprint.data(), r.take(32), 32);
  file.iteration = r.u64();
  file.spec_json = r.str();
  const uint32_t records = r.u32();
  for (uint32_t i = 0; i < records; ++i) {
    std::string name = r.str();
    const uint32_t rank = r.u32();
    if (rank != 4) {
      throw FormatError("checkpoint record '" + name + "' has rank " + std::to_string(rank));
    }
    Shape s;
    s.n = static_cast<int64_t>(r.u64());
    s.c = static_cast<int64_t>(r.u64());
    s.h = static_cast<int64_t>(r.u64());
    s.w = static_cast<int64_t>(r.u64());
    const uint64_t count = r.u64();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || count != static_cast<uint64_t>(s.size())) {
      throw FormatError("checkpoint record '" + name + "' has inconsistent size");
    }
    if (count > data.size() / 8) {
      throw FormatError("checkpoint '" + path.string() + "' is truncated in record '" + name + "'");
    }
    std::vector<double> values(count);
    for (auto& v : values) v = r.f64();
    file.records.emplace_back(std::move(name), Tensor(s, std::move(values)));
  }
  if (!r.done()) throw FormatError("checkpoint '" + path.string() + "' has trailing bytes");
  return file;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  CheckpointFile file;
  file.fingerprint = fingerprint(net.spec());
  file.iteration = net.iteration();
  file.spec_json = to_json(net.spec()).dump();
  for (const Parameter& p : net.parameters()) file.records.emplace_back(p.name, p.value.value());
  for (const auto& [name, value] : net.buffers()) {
    file.records.emplace_back(std::string(kBufferPrefix) + name, value);
  }
  write_checkpoint_file(file, path);
}

NetworkSpec read_checkpoint_spec(const std::filesystem::path& path) {
  return read_contents(path).spec;
}

Network load_checkpoint(const std::filesystem::path& path) {
  Contents c = read_contents(path);
  if (fingerprint(c.spec) != c.fingerprint) {
    throw FormatError("checkpoint '" + path.string() + "' spec does not match its fingerprint");
  }
  const NetworkSpec spec = c.spec;
  return load_checkpoint(path, spec);
}

Network load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected,
                        const LoadOptions& options) {
  Contents c = read_contents(path);
  const Fingerprint want = fingerprint(expected);
  if (c.fingerprint != want && options.allowlist.empty()) {
    throw ConfigError("checkpoint '" + path.string() + "' has spec fingerprint " +
                      to_hex(c.fingerprint) + " but the network expects " + to_hex(want) +
                      "; pass a surgery allowlist to load across a head change");
  }

  Network net = Network::build(expected, options.seed, options.init);
  for (Parameter& p : net.parameters()) {
    const bool allowed = allowlisted(p.name, options.allowlist);
    auto it = c.params.find(p.name);
    if (it == c.params.end()) {
      if (allowed) continue;
      throw ConfigError("checkpoint '" + path.string() + "' has no parameter '" + p.name + "'");
    }
    if (it->second.shape() != p.shape()) {
      if (allowed) continue;
      throw ConfigError("checkpoint parameter '" + p.name + "' has shape " +
                        to_string(it->second.shape()) + ", network expects " +
                        to_string(p.shape()));
    }
    if (allowed && c.fingerprint != want) continue;
    p.value = Var::leaf(std::move(it->second));
  }
  for (const auto& [name, t] : c.params) {
    if (!net.find_parameter(name) && !allowlisted(name, options.allowlist)) {
      throw ConfigError("checkpoint parameter '" + name + "' does not exist in the network");
    }
  }
  net.buffers() = std::move(c.buffers);
  net.set_iteration(c.iteration);
  return net;
}

}  // namespace logonet
