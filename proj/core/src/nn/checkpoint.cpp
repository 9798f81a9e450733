#include "reem/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "reem/digest.hpp"
#include "reem/errors.hpp"

namespace reem::nn {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'E', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  Reader(std::string data, std::filesystem::path path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s = data_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  void raw(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t pos() const { return pos_; }
  const std::string& data() const { return data_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw IoError("corrupt checkpoint (truncated): " + path_.string());
    }
  }

  std::string data_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedArray>& arrays,
                     const CheckpointMeta& meta) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);

  put_u64(out, meta.seed);
  put_u64(out, static_cast<std::uint64_t>(meta.epoch));
  put_f64(out, meta.val_loss);
  put_string(out, meta.tag);
  put_u32(out, static_cast<std::uint32_t>(meta.extra.size()));
  for (const auto& [key, value] : meta.extra) {
    put_string(out, key);
    put_f64(out, value);
  }

  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const NamedArray& a : arrays) {
    put_string(out, a.name);
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    std::size_t expected = 1;
    for (std::size_t d : a.shape) {
      put_u64(out, d);
      expected *= d;
    }
    if (expected != a.data.size()) {
      throw ValidationError("array '" + a.name +
                            "' shape does not match its payload size");
    }
    for (double v : a.data) put_f64(out, v);
  }

  put_u64(out, fnv1a64(out));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(file)),
                   std::istreambuf_iterator<char>());

  if (data.size() < sizeof(kMagic) + 4 + 8) {
    throw IoError("corrupt checkpoint (truncated): " + path.string());
  }
  if (std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }

  // Verify the trailing digest before trusting any field.
  const std::size_t body_size = data.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(data[body_size + i]))
              << (8 * i);
  }
  if (fnv1a64(std::string_view(data.data(), body_size)) != stored) {
    throw IoError("corrupt checkpoint (digest mismatch): " + path.string());
  }

  Reader reader(data.substr(0, body_size), path);
  char magic[sizeof(kMagic)];
  reader.raw(magic, sizeof(kMagic));
  const std::uint32_t version = reader.u32();
  if (version != kVersion) {
    throw ValidationError("unsupported checkpoint version " +
                          std::to_string(version) + " in " + path.string());
  }

  Checkpoint ckpt;
  ckpt.meta.seed = reader.u64();
  ckpt.meta.epoch = static_cast<std::int64_t>(reader.u64());
  ckpt.meta.val_loss = reader.f64();
  ckpt.meta.tag = reader.str();
  const std::uint32_t extra_count = reader.u32();
  for (std::uint32_t i = 0; i < extra_count; ++i) {
    std::string key = reader.str();
    ckpt.meta.extra[key] = reader.f64();
  }

  const std::uint32_t array_count = reader.u32();
  for (std::uint32_t i = 0; i < array_count; ++i) {
    NamedArray a;
    a.name = reader.str();
    const std::uint32_t ndim = reader.u32();
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      a.shape.push_back(static_cast<std::size_t>(reader.u64()));
      total *= a.shape.back();
    }
    a.data.resize(total);
    for (std::size_t e = 0; e < total; ++e) a.data[e] = reader.f64();
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

std::vector<NamedArray> snapshot_params(const std::vector<ParamView>& params) {
  std::vector<NamedArray> arrays;
  arrays.reserve(params.size());
  for (const ParamView& p : params) {
    NamedArray a;
    a.name = p.name;
    a.shape = p.shape;
    a.data = *p.value;
    arrays.push_back(std::move(a));
  }
  return arrays;
}

void restore_params(const Checkpoint& checkpoint,
                    const std::vector<ParamView>& params) {
  for (const ParamView& p : params) {
    const NamedArray* a = checkpoint.find(p.name);
    if (!a) {
      throw ValidationError("checkpoint is missing parameter '" + p.name + "'");
    }
    if (a->data.size() != p.value->size()) {
      throw ValidationError("checkpoint parameter '" + p.name +
                            "' has size " + std::to_string(a->data.size()) +
                            ", expected " + std::to_string(p.value->size()));
    }
    *p.value = a->data;
  }
}

}  // namespace reem::nn
