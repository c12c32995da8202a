#include "bilevel/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "bilevel/error.hpp"

namespace bilevel::nn {
namespace {

constexpr std::array<char, 4> kMagic{'B', 'L', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

enum class Kind : std::uint32_t { Dense = 0, Relu, Dropout, Flatten, Conv2d, MaxPool2 };

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

 private:
  void put(std::uint64_t v, int bytes) {
    char buf[8];
    for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf, bytes);
  }
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }

 private:
  std::uint64_t get(int bytes) {
    unsigned char buf[8];
    if (!in_.read(reinterpret_cast<char*>(buf), bytes)) {
      throw DataError(path_ + ": truncated checkpoint at byte " + std::to_string(offset_));
    }
    offset_ += static_cast<std::size_t>(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::ifstream& in_;
  std::string path_;
  std::size_t offset_ = 0;
};

std::uint32_t narrow(std::size_t v) { return static_cast<std::uint32_t>(v); }

}  // namespace

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  Writer w(out);
  w.u32(kVersion);
  w.u32(narrow(net.input_shape().size()));
  for (std::size_t d : net.input_shape()) w.u32(narrow(d));
  w.u32(narrow(net.layers().size()));
  for (const Layer& layer : net.layers()) {
    std::array<std::uint32_t, 4> rec{};
    if (const auto* d = std::get_if<Dense>(&layer)) {
      rec = {static_cast<std::uint32_t>(Kind::Dense), narrow(d->inputs), narrow(d->outputs), 0};
    } else if (std::holds_alternative<Relu>(layer)) {
      rec[0] = static_cast<std::uint32_t>(Kind::Relu);
    } else if (std::holds_alternative<Dropout>(layer)) {
      rec[0] = static_cast<std::uint32_t>(Kind::Dropout);
    } else if (std::holds_alternative<Flatten>(layer)) {
      rec[0] = static_cast<std::uint32_t>(Kind::Flatten);
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      rec = {static_cast<std::uint32_t>(Kind::Conv2d), narrow(c->in_channels),
             narrow(c->out_channels), narrow(c->kernel)};
    } else {
      rec[0] = static_cast<std::uint32_t>(Kind::MaxPool2);
    }
    for (std::uint32_t v : rec) w.u32(v);
  }
  w.u64(net.params().size());
  for (double v : net.params().values()) w.f64(v);
  if (!out) throw IoError("failed writing " + path.string());
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError(path.string() + ": not a network checkpoint (bad magic)");
  }
  Reader r(in, path.string());
  if (const auto version = r.u32(); version != kVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Shape input(r.u32());
  for (auto& d : input) d = r.u32();
  std::vector<Layer> layers(r.u32());
  for (auto& layer : layers) {
    const auto kind = r.u32();
    const std::size_t a = r.u32(), b = r.u32(), c = r.u32();
    switch (static_cast<Kind>(kind)) {
      case Kind::Dense: layer = Dense{a, b}; break;
      case Kind::Relu: layer = Relu{}; break;
      case Kind::Dropout: layer = Dropout{}; break;
      case Kind::Flatten: layer = Flatten{}; break;
      case Kind::Conv2d: layer = Conv2d{a, b, c}; break;
      case Kind::MaxPool2: layer = MaxPool2{}; break;
      default:
        throw DataError(path.string() + ": unknown layer kind " + std::to_string(kind));
    }
  }
  Network net(std::move(input), std::move(layers));
  const std::uint64_t count = r.u64();
  if (count != net.params().size()) {
    throw DataError(path.string() + ": checkpoint holds " + std::to_string(count) +
                    " parameters, architecture needs " + std::to_string(net.params().size()));
  }
  for (auto& v : net.params().values()) v = r.f64();
  return net;
}

}  // namespace bilevel::nn
