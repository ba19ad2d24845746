#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "trackrl/mlp.hpp"

namespace trackrl {
namespace {

constexpr char kMagic[4] = {'T', 'R', 'K', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}
  std::uint64_t read(int width) {
    if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) {
      throw std::runtime_error("weight file truncated");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> encode(const std::vector<int>& dims, const VectorX<float>& payload) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) put_u32(out, static_cast<std::uint32_t>(d));
  put_u64(out, static_cast<std::uint64_t>(payload.size()));
  for (Eigen::Index i = 0; i < payload.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(payload[i]));
  return out;
}

std::pair<std::vector<int>, VectorX<float>> decode(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("not a weight file (bad magic)");
  }
  Reader r(bytes);
  r.read(4);
  const auto version = static_cast<std::uint32_t>(r.read(4));
  if (version != kVersion) throw std::runtime_error("unsupported weight file version " + std::to_string(version));
  const auto count = static_cast<std::uint32_t>(r.read(4));
  std::vector<int> dims(count);
  for (auto& d : dims) d = static_cast<int>(r.read(4));
  const auto n = r.read(8);
  if (n > bytes.size()) throw std::runtime_error("weight file parameter count corrupt");
  VectorX<float> payload(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < payload.size(); ++i) {
    payload[i] = std::bit_cast<float>(static_cast<std::uint32_t>(r.read(4)));
  }
  if (!r.exhausted()) throw std::runtime_error("trailing bytes in weight file");
  return {dims, payload};
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<unsigned char> encode_weights(const Mlp<float>& net) {
  return encode(net.dims(), net.parameters());
}

Mlp<float> decode_weights(const std::vector<unsigned char>& bytes) {
  auto [dims, payload] = decode(bytes);
  Mlp<float> net(dims);
  if (payload.size() != net.num_parameters()) {
    throw std::runtime_error("weight file parameter count does not match its dims");
  }
  net.parameters() = payload;
  return net;
}

std::vector<unsigned char> encode_vector(const VectorX<float>& values) {
  return encode({static_cast<int>(values.size())}, values);
}

VectorX<float> decode_vector(const std::vector<unsigned char>& bytes) {
  auto [dims, payload] = decode(bytes);
  if (dims.size() != 1 || dims[0] != payload.size()) throw std::runtime_error("not a vector file");
  return payload;
}

void save_weights(const Mlp<float>& net, const std::string& path) {
  const auto bytes = encode_weights(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Mlp<float> load_weights(const std::string& path) { return decode_weights(read_file(path)); }

}  // namespace trackrl
