#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "guard/policy_net.hpp"

namespace guard::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'R', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T read_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("checkpoint: truncated stream");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

void write_real(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
double read_real(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

struct Header {
  std::vector<int> sizes;
  std::uint32_t action_dim = 0;
  std::uint32_t head = 0;
  std::uint64_t param_count = 0;
};

void write_header(std::ostream& out, const Header& h) {
  out.write(kMagic.data(), kMagic.size());
  write_le(out, static_cast<std::uint32_t>(h.sizes.size()));
  for (int s : h.sizes) write_le(out, static_cast<std::uint32_t>(s));
  write_le(out, h.action_dim);
  write_le(out, h.head);
  write_le(out, h.param_count);
}

Header read_header(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("checkpoint: bad magic");
  Header h;
  const auto count = read_le<std::uint32_t>(in);
  if (count < 2 || count > 64) throw std::runtime_error("checkpoint: implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) h.sizes.push_back(static_cast<int>(read_le<std::uint32_t>(in)));
  h.action_dim = read_le<std::uint32_t>(in);
  h.head = read_le<std::uint32_t>(in);
  h.param_count = read_le<std::uint64_t>(in);
  return h;
}

void write_params(std::ostream& out, const Vector& p) {
  for (Index i = 0; i < p.size(); ++i) write_real(out, p[i]);
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Vector read_params(std::istream& in, std::uint64_t n) {
  Vector p(static_cast<Index>(n));
  for (Index i = 0; i < p.size(); ++i) p[i] = read_real(in);
  return p;
}

}  // namespace

void save_policy(std::ostream& out, const GaussianPolicy& policy) {
  Header h;
  h.sizes = policy.mean_net().layer_sizes();
  h.action_dim = static_cast<std::uint32_t>(policy.act_dim());
  h.param_count = static_cast<std::uint64_t>(policy.num_params());
  write_header(out, h);
  write_params(out, policy.flat());
}

GaussianPolicy load_policy(std::istream& in) {
  const Header h = read_header(in);
  if (h.action_dim == 0 || static_cast<int>(h.action_dim) != h.sizes.back()) {
    throw std::runtime_error("checkpoint: not a policy checkpoint");
  }
  GaussianPolicy policy(Mlp::zeros(h.sizes), Vector::Zero(h.action_dim));
  if (h.param_count != static_cast<std::uint64_t>(policy.num_params())) {
    throw std::runtime_error("checkpoint: parameter count does not match architecture");
  }
  policy.set_flat(read_params(in, h.param_count));
  return policy;
}

void save_scalar_net(std::ostream& out, const ScalarNet& net) {
  Header h;
  h.sizes = net.mlp().layer_sizes();
  h.head = net.head() == OutputHead::kSoftplus ? 1u : 0u;
  h.param_count = static_cast<std::uint64_t>(net.num_params());
  write_header(out, h);
  write_params(out, net.flat());
}

ScalarNet load_scalar_net(std::istream& in) {
  const Header h = read_header(in);
  if (h.action_dim != 0 || h.sizes.back() != 1 || h.head > 1) {
    throw std::runtime_error("checkpoint: not a scalar-network checkpoint");
  }
  ScalarNet net(Mlp::zeros(h.sizes), h.head == 1 ? OutputHead::kSoftplus : OutputHead::kLinear);
  if (h.param_count != static_cast<std::uint64_t>(net.num_params())) {
    throw std::runtime_error("checkpoint: parameter count does not match architecture");
  }
  net.set_flat(read_params(in, h.param_count));
  return net;
}

}  // namespace guard::nn
