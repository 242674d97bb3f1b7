#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "effdim/error.hpp"
#include "effdim/train.hpp"

namespace effdim {

namespace {

constexpr char kMagic[8] = {'E', 'F', 'F', 'D', 'I', 'M', 'C', 'K'};

void put_u64(std::ostream& os, std::uint64_t x) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(x >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw Error(ErrorKind::Io, "truncated checkpoint");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return x;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  if (ckpt.params.size() != ckpt.spec.parameter_count())
    throw Error(ErrorKind::Shape, "checkpoint parameters do not match the spec");
  nlohmann::json header = {
      {"input_dim", ckpt.spec.input_dim},
      {"output_dim", ckpt.spec.output_dim},
      {"hidden_layers", ckpt.spec.hidden_layers},
      {"activation", to_string(ckpt.spec.activation)},
      {"use_bias", ckpt.spec.use_bias},
      {"seed", ckpt.seed},
      {"steps", ckpt.steps},
      {"param_count", ckpt.params.size()},
  };
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  os.write(kMagic, sizeof kMagic);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double d : ckpt.params) put_u64(os, std::bit_cast<std::uint64_t>(d));
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw Error(ErrorKind::Io, path + " is not a checkpoint");
  const std::uint64_t len = get_u64(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw Error(ErrorKind::Io, "truncated checkpoint header");

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.spec.input_dim = header.at("input_dim").get<int>();
    ckpt.spec.output_dim = header.at("output_dim").get<int>();
    ckpt.spec.hidden_layers = header.at("hidden_layers").get<std::vector<int>>();
    ckpt.spec.activation = activation_from_string(header.at("activation").get<std::string>());
    ckpt.spec.use_bias = header.at("use_bias").get<bool>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.steps = header.at("steps").get<std::int64_t>();
    if (header.at("param_count").get<Eigen::Index>() != ckpt.spec.parameter_count())
      throw Error(ErrorKind::Io, "checkpoint header parameter count disagrees with its spec");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, std::string("bad checkpoint header: ") + e.what());
  }
  ckpt.params.resize(ckpt.spec.parameter_count());
  for (Eigen::Index i = 0; i < ckpt.params.size(); ++i) ckpt.params[i] = std::bit_cast<double>(get_u64(is));
  return ckpt;
}

}  // namespace effdim
