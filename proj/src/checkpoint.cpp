#include "rc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace rc {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError("checkpoint truncated while reading " + what);
  }
  return value;
}

}  // namespace

void write_checkpoint(const SmallCnn& model, std::ostream& out) {
  out.write(kCheckpointMagic, kMagicLen);
  for (const auto& [name, t] : model.parameters()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t e : t->shape()) put<std::uint64_t>(out, e);
    for (real v : t->data()) put<double>(out, static_cast<double>(v));
  }
}

void save_checkpoint(const SmallCnn& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(model, out);
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

void read_checkpoint(SmallCnn& model, std::istream& in) {
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) || std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0) {
    throw FormatError("not a checkpoint: bad magic bytes");
  }
  std::map<std::string, Tensor*> by_name;
  for (auto& p : model.parameters()) by_name[p.name] = p.tensor;
  std::map<std::string, bool> seen;

  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = get<std::uint32_t>(in, "name length");
    if (len > 4096) throw FormatError("checkpoint name length " + std::to_string(len) + " is implausible");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("checkpoint truncated in parameter name");
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint has unknown parameter '" + name + "'");
    const auto rank = get<std::uint32_t>(in, name + " rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get<std::uint64_t>(in, name + " extent"));
    Tensor& target = *it->second;
    if (shape != target.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                        shape_string(target.shape()));
    }
    for (auto& v : target.data()) v = static_cast<real>(get<double>(in, name + " data"));
    seen[name] = true;
  }
  for (const auto& [name, t] : by_name) {
    if (!seen.count(name)) throw FormatError("checkpoint is missing parameter '" + name + "'");
  }
}

void load_checkpoint(SmallCnn& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  read_checkpoint(model, in);
}

std::uint64_t checkpoint_digest(const SmallCnn& model) {
  std::ostringstream buf;
  write_checkpoint(model, buf);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : buf.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rc
