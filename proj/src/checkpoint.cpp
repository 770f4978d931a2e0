#include "radcls/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "radcls/config.hpp"
#include "radcls/errors.hpp"

namespace radcls {

namespace {

constexpr const char* kMagic = "RADCLS-CHECKPOINT 1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void append_array(std::string& out, const char* kind, const std::string& path, const Tensor& t) {
  out += kind;
  out += " " + path + " " + std::to_string(t.rank());
  for (std::size_t d : t.shape()) out += " " + std::to_string(d);
  out += "\n";
  const auto* bytes = reinterpret_cast<const char*>(t.data());
  out.append(bytes, t.size() * sizeof(double));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}

  std::string line() {
    const auto nl = s_.find('\n', pos_);
    if (nl == std::string::npos) throw FormatError("checkpoint: truncated header");
    std::string l = s_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return l;
  }

  void values(Tensor& t) {
    const std::size_t n = t.size() * sizeof(double);
    if (pos_ + n > s_.size()) throw FormatError("checkpoint: truncated array data");
    std::memcpy(t.data(), s_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out = std::string(kMagic) + "\n";
  for (const auto& [k, v] : model_config_entries(ck.config)) out += k + "=" + v + "\n";
  out += "arrays " + std::to_string(ck.params.params.size() + ck.params.buffers.size()) + "\n";
  for (const auto& [path, t] : ck.params.params) append_array(out, "param", path, t);
  for (const auto& [path, t] : ck.params.buffers) append_array(out, "buffer", path, t);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.line() != kMagic) throw FormatError("checkpoint: bad magic line");
  Checkpoint ck;
  std::string l;
  while (true) {
    l = r.line();
    if (l.rfind("arrays ", 0) == 0) break;
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: malformed config line '" + l + "'");
    apply_model_entry(ck.config, l.substr(0, eq), l.substr(eq + 1));
  }
  const std::size_t count = std::stoul(l.substr(7));
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream hdr(r.line());
    std::string kind, path;
    std::size_t rank = 0;
    if (!(hdr >> kind >> path >> rank) || (kind != "param" && kind != "buffer"))
      throw FormatError("checkpoint: malformed array header");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape)
      if (!(hdr >> d)) throw FormatError("checkpoint: malformed shape for " + path);
    Tensor t(shape);
    r.values(t);
    (kind == "param" ? ck.params.params : ck.params.buffers).emplace(path, std::move(t));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

ImportReport import_weights(ModelParams& target, const std::filesystem::path& weights) {
  const Checkpoint src = load_checkpoint(weights);
  ImportReport rep;
  auto copy = [&](const TensorMap& from, TensorMap& to) {
    for (const auto& [path, t] : from) {
      auto it = to.find(path);
      if (it != to.end() && it->second.same_shape(t)) {
        it->second = t;
        rep.loaded.push_back(path);
      } else {
        rep.skipped.push_back(path);
      }
    }
  };
  copy(src.params.params, target.params);
  copy(src.params.buffers, target.buffers);
  return rep;
}

}  // namespace radcls
