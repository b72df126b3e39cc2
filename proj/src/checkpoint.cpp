#include "poselift/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "poselift/config_json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written with native little-endian layout");

namespace poselift::trainer {

std::string stage_name(Stage s) {
  return s == Stage::Pretrain2D ? "pretrain2d" : "full";
}

Stage stage_from_name(const std::string& name) {
  if (name == "pretrain2d") return Stage::Pretrain2D;
  if (name == "full") return Stage::Full;
  throw FormatError("unknown stage '" + name + "'");
}

std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[4] = {'P', 'W', 'T', '1'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_f64_block(std::string& out, const std::vector<double>& values) {
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * 8);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw FormatError("checkpoint file truncated");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(
        static_cast<unsigned char>(buf[pos]) |
        (static_cast<unsigned char>(buf[pos + 1]) << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  void f64_block(std::vector<double>& values) {
    need(values.size() * 8);
    std::memcpy(values.data(), buf.data() + pos, values.size() * 8);
    pos += values.size() * 8;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

network::ParamGroup group_from_name(const std::string& g) {
  if (g == "backbone") return network::ParamGroup::Backbone;
  if (g == "intermediate") return network::ParamGroup::Intermediate;
  if (g == "embedding") return network::ParamGroup::Embedding;
  if (g == "lifting") return network::ParamGroup::Lifting;
  if (g == "camera") return network::ParamGroup::Camera;
  throw FormatError("unknown parameter group '" + g + "'");
}

std::string group_name(network::ParamGroup g) {
  switch (g) {
    case network::ParamGroup::Backbone: return "backbone";
    case network::ParamGroup::Intermediate: return "intermediate";
    case network::ParamGroup::Embedding: return "embedding";
    case network::ParamGroup::Lifting: return "lifting";
    case network::ParamGroup::Camera: return "camera";
  }
  throw FormatError("bad parameter group");
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  nlohmann::json ptable = nlohmann::json::array();
  for (const auto& e : c.params.entries)
    ptable.push_back({{"name", e.name},
                      {"shape", e.shape},
                      {"group", group_name(e.group)},
                      {"pretrained", e.pretrained}});
  nlohmann::json header = {
      {"config", config_json::to_json(c.config)},
      {"stage", stage_name(c.stage)},
      {"iteration", c.iteration},
      {"params", ptable},
      {"adadelta", {{"rho", c.opt.rho}, {"eps", c.opt.eps}}},
  };
  const std::string htext = header.dump();

  std::string out;
  out.reserve(64 + htext.size() + c.params.total_elements() * 3 * 8);
  out.append(kMagic, 4);
  put_u16(out, c.version);
  put_u32(out, static_cast<std::uint32_t>(htext.size()));
  out += htext;

  for (const auto& e : c.params.entries) put_f64_block(out, *e.data);
  for (const auto& e : c.params.entries) {
    const auto git = c.opt.accum_grad.find(e.name);
    const auto uit = c.opt.accum_update.find(e.name);
    const std::size_t n = e.data->size();
    if (git != c.opt.accum_grad.end() && git->second.size() == n) {
      put_f64_block(out, git->second);
    } else {
      for (std::size_t i = 0; i < n; ++i) put_f64(out, 0.0);
    }
    if (uit != c.opt.accum_update.end() && uit->second.size() == n) {
      put_f64_block(out, uit->second);
    } else {
      for (std::size_t i = 0; i < n; ++i) put_f64(out, 0.0);
    }
  }
  put_u32(out, static_cast<std::uint32_t>(c.gen_state.size()));
  for (std::uint64_t v : c.gen_state) put_u64(out, v);

  put_u32(out, crc32(reinterpret_cast<const unsigned char*>(out.data()), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f.good()) throw IoError("write failure on '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < 14) throw FormatError("checkpoint file truncated");
  const std::uint32_t stored_crc =
      static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 4])) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 3])) << 8) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 2])) << 16) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 1])) << 24);

  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4))
    throw FormatError("'" + path + "' is not a checkpoint file");

  Checkpoint c;
  c.version = r.u16();
  if (c.version != 1) throw FormatError("unsupported checkpoint version");

  const std::uint32_t hlen = r.u32();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  config_json::check_keys(header, {"config", "stage", "iteration", "params", "adadelta"},
                          {}, "checkpoint header");
  c.config = config_json::model_config_from_json(header.at("config"));
  c.stage = stage_from_name(header.at("stage").get<std::string>());
  c.iteration = header.at("iteration").get<std::uint64_t>();
  c.opt.rho = header.at("adadelta").at("rho").get<double>();
  c.opt.eps = header.at("adadelta").at("eps").get<double>();

  for (const nlohmann::json& p : header.at("params")) {
    config_json::check_keys(p, {"name", "shape", "group", "pretrained"}, {},
                            "checkpoint parameter");
    network::ParamStore::Entry e;
    e.name = p.at("name").get<std::string>();
    e.shape = p.at("shape").get<gradcore::Shape>();
    e.group = group_from_name(p.at("group").get<std::string>());
    e.pretrained = p.at("pretrained").get<bool>();
    e.data = std::make_shared<std::vector<double>>(gradcore::numel(e.shape), 0.0);
    if (c.params.has(e.name))
      throw FormatError("duplicate parameter '" + e.name + "' in checkpoint");
    c.params.entries.push_back(std::move(e));
  }

  for (auto& e : c.params.entries) r.f64_block(*e.data);
  for (auto& e : c.params.entries) {
    std::vector<double> eg(e.data->size()), eu(e.data->size());
    r.f64_block(eg);
    r.f64_block(eu);
    c.opt.accum_grad.emplace(e.name, std::move(eg));
    c.opt.accum_update.emplace(e.name, std::move(eu));
  }
  const std::uint32_t gcount = r.u32();
  for (std::uint32_t i = 0; i < gcount; ++i) c.gen_state.push_back(r.u64());

  if (r.pos + 4 != buf.size()) throw FormatError("checkpoint has trailing bytes");
  const std::uint32_t computed =
      crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4);
  if (computed != stored_crc)
    throw ChecksumError("checkpoint CRC mismatch (file corrupted)");
  return c;
}

}  // namespace poselift::trainer
