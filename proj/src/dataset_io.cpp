#include "poselift/dataset_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "poselift/config_json.hpp"

namespace poselift::synthdata {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'D', '1'};
constexpr char kSidecarMagic[5] = {'P', 'L', 'D', '1', 'S'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw FormatError("dataset file truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.good() && !in.eof()) throw IoError("read failure on '" + path + "'");
  return data;
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out.good()) throw IoError("write failure on '" + path + "'");
}

}  // namespace

std::string sidecar_path(const std::string& dataset_path) {
  return dataset_path + ".sidecar";
}

void write_dataset(const std::string& path, const Dataset& ds) {
  const std::size_t K = ds.skel.joint_count;
  const std::size_t hs = ds.config.heatmap_size;
  const std::size_t S = ds.config.image_size;

  std::string out;
  out.append(kMagic, 4);
  nlohmann::json manifest = {
      {"version", 1},
      {"gen", config_json::to_json(ds.config)},
      {"skeleton", config_json::to_json(ds.skel)},
  };
  const std::string mtext = manifest.dump();
  put_u32(out, static_cast<std::uint32_t>(mtext.size()));
  out += mtext;

  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const losses::AnnotatedSample& s = ds.samples[i];
    if (s.image.size() != S * S || s.gt_heatmaps.size() != K * hs * hs ||
        s.gt_2d.joints.size() != K || s.ref_bone_lengths_mm.size() != K - 1)
      throw ShapeMismatch("sample " + std::to_string(i) +
                          " does not match the dataset manifest");
    for (double v : s.image.values()) put_f32(out, v);
    for (double v : s.gt_heatmaps.values()) put_f32(out, v);
    for (const skeleton::Vec2& j : s.gt_2d.joints) {
      put_f32(out, j.x);
      put_f32(out, j.y);
    }
    if (s.gt_3d) {
      for (const skeleton::Vec3& j : s.gt_3d->joints) {
        put_f32(out, j.x);
        put_f32(out, j.y);
        put_f32(out, j.z);
      }
    } else {
      for (std::size_t n = 0; n < 3 * K; ++n)
        put_f32(out, std::numeric_limits<double>::quiet_NaN());
    }
    const skeleton::CameraParams cam = i < ds.cameras.size() ? ds.cameras[i]
                                                             : skeleton::CameraParams{};
    put_f32(out, cam.alpha_x);
    put_f32(out, cam.alpha_y);
    put_f32(out, cam.c_x);
    put_f32(out, cam.c_y);
    out.push_back(static_cast<char>(s.kind));
    for (double v : s.ref_bone_lengths_mm) put_f32(out, v);
  }
  write_file(path, out);

  // Sidecar with the withheld truth, same sample order.
  std::vector<std::size_t> withheld;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (!ds.samples[i].gt_3d && i < ds.withheld_3d.size() && ds.withheld_3d[i])
      withheld.push_back(i);
  if (withheld.empty()) return;

  std::string side;
  side.append(kSidecarMagic, 5);
  put_u32(side, static_cast<std::uint32_t>(withheld.size()));
  for (std::size_t i : withheld) {
    put_u32(side, static_cast<std::uint32_t>(i));
    for (const skeleton::Vec3& j : ds.withheld_3d[i]->joints) {
      put_f32(side, j.x);
      put_f32(side, j.y);
      put_f32(side, j.z);
    }
  }
  write_file(sidecar_path(path), side);
}

Dataset read_dataset(const std::string& path, bool load_sidecar) {
  const std::string buf = read_file(path);
  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4))
    throw FormatError("'" + path + "' is not a dataset file");
  const std::uint32_t mlen = r.u32();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(r.bytes(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad dataset manifest: ") + e.what());
  }
  config_json::check_keys(manifest, {"version", "gen", "skeleton"}, {}, "dataset manifest");
  if (manifest.at("version").get<int>() != 1)
    throw FormatError("unsupported dataset version");

  Dataset ds;
  ds.config = config_json::gen_config_from_json(manifest.at("gen"));
  ds.skel = config_json::skeleton_from_json(manifest.at("skeleton"));

  const std::size_t K = ds.skel.joint_count;
  const std::size_t hs = ds.config.heatmap_size;
  const std::size_t S = ds.config.image_size;
  const std::size_t N = ds.config.sample_count;

  ds.samples.reserve(N);
  ds.cameras.reserve(N);
  ds.withheld_3d.assign(N, std::nullopt);

  for (std::size_t i = 0; i < N; ++i) {
    losses::AnnotatedSample s;
    std::vector<double> img(S * S);
    for (double& v : img) v = r.f32();
    s.image = gradcore::Tensor::constant({1, S, S}, std::move(img));

    std::vector<double> heat(K * hs * hs);
    for (double& v : heat) v = r.f32();
    s.gt_heatmaps = gradcore::Tensor::constant({K, hs, hs}, std::move(heat));

    s.gt_2d.joints.resize(K);
    for (skeleton::Vec2& j : s.gt_2d.joints) {
      j.x = r.f32();
      j.y = r.f32();
    }
    std::vector<skeleton::Vec3> p3(K);
    bool has_nan = false;
    for (skeleton::Vec3& j : p3) {
      j.x = r.f32();
      j.y = r.f32();
      j.z = r.f32();
      if (std::isnan(j.x) || std::isnan(j.y) || std::isnan(j.z)) has_nan = true;
    }
    skeleton::CameraParams cam;
    cam.alpha_x = r.f32();
    cam.alpha_y = r.f32();
    cam.c_x = r.f32();
    cam.c_y = r.f32();
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw FormatError("bad sample kind byte");
    s.kind = static_cast<losses::SampleKind>(kind);
    s.ref_bone_lengths_mm.resize(K - 1);
    for (double& v : s.ref_bone_lengths_mm) v = r.f32();

    if (s.kind == losses::SampleKind::Full3D) {
      if (has_nan) throw FormatError("Full3D sample has NaN 3D data");
      s.gt_3d = skeleton::Pose3D{std::move(p3), ds.skel.root};
    }
    ds.samples.push_back(std::move(s));
    ds.cameras.push_back(cam);
  }
  if (r.pos != buf.size()) throw FormatError("trailing bytes in dataset file");

  if (load_sidecar) {
    std::ifstream probe(sidecar_path(path), std::ios::binary);
    if (probe) {
      probe.close();
      const std::string sbuf = read_file(sidecar_path(path));
      Reader sr{sbuf};
      if (sr.bytes(5) != std::string(kSidecarMagic, 5))
        throw FormatError("bad sidecar magic");
      const std::uint32_t count = sr.u32();
      for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint32_t idx = sr.u32();
        if (idx >= N) throw FormatError("sidecar index out of range");
        std::vector<skeleton::Vec3> p3(K);
        for (skeleton::Vec3& j : p3) {
          j.x = sr.f32();
          j.y = sr.f32();
          j.z = sr.f32();
        }
        ds.withheld_3d[idx] = skeleton::Pose3D{std::move(p3), ds.skel.root};
      }
    }
  }
  return ds;
}

}  // namespace poselift::synthdata
