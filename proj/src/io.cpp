#include "navfeat/io.hpp"

#include <bit>
#include <csetjmp>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <png.h>

namespace navfeat {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

class Writer {
 public:
  void Magic(const char* m) { out_.append(m, 4); }
  template <typename T>
  void Put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out_.append(b, sizeof(T));
  }
  void Floats(const float* p, std::size_t n) {
    out_.append(reinterpret_cast<const char*>(p), n * sizeof(float));
  }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, const char* what) : bytes_(bytes), what_(what) {}

  void Magic(const char* m) {
    Need(4);
    Check(std::memcmp(bytes_.data(), m, 4) == 0, ErrorCode::kFormat,
          std::string(what_) + ": bad magic");
    pos_ = 4;
  }
  template <typename T>
  T Get() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void Floats(float* p, std::size_t n) {
    Need(n * sizeof(float));
    std::memcpy(p, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  void End() const {
    Check(pos_ == bytes_.size(), ErrorCode::kFormat, std::string(what_) + ": trailing bytes");
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(std::size_t n) const {
    Check(bytes_.size() - pos_ >= n, ErrorCode::kFormat, std::string(what_) + ": truncated");
  }
  const std::string& bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::pair<int, int> Shape(Reader& r, const char* what) {
  const auto h = r.Get<std::uint32_t>();
  const auto w = r.Get<std::uint32_t>();
  Check(h <= (1u << 20) && w <= (1u << 20), ErrorCode::kFormat, std::string(what) + ": size too large");
  return {static_cast<int>(w), static_cast<int>(h)};
}

}  // namespace

std::string EncodeGeo1(const CoordGrid& coords) {
  Writer w;
  w.Magic("GEO1");
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(coords.height()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(coords.width()));
  for (const auto& p : coords.data()) w.Floats(p.data(), 3);
  return std::move(w.str());
}

CoordGrid DecodeGeo1(const std::string& bytes) {
  Reader r(bytes, "GEO1");
  r.Magic("GEO1");
  const auto [w, h] = Shape(r, "GEO1");
  CoordGrid g(w, h);
  for (auto& p : g.data()) r.Floats(p.data(), 3);
  r.End();
  return g;
}

std::string EncodeCor1(const CorrespondenceField& field) {
  Writer w;
  w.Magic("COR1");
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(field.height()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(field.width()));
  for (std::size_t i = 0; i < field.xs().size(); ++i) {
    w.Floats(&field.xs().data()[i], 1);
    w.Floats(&field.ys().data()[i], 1);
  }
  return std::move(w.str());
}

CorrespondenceField DecodeCor1(const std::string& bytes) {
  Reader r(bytes, "COR1");
  r.Magic("COR1");
  const auto [w, h] = Shape(r, "COR1");
  CorrespondenceField f(w, h);
  for (std::size_t i = 0; i < f.xs().size(); ++i) {
    r.Floats(&f.xs().data()[i], 1);
    r.Floats(&f.ys().data()[i], 1);
  }
  r.End();
  return f;
}

std::string EncodeDfm1(const DenseFeatureMap& map) {
  Check(map.descriptors.size() == static_cast<std::size_t>(map.width) * map.height * map.dim &&
            map.detection.width() == map.width && map.detection.height() == map.height,
        ErrorCode::kInvalidArgument, "DFM1: inconsistent feature map");
  Check(map.dim > 0 && map.dim <= 65535, ErrorCode::kInvalidArgument, "DFM1: bad descriptor size");
  Writer w;
  w.Magic("DFM1");
  w.Put<std::uint16_t>(kDfm1Version);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(map.height));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(map.width));
  w.Put<std::uint16_t>(static_cast<std::uint16_t>(map.dim));
  w.Put<std::uint8_t>(map.reliability ? 2 : 1);
  w.Put<float>(map.scale);
  w.Floats(map.descriptors.data(), map.descriptors.size());
  w.Floats(map.detection.data().data(), map.detection.size());
  if (map.reliability) {
    Check(map.reliability->width() == map.width && map.reliability->height() == map.height,
          ErrorCode::kInvalidArgument, "DFM1: reliability map size");
    w.Floats(map.reliability->data().data(), map.reliability->size());
  }
  return std::move(w.str());
}

DenseFeatureMap DecodeDfm1(const std::string& bytes) {
  Reader r(bytes, "DFM1");
  r.Magic("DFM1");
  const auto version = r.Get<std::uint16_t>();
  Check(version == kDfm1Version, ErrorCode::kFormat, "DFM1: unsupported version " + std::to_string(version));
  const auto [w, h] = Shape(r, "DFM1");
  const auto dim = r.Get<std::uint16_t>();
  const auto n_det = r.Get<std::uint8_t>();
  Check(dim > 0, ErrorCode::kFormat, "DFM1: zero descriptor size");
  Check(n_det == 1 || n_det == 2, ErrorCode::kFormat, "DFM1: expected 1 or 2 detection maps");
  const auto scale = r.Get<float>();
  const std::size_t need = static_cast<std::size_t>(w) * h * (dim + n_det) * sizeof(float);
  Check(r.remaining() == need, ErrorCode::kFormat, "DFM1: body size mismatch");
  DenseFeatureMap m(w, h, dim);
  m.scale = scale;
  r.Floats(m.descriptors.data(), m.descriptors.size());
  r.Floats(m.detection.data().data(), m.detection.size());
  if (n_det == 2) {
    m.reliability = ImageF(w, h);
    r.Floats(m.reliability->data().data(), m.reliability->size());
  }
  r.End();
  return m;
}

std::string EncodeRaw1(const RawImage& img, RawSampleType type) {
  Writer w;
  w.Magic("RAW1");
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(img.height()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(img.width()));
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(type));
  for (float v : img.data()) {
    if (type == RawSampleType::kU16) {
      Check(v >= 0 && v <= 65535 && v == std::round(v), ErrorCode::kInvalidArgument,
            "RAW1: value not representable as u16");
      w.Put<std::uint16_t>(static_cast<std::uint16_t>(v));
    } else {
      w.Put<float>(v);
    }
  }
  return std::move(w.str());
}

RawImage DecodeRaw1(const std::string& bytes) {
  Reader r(bytes, "RAW1");
  r.Magic("RAW1");
  const auto [w, h] = Shape(r, "RAW1");
  const auto type = r.Get<std::uint8_t>();
  Check(type == 1 || type == 2, ErrorCode::kFormat, "RAW1: unknown sample type");
  RawImage img(w, h);
  for (auto& v : img.data())
    v = type == 1 ? static_cast<float>(r.Get<std::uint16_t>()) : r.Get<float>();
  r.End();
  return img;
}

std::string ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Check(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Check(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  Check(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path);
}

CoordGrid ReadGeo1(const std::string& path) { return DecodeGeo1(ReadFileBytes(path)); }
void WriteGeo1(const std::string& path, const CoordGrid& c) { WriteFileBytes(path, EncodeGeo1(c)); }
CorrespondenceField ReadCor1(const std::string& path) { return DecodeCor1(ReadFileBytes(path)); }
void WriteCor1(const std::string& path, const CorrespondenceField& f) {
  WriteFileBytes(path, EncodeCor1(f));
}
DenseFeatureMap ReadDfm1(const std::string& path) { return DecodeDfm1(ReadFileBytes(path)); }
void WriteDfm1(const std::string& path, const DenseFeatureMap& m) { WriteFileBytes(path, EncodeDfm1(m)); }

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void PngError(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}
void PngWarning(png_structp, png_const_charp) {}

}  // namespace

RawImage ReadPngRaw(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  Check(fp != nullptr, ErrorCode::kIo, "cannot open " + path);
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, PngError, PngWarning);
  Check(png != nullptr, ErrorCode::kIo, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  RawImage img;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kFormat, path + ": " + err);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color & PNG_COLOR_MASK_COLOR || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  depth = png_get_bit_depth(png, info);
  const auto w = static_cast<int>(png_get_image_width(png, info));
  const auto h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * static_cast<std::size_t>(h));
  rows.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = RawImage(w, h);
  for (int y = 0; y < h; ++y) {
    const png_byte* row = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < w; ++x)
      img(x, y) = depth == 16 ? static_cast<float>((row[2 * x] << 8) | row[2 * x + 1])
                              : static_cast<float>(row[x]);
  }
  return img;
}

Image8 ReadPng8(const std::string& path) {
  const RawImage raw = ReadPngRaw(path);
  Image8 img(raw.width(), raw.height());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Check(raw.data()[i] <= 255.0f, ErrorCode::kFormat, path + ": expected an 8-bit image");
    img.data()[i] = static_cast<std::uint8_t>(raw.data()[i]);
  }
  return img;
}

void WritePng8(const std::string& path, const Image8& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  Check(fp != nullptr, ErrorCode::kIo, "cannot write " + path);
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, PngError, PngWarning);
  Check(png != nullptr, ErrorCode::kIo, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIo, path + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(&img(0, y));
  if (img.height() > 0 && img.width() > 0) png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RawImage ReadRawImage(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Check(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, "RAW1", 4) == 0) return DecodeRaw1(ReadFileBytes(path));
  return ReadPngRaw(path);
}

using nlohmann::json;

std::string SidecarToJson(const GeoImage& img) {
  const auto& K = img.intrinsics.K;
  json j{{"fx", K(0, 0)}, {"fy", K(1, 1)}, {"cx", K(0, 2)}, {"cy", K(1, 2)},
         {"boresight", {img.boresight.x(), img.boresight.y(), img.boresight.z()}},
         {"cam_distance", img.cam_distance}};
  if (!img.intrinsics.IsPinhole() || K(0, 1) != 0.0)
    j["K"] = {{K(0, 0), K(0, 1), K(0, 2)}, {K(1, 0), K(1, 1), K(1, 2)}, {K(2, 0), K(2, 1), K(2, 2)}};
  if (img.light_dir) j["light_dir"] = {img.light_dir->x(), img.light_dir->y(), img.light_dir->z()};
  if (img.pixel_extent_p90) j["pixel_extent_p90"] = *img.pixel_extent_p90;
  if (img.camera_rotation) {
    const auto& q = *img.camera_rotation;
    j["camera_rotation"] = {q.w(), q.x(), q.y(), q.z()};
  }
  return j.dump(2);
}

void ApplySidecarJson(const std::string& text, GeoImage* img) {
  try {
    const json j = json::parse(text);
    if (j.contains("K")) {
      const auto rows = j.at("K").get<std::vector<std::vector<double>>>();
      Check(rows.size() == 3 && rows[0].size() == 3 && rows[1].size() == 3 && rows[2].size() == 3,
            ErrorCode::kFormat, "sidecar: K must be 3x3");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) img->intrinsics.K(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    } else {
      img->intrinsics = Intrinsics::Pinhole(j.at("fx").get<double>(), j.at("fy").get<double>(),
                                            j.at("cx").get<double>(), j.at("cy").get<double>());
    }
    auto vec3 = [&](const char* key) {
      const auto v = j.at(key).get<std::vector<double>>();
      Check(v.size() == 3, ErrorCode::kFormat, std::string("sidecar: ") + key + " needs 3 values");
      return Eigen::Vector3d(v[0], v[1], v[2]);
    };
    if (j.contains("boresight")) img->boresight = vec3("boresight").normalized();
    if (j.contains("cam_distance")) img->cam_distance = j.at("cam_distance").get<double>();
    if (j.contains("light_dir") && !j.at("light_dir").is_null()) img->light_dir = vec3("light_dir");
    if (j.contains("pixel_extent_p90") && !j.at("pixel_extent_p90").is_null())
      img->pixel_extent_p90 = j.at("pixel_extent_p90").get<double>();
    if (j.contains("camera_rotation") && !j.at("camera_rotation").is_null()) {
      const auto q = j.at("camera_rotation").get<std::vector<double>>();
      Check(q.size() == 4, ErrorCode::kFormat, "sidecar: camera_rotation needs w, x, y, z");
      img->camera_rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("sidecar: ") + e.what());
  }
}

GeoImage LoadGeoImage(const std::string& png_path) {
  namespace fs = std::filesystem;
  GeoImage g;
  const fs::path p(png_path);
  g.id = p.stem().string();
  g.image = ReadPng8(png_path);
  g.intrinsics = Intrinsics::Pinhole(1.0, 1.0, (g.image.width() - 1) / 2.0, (g.image.height() - 1) / 2.0);
  fs::path side = p;
  side.replace_extension(".json");
  if (fs::exists(side)) ApplySidecarJson(ReadFileBytes(side.string()), &g);
  fs::path geo = p;
  geo.replace_extension(".geo");
  if (fs::exists(geo)) {
    g.coords = ReadGeo1(geo.string());
    Check(g.coords.width() == g.image.width() && g.coords.height() == g.image.height(),
          ErrorCode::kFormat, geo.string() + ": backplane size differs from image");
  }
  return g;
}

namespace {

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

std::string CsvCell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

double ParseAngle(const std::string& s) {
  if (s.empty()) return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    Check(used == s.size(), ErrorCode::kFormat, "bad number: " + s);
    return v;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kFormat, "bad number: " + s);
  }
}

std::string FormatAngle(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

std::vector<PairManifestRow> ReadPairManifest(const std::string& path) {
  std::ifstream in(path);
  Check(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  std::vector<PairManifestRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto c = SplitCsv(line);
    if (header) {
      header = false;
      Check(!c.empty() && c[0] == "image_a", ErrorCode::kFormat, path + ": missing manifest header");
      continue;
    }
    Check(c.size() == 7, ErrorCode::kFormat, path + ": expected 7 columns");
    PairManifestRow r;
    r.image_a = c[0];
    r.image_b = c[1];
    r.corr_file = c[2];
    r.phi = ParseAngle(c[3]);
    r.alpha = ParseAngle(c[4]);
    r.beta = ParseAngle(c[5]);
    r.source = ParsePairSource(c[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void WritePairManifest(const std::string& path, const std::vector<PairManifestRow>& rows) {
  std::ostringstream out;
  out << "image_a,image_b,corr_file,phi,alpha,beta,source\n";
  for (const auto& r : rows)
    out << CsvCell(r.image_a) << ',' << CsvCell(r.image_b) << ',' << CsvCell(r.corr_file) << ','
        << FormatAngle(r.phi) << ',' << FormatAngle(r.alpha) << ',' << FormatAngle(r.beta) << ','
        << PairSourceName(r.source) << '\n';
  WriteFileBytes(path, out.str());
}

}  // namespace navfeat
