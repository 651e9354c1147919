#include "psfm/scene_io.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace psfm {

namespace {

constexpr float kFlowMagic = 202021.25f;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(Err::IoFailure, "cannot open '" + path + "'");
  return f;
}

void check_dims(size_t w, size_t h, size_t cap, const std::string& path) {
  if (w == 0 || h == 0 || w > cap || h > cap || w * h > cap)
    fail(Err::DimensionOverflow, "unreasonable dimensions " + std::to_string(w) + "x" +
                                     std::to_string(h) + " in '" + path + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// .flo

DenseFlow load_flow(const std::string& path, size_t max_pixels) {
  FilePtr f = open_file(path, "rb");
  float magic = 0;
  int32_t w = 0, h = 0;
  if (std::fread(&magic, 4, 1, f.get()) != 1) fail(Err::MalformedHeader, "short file '" + path + "'");
  if (magic != kFlowMagic) fail(Err::MalformedHeader, "bad flow magic in '" + path + "'");
  if (std::fread(&w, 4, 1, f.get()) != 1 || std::fread(&h, 4, 1, f.get()) != 1)
    fail(Err::MalformedHeader, "short flow header in '" + path + "'");
  if (w <= 0 || h <= 0) fail(Err::MalformedHeader, "non-positive flow dimensions in '" + path + "'");
  check_dims(size_t(w), size_t(h), max_pixels, path);

  DenseFlow flow;
  flow.width = w;
  flow.height = h;
  size_t n = size_t(w) * h;
  flow.u.resize(n);
  flow.v.resize(n);
  flow.valid.assign(n, 1);
  std::vector<float> row(size_t(w) * 2);
  for (int y = 0; y < h; ++y) {
    if (std::fread(row.data(), 4, row.size(), f.get()) != row.size())
      fail(Err::MalformedHeader, "truncated flow data in '" + path + "'");
    for (int x = 0; x < w; ++x) {
      float fu = row[2 * x], fv = row[2 * x + 1];
      size_t i = flow.idx(x, y);
      flow.u[i] = fu;
      flow.v[i] = fv;
      if (!std::isfinite(fu) || !std::isfinite(fv)) flow.valid[i] = 0;
    }
  }
  return flow;
}

void save_flow(const DenseFlow& flow, const std::string& path) {
  FilePtr f = open_file(path, "wb");
  float magic = kFlowMagic;
  int32_t w = flow.width, h = flow.height;
  std::fwrite(&magic, 4, 1, f.get());
  std::fwrite(&w, 4, 1, f.get());
  std::fwrite(&h, 4, 1, f.get());
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::vector<float> row(size_t(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t i = flow.idx(x, y);
      row[2 * x] = flow.valid[i] ? flow.u[i] : nan;
      row[2 * x + 1] = flow.valid[i] ? flow.v[i] : nan;
    }
    if (std::fwrite(row.data(), 4, row.size(), f.get()) != row.size())
      fail(Err::IoFailure, "write failed for '" + path + "'");
  }
}

// ---------------------------------------------------------------------------
// PFM

DepthMap load_depth_pfm(const std::string& path, size_t max_pixels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Err::IoFailure, "cannot open '" + path + "'");
  std::string tag;
  long long w = 0, h = 0;
  double scale = 0;
  in >> tag >> w >> h >> scale;
  if (!in || tag != "Pf") fail(Err::MalformedHeader, "not a grayscale PFM: '" + path + "'");
  if (w <= 0 || h <= 0) fail(Err::MalformedHeader, "bad PFM dimensions in '" + path + "'");
  if (scale >= 0) fail(Err::MalformedHeader, "big-endian PFM not supported: '" + path + "'");
  check_dims(size_t(w), size_t(h), max_pixels, path);
  in.get();  // single whitespace byte after the scale field

  DepthMap d;
  d.width = int(w);
  d.height = int(h);
  size_t n = size_t(w) * h;
  d.z.resize(n);
  d.valid.assign(n, 0);
  // PFM rows are stored bottom-up.
  for (int y = int(h) - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(&d.z[d.idx(0, y)]), std::streamsize(w) * 4);
    if (!in) fail(Err::MalformedHeader, "truncated PFM data in '" + path + "'");
  }
  for (size_t i = 0; i < n; ++i)
    if (std::isfinite(d.z[i]) && d.z[i] > 0.f) d.valid[i] = 1;
  for (size_t i = 0; i < n; ++i)
    if (!d.valid[i]) d.z[i] = 0.f;
  return d;
}

void save_depth_pfm(const DepthMap& depth, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Err::IoFailure, "cannot open '" + path + "'");
  out << "Pf\n" << depth.width << " " << depth.height << "\n-1.0\n";
  std::vector<float> row(depth.width);
  for (int y = depth.height - 1; y >= 0; --y) {
    for (int x = 0; x < depth.width; ++x) {
      size_t i = depth.idx(x, y);
      row[x] = depth.valid[i] ? depth.z[i] : 0.f;
    }
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(depth.width) * 4);
  }
  if (!out) fail(Err::IoFailure, "write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Intrinsics JSON

Intrinsics load_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::IoFailure, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Err::MalformedHeader, "bad intrinsics JSON in '" + path + "': " + e.what());
  }
  for (const char* key : {"fx", "fy", "cx", "cy", "width", "height"})
    if (!j.contains(key)) fail(Err::MissingField, std::string("intrinsics missing '") + key + "'");
  Intrinsics k;
  k.fx = j["fx"].get<double>();
  k.fy = j["fy"].get<double>();
  k.cx = j["cx"].get<double>();
  k.cy = j["cy"].get<double>();
  k.width = j["width"].get<int>();
  k.height = j["height"].get<int>();
  k.validate();
  return k;
}

void save_intrinsics(const Intrinsics& k, const std::string& path) {
  nlohmann::json j{{"fx", k.fx}, {"fy", k.fy},       {"cx", k.cx},
                   {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
  std::ofstream out(path);
  if (!out) fail(Err::IoFailure, "cannot open '" + path + "'");
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// PNG (via libpng)

namespace {

struct PngRead {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngRead() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};
struct PngWrite {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWrite() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

void read_png_rows(const std::string& path, int& w, int& h, int& channels, int& bit_depth,
                   std::vector<std::vector<png_byte>>& rows) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8] = {};
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
    fail(Err::MalformedHeader, "not a PNG file: '" + path + "'");
  PngRead p;
  p.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!p.png) fail(Err::IoFailure, "libpng init failed");
  p.info = png_create_info_struct(p.png);
  if (!p.info) fail(Err::IoFailure, "libpng init failed");
  if (setjmp(png_jmpbuf(p.png))) fail(Err::MalformedHeader, "corrupt PNG: '" + path + "'");
  png_init_io(p.png, f.get());
  png_set_sig_bytes(p.png, 8);
  png_read_info(p.png, p.info);

  w = int(png_get_image_width(p.png, p.info));
  h = int(png_get_image_height(p.png, p.info));
  bit_depth = png_get_bit_depth(p.png, p.info);
  int color = png_get_color_type(p.png, p.info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(p.png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(p.png);
  if (png_get_valid(p.png, p.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(p.png);
  png_set_strip_alpha(p.png);
  png_read_update_info(p.png, p.info);

  bit_depth = png_get_bit_depth(p.png, p.info);
  channels = png_get_channels(p.png, p.info);
  size_t rowbytes = png_get_rowbytes(p.png, p.info);
  rows.assign(h, std::vector<png_byte>(rowbytes));
  std::vector<png_bytep> ptrs(h);
  for (int y = 0; y < h; ++y) ptrs[y] = rows[y].data();
  png_read_image(p.png, ptrs.data());
  png_read_end(p.png, nullptr);
}

}  // namespace

ImageRGB load_image(const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = char(std::tolower(c));

  if (ext == "ppm" || ext == "pnm") {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Err::IoFailure, "cannot open '" + path + "'");
    std::string tag;
    int w, h, maxval;
    in >> tag >> w >> h >> maxval;
    if (!in || tag != "P6" || maxval != 255)
      fail(Err::MalformedHeader, "only 8-bit binary PPM supported: '" + path + "'");
    in.get();
    ImageRGB img;
    img.width = w;
    img.height = h;
    std::vector<uint8_t> raw(size_t(3) * w * h);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!in) fail(Err::MalformedHeader, "truncated PPM data in '" + path + "'");
    img.rgb.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) img.rgb[i] = raw[i] / 255.f;
    return img;
  }

  int w, h, channels, bit_depth;
  std::vector<std::vector<png_byte>> rows;
  read_png_rows(path, w, h, channels, bit_depth, rows);
  if (bit_depth != 8) fail(Err::MalformedHeader, "expected 8-bit color PNG: '" + path + "'");
  ImageRGB img;
  img.width = w;
  img.height = h;
  img.rgb.resize(size_t(3) * w * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float r, g, b;
      if (channels >= 3) {
        r = rows[y][3 * x + 0] / 255.f;
        g = rows[y][3 * x + 1] / 255.f;
        b = rows[y][3 * x + 2] / 255.f;
      } else {
        r = g = b = rows[y][x] / 255.f;
      }
      img.set(x, y, r, g, b);
    }
  }
  return img;
}

namespace {

void write_png(const std::string& path, int w, int h, int color_type, int bit_depth,
               const std::vector<png_bytep>& rows) {
  FilePtr f = open_file(path, "wb");
  PngWrite p;
  p.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!p.png) fail(Err::IoFailure, "libpng init failed");
  p.info = png_create_info_struct(p.png);
  if (!p.info) fail(Err::IoFailure, "libpng init failed");
  if (setjmp(png_jmpbuf(p.png))) fail(Err::IoFailure, "PNG write failed: '" + path + "'");
  png_init_io(p.png, f.get());
  png_set_IHDR(p.png, p.info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(p.png, p.info);
  png_write_image(p.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(p.png, nullptr);
}

}  // namespace

void save_image_png(const ImageRGB& img, const std::string& path) {
  std::vector<std::vector<png_byte>> rows(img.height, std::vector<png_byte>(size_t(3) * img.width));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      size_t i = 3 * img.idx(x, y);
      for (int c = 0; c < 3; ++c) {
        float v = std::clamp(img.rgb[i + c], 0.f, 1.f);
        rows[y][3 * x + c] = png_byte(std::lround(v * 255.f));
      }
    }
  std::vector<png_bytep> ptrs(img.height);
  for (int y = 0; y < img.height; ++y) ptrs[y] = rows[y].data();
  write_png(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, ptrs);
}

void save_image_ppm(const ImageRGB& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Err::IoFailure, "cannot open '" + path + "'");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> raw(size_t(3) * img.width * img.height);
  for (size_t i = 0; i < raw.size(); ++i)
    raw[i] = uint8_t(std::lround(std::clamp(img.rgb[i], 0.f, 1.f) * 255.f));
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) fail(Err::IoFailure, "write failed for '" + path + "'");
}

LabelMap load_label_png(const std::string& path) {
  int w, h, channels, bit_depth;
  std::vector<std::vector<png_byte>> rows;
  read_png_rows(path, w, h, channels, bit_depth, rows);
  if (channels != 1) fail(Err::MalformedHeader, "label map must be grayscale: '" + path + "'");
  LabelMap m;
  m.width = w;
  m.height = h;
  m.labels.resize(size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (bit_depth == 16)  // PNG stores 16-bit samples big-endian
        m.labels[size_t(y) * w + x] = uint16_t(rows[y][2 * x] << 8 | rows[y][2 * x + 1]);
      else
        m.labels[size_t(y) * w + x] = rows[y][x];
    }
  return m;
}

void save_label_png(const LabelMap& labels, const std::string& path) {
  std::vector<std::vector<png_byte>> rows(labels.height,
                                          std::vector<png_byte>(size_t(2) * labels.width));
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      uint16_t v = labels.labels[size_t(y) * labels.width + x];
      rows[y][2 * x] = png_byte(v >> 8);
      rows[y][2 * x + 1] = png_byte(v & 0xff);
    }
  std::vector<png_bytep> ptrs(labels.height);
  for (int y = 0; y < labels.height; ++y) ptrs[y] = rows[y].data();
  write_png(path, labels.width, labels.height, PNG_COLOR_TYPE_GRAY, 16, ptrs);
}

std::vector<uint8_t> load_mask_png(const std::string& path, int& width, int& height) {
  int channels, bit_depth;
  std::vector<std::vector<png_byte>> rows;
  read_png_rows(path, width, height, channels, bit_depth, rows);
  std::vector<uint8_t> mask(size_t(width) * height, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      int v = bit_depth == 16 ? (rows[y][channels * 2 * x] << 8 | rows[y][channels * 2 * x + 1])
                              : rows[y][channels * x];
      mask[size_t(y) * width + x] = v != 0;
    }
  return mask;
}

}  // namespace psfm
