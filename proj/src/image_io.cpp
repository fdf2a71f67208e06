#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "obfloc/dataio.hpp"
#include "obfloc/error.hpp"

namespace obfloc {

namespace {

[[noreturn]] void decode_fail(const fs::path& path, const std::string& msg) {
  throw Error(ErrorCode::DecodeError, path.string() + ": " + msg);
}

bool is_png(const std::string& bytes) { return bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0; }
bool is_jpeg(const std::string& bytes) {
  return bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
         static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF;
}

// ---- libpng glue -------------------------------------------------------------

struct PngError {
  std::string message;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  err->message = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct MemoryReader {
  const std::string* bytes;
  std::size_t pos;
};

void png_read_fn(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (r->pos + n > r->bytes->size()) png_error(png, "unexpected end of file");
  std::memcpy(out, r->bytes->data() + r->pos, n);
  r->pos += n;
}

void png_write_fn(png_structp png, png_bytep data, png_size_t n) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(data), n);
}

void png_flush_fn(png_structp) {}

struct PngPixels {
  int width = 0, height = 0, channels = 0, bit_depth = 0;
  std::vector<unsigned char> data;  // rows packed, 16-bit samples big-endian
};

// Decodes to gray/RGB of native depth (8 or 16). Palette and sub-byte gray
// are expanded, alpha is dropped.
PngPixels decode_png(const std::string& bytes, const fs::path& path, bool keep_16) {
  PngError err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) decode_fail(path, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  PngPixels px;
  std::vector<png_bytep> rows;
  MemoryReader reader{&bytes, 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    decode_fail(path, "byte " + std::to_string(reader.pos) + ": PNG decode error: " + err.message);
  }
  png_set_read_fn(png, &reader, png_read_fn);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  px.bit_depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && px.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (px.bit_depth == 16 && !keep_16) png_set_strip_16(png);
  png_read_update_info(png, info);
  px.width = static_cast<int>(png_get_image_width(png, info));
  px.height = static_cast<int>(png_get_image_height(png, info));
  px.channels = png_get_channels(png, info);
  px.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  // Deflate tops out near 1032:1, so larger claims are corrupt headers.
  if (static_cast<std::uint64_t>(stride) * px.height > 4ull * bytes.size() * 1024 + (1u << 20)) {
    png_destroy_read_struct(&png, &info, nullptr);
    decode_fail(path, "implausible image size " + std::to_string(px.width) + "x" + std::to_string(px.height));
  }
  px.data.resize(stride * px.height);
  rows.resize(px.height);
  for (int y = 0; y < px.height; ++y) rows[y] = px.data.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return px;
}

std::string encode_png(int width, int height, int color_type, int bit_depth, const std::vector<png_bytep>& rows) {
  PngError err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw Error(ErrorCode::InvalidArgument, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::InvalidArgument, "PNG encode error: " + err.message);
  }
  png_set_write_fn(png, &out, png_write_fn, png_flush_fn);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// ---- libjpeg glue ------------------------------------------------------------

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RasterImage decode_jpeg(const std::string& bytes, const fs::path& path) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.output_message = [](j_common_ptr) {};
  RasterImage img;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    decode_fail(path, std::string("JPEG decode error: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.jpeg_color_space == JCS_GRAYSCALE ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img = RasterImage(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height),
                    cinfo.output_components);
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.data.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

LabelMap read_labelmap(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (!is_png(bytes)) decode_fail(path, "byte 0: not a PNG signature");
  const PngPixels px = decode_png(bytes, path, true);
  if (px.channels != 1 || px.bit_depth != 16)
    decode_fail(path, "label map must be 16-bit single-channel, got " + std::to_string(px.channels) + " channel(s) at " +
                          std::to_string(px.bit_depth) + " bits");
  LabelMap out(px.width, px.height);
  for (std::size_t i = 0; i < out.labels.size(); ++i)
    out.labels[i] = (static_cast<std::int32_t>(px.data[2 * i]) << 8) | px.data[2 * i + 1];
  return out;
}

LabelMap read_labelmap(const fs::path& path, int expected_width, int expected_height) {
  LabelMap m = read_labelmap(path);
  if (m.width != expected_width || m.height != expected_height)
    throw Error(ErrorCode::DimensionMismatch, path.string() + ": label map is " + std::to_string(m.width) + "x" +
                                                  std::to_string(m.height) + ", scene says " +
                                                  std::to_string(expected_width) + "x" + std::to_string(expected_height));
  return m;
}

void write_labelmap(const LabelMap& labels, const fs::path& path) {
  std::vector<unsigned char> buf(labels.labels.size() * 2);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const std::int32_t l = labels.labels[i];
    if (l < 0 || l > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(l) + " does not fit 16 bits");
    buf[2 * i] = static_cast<unsigned char>(l >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(l & 0xFF);
  }
  std::vector<png_bytep> rows(labels.height);
  for (int y = 0; y < labels.height; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * labels.width * 2;
  write_file(path, encode_png(labels.width, labels.height, PNG_COLOR_TYPE_GRAY, 16, rows));
}

RasterImage read_raster(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (is_jpeg(bytes)) return decode_jpeg(bytes, path);
  if (!is_png(bytes)) decode_fail(path, "byte 0: neither a PNG nor a JPEG signature");
  const PngPixels px = decode_png(bytes, path, false);
  RasterImage img(px.width, px.height, px.channels == 1 ? 1 : 3);
  if (px.channels == 1 || px.channels == 3) {
    img.data.assign(px.data.begin(), px.data.end());
  } else {  // gray+alpha already stripped; anything else is unexpected
    decode_fail(path, "unsupported channel count " + std::to_string(px.channels));
  }
  return img;
}

void write_png(const RasterImage& img, const fs::path& path) {
  img.validate();
  std::vector<png_bytep> rows(img.height);
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) rows[y] = const_cast<png_bytep>(img.data.data() + stride * y);
  write_file(path, encode_png(img.width, img.height, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, 8, rows));
}

BinaryMask read_mask(const fs::path& path) {
  const RasterImage img = read_raster(path);
  BinaryMask m(img.width, img.height);
  for (int i = 0; i < img.width * img.height; ++i)
    for (int c = 0; c < img.channels; ++c)
      if (img.data[static_cast<std::size_t>(i) * img.channels + c]) m.bits[i] = 1;
  return m;
}

}  // namespace obfloc
