#include "flamecam/netpbm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "flamecam/error.hpp"

namespace flamecam {

Image make_image(int height, int width, int channels, uint8_t fill) {
  if (height < 0 || width < 0 || (channels != 1 && channels != 3))
    fail(Errc::kInvalidArgument, "bad image dimensions");
  Image im;
  im.height = height;
  im.width = width;
  im.channels = channels;
  im.pixels.assign(static_cast<size_t>(height) * width * channels, fill);
  return im;
}

std::vector<uint8_t> encode_netpbm(const Image& image) {
  if (image.channels != 1 && image.channels != 3)
    fail(Errc::kInvalidArgument, "netpbm supports 1 or 3 channels");
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") +
                             "\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

namespace {

class HeaderScanner {
 public:
  explicit HeaderScanner(const std::vector<uint8_t>& b) : b_(b) {}

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_]))
      fail(Errc::kInvalidArgument, "malformed netpbm header");
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (v > (1 << 24)) fail(Errc::kInvalidArgument, "netpbm dimension too large");
    }
    return static_cast<int>(v);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_]))
      fail(Errc::kInvalidArgument, "malformed netpbm header");
    return pos_ + 1;
  }

  size_t pos_ = 2;

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }
  const std::vector<uint8_t>& b_;
};

}  // namespace

Image decode_netpbm(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    fail(Errc::kInvalidArgument, "not a binary PGM/PPM file");
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderScanner scan(bytes);
  const int width = scan.next_int();
  const int height = scan.next_int();
  const int maxval = scan.next_int();
  if (maxval != 255) fail(Errc::kInvalidArgument, "only maxval 255 is supported");
  const size_t start = scan.raster_start();
  const size_t n = static_cast<size_t>(width) * height * channels;
  if (bytes.size() - start < n) fail(Errc::kInvalidArgument, "netpbm raster truncated");
  Image im = make_image(height, width, channels);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(start),
            bytes.begin() + static_cast<std::ptrdiff_t>(start + n), im.pixels.begin());
  return im;
}

Image read_netpbm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::kIo, "cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  return decode_netpbm(bytes);
}

void write_netpbm(const Image& image, const std::string& path) {
  const auto bytes = encode_netpbm(image);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::kIo, "cannot open '" + path + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(Errc::kIo, "write to '" + path + "' failed");
}

}  // namespace flamecam
