#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slidenet/errors.hpp"

namespace slidenet {

/// 8-bit grayscale frame, row-major.
struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}
  Frame(std::size_t w, std::size_t h, std::vector<std::uint8_t> px) : width(w), height(h), pixels(std::move(px)) {
    if (pixels.size() != w * h) throw ShapeError("frame pixel count does not match dimensions");
  }

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Rational {
  std::int64_t num = 30;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  Rational normalized() const {
    const auto g = std::gcd(num, den);
    return g == 0 ? *this : Rational{num / g, den / g};
  }

  Rational divided_by(std::int64_t k) const { return Rational{num, den * k}.normalized(); }

  std::string to_string() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }

  friend bool operator==(const Rational& a, const Rational& b) { return a.num * b.den == b.num * a.den; }
};

inline Rational parse_rational(std::string_view s) {
  const auto slash = s.find('/');
  try {
    if (slash == std::string_view::npos) {
      const double v = std::stod(std::string(s));
      if (v == static_cast<double>(static_cast<std::int64_t>(v))) return {static_cast<std::int64_t>(v), 1};
      return Rational{static_cast<std::int64_t>(v * 1000000.0 + 0.5), 1000000}.normalized();
    }
    return Rational{std::stoll(std::string(s.substr(0, slash))), std::stoll(std::string(s.substr(slash + 1)))}
        .normalized();
  } catch (const std::exception&) {
    throw FormatError("bad frame rate '" + std::string(s) + "'");
  }
}

/// Frames of identical dimensions with their original (source) frame numbers.
struct FrameSequence {
  std::vector<Frame> frames;
  Rational fps;
  std::vector<std::size_t> source_indices;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  std::size_t width() const { return frames.empty() ? 0 : frames.front().width; }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().height; }

  // Presentation time of frame i in seconds.
  double time_of(std::size_t i) const { return static_cast<double>(i) / fps.value(); }

  void validate() const {
    if (fps.num <= 0 || fps.den <= 0) throw InvariantError("frame rate must be positive");
    if (source_indices.size() != frames.size()) throw InvariantError("source index count != frame count");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (frames[i].width != width() || frames[i].height != height()) {
        throw ShapeError("frame " + std::to_string(i) + " is " + std::to_string(frames[i].width) + "x" +
                         std::to_string(frames[i].height) + ", expected " + std::to_string(width()) + "x" +
                         std::to_string(height()));
      }
      if (i > 0 && source_indices[i] <= source_indices[i - 1]) {
        throw InvariantError("source indices must be strictly increasing");
      }
    }
  }

  static FrameSequence from_frames(std::vector<Frame> frames, Rational fps) {
    FrameSequence s;
    s.source_indices.resize(frames.size());
    std::iota(s.source_indices.begin(), s.source_indices.end(), std::size_t{0});
    s.frames = std::move(frames);
    s.fps = fps;
    s.validate();
    return s;
  }
};

// ---------------------------------------------------------------------------
// Binary netpbm graymap (P5)

namespace detail {

class PnmHeaderReader {
 public:
  explicit PnmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t position() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = static_cast<char>(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t read_uint(const char* what) {
    skip_space_and_comments();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError(std::string("P5 ") + what + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) {
      if (pos_ >= bytes_.size()) throw TruncatedError(std::string("P5 header ends before ") + what);
      throw FormatError(std::string("P5 header: expected ") + what);
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void consume_single_space() {
    if (pos_ >= bytes_.size()) throw TruncatedError("P5 header ends before raster");
    if (!std::isspace(bytes_[pos_])) throw FormatError("P5 header: missing whitespace after maxval");
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace detail

inline Frame parse_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw UnsupportedFormatError("not a netpbm file");
  if (bytes[1] != '5') {
    throw UnsupportedFormatError(std::string("unsupported netpbm format P") + static_cast<char>(bytes[1]) +
                                 " (only binary graymap P5)");
  }
  detail::PnmHeaderReader r(bytes);
  const std::size_t width = r.read_uint("width");
  const std::size_t height = r.read_uint("height");
  const std::size_t maxval = r.read_uint("maxval");
  if (width == 0 || height == 0) throw FormatError("P5 dimensions must be positive");
  if (maxval == 0 || maxval > 255) {
    throw UnsupportedFormatError("P5 maxval " + std::to_string(maxval) + " not in [1,255]");
  }
  r.consume_single_space();
  const std::size_t need = width * height;
  const std::size_t have = bytes.size() - r.position();
  if (have < need) {
    throw TruncatedError("P5 raster truncated: " + std::to_string(have) + " of " + std::to_string(need) + " bytes");
  }
  const auto* first = bytes.data() + r.position();
  return Frame(width, height, std::vector<std::uint8_t>(first, first + need));
}

inline Frame parse_pgm(std::string_view bytes) {
  return parse_pgm(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

inline std::string write_pgm(const Frame& f) {
  std::string out = "P5\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size());
  return out;
}

}  // namespace slidenet
