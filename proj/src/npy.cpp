#include "kgcrf/npy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <regex>
#include <sstream>

namespace kgcrf::npy {
namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kAlign = 64;
// numpy reserves room for the first axis to grow to this many digits.
constexpr std::size_t kGrowthDigits = 21;

static_assert(std::endian::native == std::endian::little, "little-endian host required");

struct Header {
  char byte_order = '<';
  char kind = 'f';
  std::size_t item_size = 8;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

std::optional<std::string> dict_value(const std::string& dict, const std::string& key) {
  const std::regex re("'" + key + "'\\s*:\\s*('[^']*'|True|False|\\([^)]*\\))");
  std::smatch m;
  if (!std::regex_search(dict, m, re)) return std::nullopt;
  return m[1].str();
}

Header parse_header(const std::string& dict) {
  Header h;
  const auto descr = dict_value(dict, "descr");
  const auto fortran = dict_value(dict, "fortran_order");
  const auto shape = dict_value(dict, "shape");
  if (!descr || !fortran || !shape) throw FormatError("NPY header is missing a required key");

  const std::string d = descr->substr(1, descr->size() - 2);
  if (d.size() < 3) throw FormatError("unsupported dtype '" + d + "'");
  h.byte_order = d[0];
  h.kind = d[1];
  h.item_size = static_cast<std::size_t>(std::stoul(d.substr(2)));
  const bool ok = (h.kind == 'f' && (h.item_size == 8 || h.item_size == 4)) ||
                  (h.kind == 'i' && (h.item_size == 8 || h.item_size == 4)) ||
                  (h.kind == 'u' && h.item_size == 1);
  if (!ok || (h.byte_order != '<' && h.byte_order != '>' && h.byte_order != '|')) {
    throw FormatError("unsupported dtype '" + d + "'");
  }
  h.fortran_order = (*fortran == "True");

  std::string dims = shape->substr(1, shape->size() - 2);
  std::replace(dims.begin(), dims.end(), ',', ' ');
  std::istringstream is(dims);
  std::string tok;
  while (is >> tok) {
    if (!std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw FormatError("malformed shape entry '" + tok + "'");
    }
    h.shape.push_back(static_cast<std::size_t>(std::stoull(tok)));
  }
  return h;
}

template <typename T>
T load_scalar(const std::uint8_t* p, bool swap) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, p, sizeof(T));
  if (swap) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

double load_value(const Header& h, const std::uint8_t* p) {
  const bool swap = h.byte_order == '>';
  if (h.kind == 'f') {
    return h.item_size == 8 ? load_scalar<double>(p, swap)
                            : static_cast<double>(load_scalar<float>(p, swap));
  }
  if (h.kind == 'i') {
    return h.item_size == 8 ? static_cast<double>(load_scalar<std::int64_t>(p, swap))
                            : static_cast<double>(load_scalar<std::int32_t>(p, swap));
  }
  return static_cast<double>(*p);
}

std::string shape_repr(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  return s + ")";
}

std::vector<std::uint8_t> header_bytes(const std::string& descr,
                                       const std::vector<std::size_t>& shape) {
  std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " +
                     shape_repr(shape) + ", }";
  dict.append(kGrowthDigits - std::to_string(shape.front()).size(), ' ');
  const std::size_t hlen = dict.size() + 1;
  const std::size_t pad = kAlign - ((kMagicLen + 4 + hlen) % kAlign);
  const std::size_t total = hlen + pad;
  if (total > 0xffff) throw FormatError("NPY header too large for format 1.0");

  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicLen);
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(total & 0xff));
  out.push_back(static_cast<std::uint8_t>(total >> 8));
  out.insert(out.end(), dict.begin(), dict.end());
  out.insert(out.end(), pad, ' ');
  out.push_back('\n');
  return out;
}

template <typename T>
void append_scalar(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

RealGrid decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagicLen + 4 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FormatError("missing NPY magic string");
  }
  const std::uint8_t major = bytes[6];
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
    offset = 10;
  } else if (major == 2) {
    if (bytes.size() < 12) throw FormatError("truncated NPY preamble");
    header_len = load_scalar<std::uint32_t>(bytes.data() + 8, false);
    offset = 12;
  } else {
    throw FormatError("unsupported NPY version " + std::to_string(major));
  }
  if (offset + header_len > bytes.size()) throw FormatError("truncated NPY header");
  const Header h = parse_header(
      std::string(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                  bytes.begin() + static_cast<std::ptrdiff_t>(offset + header_len)));
  offset += header_len;

  if (h.shape.size() < 2 || h.shape.size() > 3) {
    throw ShapeError("expected an array of rank 2 or 3, got rank " + std::to_string(h.shape.size()));
  }
  const std::size_t rows = h.shape[0];
  const std::size_t cols = h.shape[1];
  const std::size_t chans = h.shape.size() == 3 ? h.shape[2] : 1;
  const std::size_t count = rows * cols * chans;
  if (count == 0) throw ShapeError("array has a zero-length axis");
  if (bytes.size() - offset != count * h.item_size) {
    throw FormatError("payload holds " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                      std::to_string(count * h.item_size));
  }

  std::vector<double> data(count);
  const std::uint8_t* payload = bytes.data() + offset;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t k = 0; k < chans; ++k) {
        const std::size_t src = h.fortran_order ? r + rows * (c + cols * k) : (r * cols + c) * chans + k;
        const double v = load_value(h, payload + src * h.item_size);
        if (!std::isfinite(v)) {
          throw DataError("non-finite value at (" + std::to_string(r) + ", " + std::to_string(c) +
                          ", " + std::to_string(k) + ")");
        }
        data[(r * cols + c) * chans + k] = v;
      }
    }
  }
  return RealGrid(rows, cols, chans, std::move(data));
}

RealGrid read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

std::vector<std::uint8_t> encode(const RealGrid& grid, bool squeeze_single_channel) {
  for (double v : grid.values()) {
    if (!std::isfinite(v)) throw DataError("refusing to write a non-finite value");
  }
  std::vector<std::size_t> shape{grid.height(), grid.width()};
  if (!(squeeze_single_channel && grid.channels() == 1)) shape.push_back(grid.channels());
  auto out = header_bytes("<f8", shape);
  out.reserve(out.size() + grid.size() * 8);
  for (double v : grid.values()) append_scalar(out, v);
  return out;
}

void write_tensor(const RealGrid& grid, const std::filesystem::path& path, bool squeeze_single_channel) {
  write_bytes(encode(grid, squeeze_single_channel), path);
}

std::vector<std::uint8_t> encode_labels(const LabelMap& labels) {
  auto out = header_bytes("<i8", {labels.height(), labels.width()});
  out.reserve(out.size() + labels.pixels() * 8);
  for (std::int64_t v : labels.grid().values()) append_scalar(out, v);
  return out;
}

void write_labels(const LabelMap& labels, const std::filesystem::path& path) {
  write_bytes(encode_labels(labels), path);
}

}  // namespace kgcrf::npy
