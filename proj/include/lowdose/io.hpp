#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lowdose/errors.hpp"
#include "lowdose/field.hpp"

namespace lowdose::io {

class IoError : public Error {
public:
  using Error::Error;
};

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t'))
    s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw IoError("cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep))
    out.push_back(cur);
  if (!line.empty() && line.back() == sep)
    out.emplace_back();
  return out;
}

/// Comment lines ('# ...') written at the top of text outputs, e.g. the
/// config hash.
using Comments = std::vector<std::string>;

// ---------------------------------------------------------------- CSV maps
//
// # <comment>            (zero or more)
// nx,ny,pixel_size
// <nx>,<ny>,<pixel>
// v(0,0),v(1,0),...      one line per row iy, nx values each

inline void write_csv(std::ostream& os, const RealMap& map, const Comments& comments = {}) {
  for (const auto& c : comments)
    os << "# " << c << '\n';
  os << "nx,ny,pixel_size\n"
     << map.nx() << ',' << map.ny() << ',' << format_double(map.pixel_size()) << '\n';
  for (std::size_t iy = 0; iy < map.ny(); ++iy) {
    for (std::size_t ix = 0; ix < map.nx(); ++ix) {
      if (ix)
        os << ',';
      os << format_double(map(ix, iy));
    }
    os << '\n';
  }
}

inline RealMap read_csv(std::istream& is) {
  std::string line;
  auto next = [&]() -> bool {
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r')
        line.pop_back();
      if (line.empty() || line[0] == '#')
        continue;
      return true;
    }
    return false;
  };
  if (!next() || line.rfind("nx,ny,pixel_size", 0) != 0)
    throw IoError("map CSV: missing 'nx,ny,pixel_size' header");
  if (!next())
    throw IoError("map CSV: missing dimensions line");
  const auto dims = split(line, ',');
  if (dims.size() != 3)
    throw IoError("map CSV: dimensions line needs three fields");
  GridSpec g{static_cast<std::size_t>(parse_double(dims[0])),
             static_cast<std::size_t>(parse_double(dims[1])), parse_double(dims[2])};
  g.validate();
  std::vector<double> values;
  values.reserve(g.size());
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    if (!next())
      throw IoError("map CSV: expected " + std::to_string(g.ny) + " rows");
    const auto cells = split(line, ',');
    if (cells.size() != g.nx)
      throw IoError("map CSV: row " + std::to_string(iy) + " has wrong width");
    for (const auto& c : cells)
      values.push_back(parse_double(c));
  }
  return RealMap(g, std::move(values));
}

// ---------------------------------------------------------------- PGM / PBM

/// 16-bit binary PGM (P5, maxval 65535, big-endian). Values are mapped
/// linearly from [0, scale] where scale defaults to the map maximum; the scale
/// and pixel size are recorded in header comments so read_pgm can restore
/// physical units.
inline void write_pgm16(std::ostream& os, const RealMap& map, const Comments& comments = {},
                        double scale = 0.0) {
  if (scale <= 0.0) {
    const auto& v = map.storage();
    scale = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  }
  os << "P5\n";
  for (const auto& c : comments)
    os << "# " << c << '\n';
  os << "# scale=" << format_double(scale) << '\n'
     << "# pixel_size=" << format_double(map.pixel_size()) << '\n'
     << map.nx() << ' ' << map.ny() << "\n65535\n";
  for (std::size_t iy = 0; iy < map.ny(); ++iy) {
    for (std::size_t ix = 0; ix < map.nx(); ++ix) {
      double t = scale > 0.0 ? map(ix, iy) / scale : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
      const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
      os.write(bytes, 2);
    }
  }
}

namespace detail {

inline std::string read_token(std::istream& is, std::vector<std::string>* comments) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(is, line);
      if (comments) {
        if (!line.empty() && line.front() == ' ')
          line.erase(0, 1);
        comments->push_back(line);
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty())
        return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

inline double comment_value(const std::vector<std::string>& comments, const std::string& key,
                            double fallback) {
  for (const auto& c : comments)
    if (c.rfind(key + "=", 0) == 0)
      return parse_double(std::string_view(c).substr(key.size() + 1));
  return fallback;
}

} // namespace detail

/// Reads a 16-bit PGM written by write_pgm16 (or any P5 file with maxval
/// above 255). Without scale/pixel_size comments the values come back in
/// [0, 1] with pixel size `default_pixel`.
inline RealMap read_pgm16(std::istream& is, double default_pixel = 1.0) {
  std::vector<std::string> comments;
  if (detail::read_token(is, &comments) != "P5")
    throw IoError("PGM: expected P5 magic");
  const auto nx = static_cast<std::size_t>(parse_double(detail::read_token(is, &comments)));
  const auto ny = static_cast<std::size_t>(parse_double(detail::read_token(is, &comments)));
  const double maxval = parse_double(detail::read_token(is, &comments));
  if (maxval < 256.0 || maxval > 65535.0)
    throw IoError("PGM: only 16-bit files are supported");
  const double scale = detail::comment_value(comments, "scale", 1.0);
  const double pixel = detail::comment_value(comments, "pixel_size", default_pixel);
  RealMap map(GridSpec{nx, ny, pixel});
  for (std::size_t i = 0; i < map.size(); ++i) {
    const int hi = is.get();
    const int lo = is.get();
    if (lo == EOF || hi == EOF)
      throw IoError("PGM: truncated pixel data");
    map[i] = static_cast<double>((hi << 8) | lo) / maxval * scale;
  }
  return map;
}

/// 1-bit PBM (P4). PBM convention: 1 = black, so opaque pixels (value 0) are
/// written as 1 bits and open pixels as 0 bits.
inline void write_pbm(std::ostream& os, const RealMap& binary, const Comments& comments = {}) {
  os << "P4\n";
  for (const auto& c : comments)
    os << "# " << c << '\n';
  os << "# pixel_size=" << format_double(binary.pixel_size()) << '\n'
     << binary.nx() << ' ' << binary.ny() << '\n';
  const std::size_t row_bytes = (binary.nx() + 7) / 8;
  std::vector<unsigned char> row(row_bytes);
  for (std::size_t iy = 0; iy < binary.ny(); ++iy) {
    std::fill(row.begin(), row.end(), 0);
    for (std::size_t ix = 0; ix < binary.nx(); ++ix)
      if (binary(ix, iy) < 0.5)
        row[ix / 8] |= static_cast<unsigned char>(0x80u >> (ix % 8));
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row_bytes));
  }
}

inline RealMap read_pbm(std::istream& is, double default_pixel = 1.0) {
  std::vector<std::string> comments;
  if (detail::read_token(is, &comments) != "P4")
    throw IoError("PBM: expected P4 magic");
  const auto nx = static_cast<std::size_t>(parse_double(detail::read_token(is, &comments)));
  const auto ny = static_cast<std::size_t>(parse_double(detail::read_token(is, &comments)));
  const double pixel = detail::comment_value(comments, "pixel_size", default_pixel);
  RealMap map(GridSpec{nx, ny, pixel});
  const std::size_t row_bytes = (nx + 7) / 8;
  std::vector<unsigned char> row(row_bytes);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_bytes));
    if (!is)
      throw IoError("PBM: truncated pixel data");
    for (std::size_t ix = 0; ix < nx; ++ix)
      map(ix, iy) = (row[ix / 8] & (0x80u >> (ix % 8))) ? 0.0 : 1.0;
  }
  return map;
}

// ---------------------------------------------------------------- files

template <typename Writer>
void write_file(const std::string& path, Writer&& writer, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os)
    throw IoError("cannot open '" + path + "' for writing");
  writer(os);
  if (!os)
    throw IoError("write failed for '" + path + "'");
}

inline std::ifstream open_input(const std::string& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is)
    throw IoError("cannot open '" + path + "'");
  return is;
}

} // namespace lowdose::io
