// Point-cloud files: whitespace XYZ and ASCII PLY. Coordinates are written
// with 9 significant digits so parse(write(c)) is stable.

#ifndef REPS_IO_HPP
#define REPS_IO_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "reps/error.hpp"
#include "reps/point_cloud.hpp"
#include "reps/scoring.hpp"
#include "reps/training.hpp"

namespace reps::io {

enum class Format { xyz, ply };

inline Format format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (ext == ".xyz" || ext == ".txt") return Format::xyz;
  if (ext == ".ply") return Format::ply;
  throw InvalidArgument("unrecognized point cloud extension '" + ext + "' (expected .xyz or .ply)");
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

inline double parse_number(std::string_view tok, std::size_t line) {
  double v = 0;
  const auto* end = tok.data() + tok.size();
  const char* begin = tok.data();
  // from_chars rejects an explicit plus sign, which some exporters write.
  if (tok.size() > 1 && tok[0] == '+' && tok[1] != '-') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("malformed number '" + std::string(tok) + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite coordinate", line);
  return v;
}

inline PointCloud finish(std::vector<double>& xyz) {
  if (xyz.empty()) throw ParseError("empty cloud");
  Matrix m = Eigen::Map<Matrix>(xyz.data(), Eigen::Index(xyz.size() / 3), 3);
  return PointCloud(std::move(m));
}

}  // namespace detail

inline PointCloud parse_xyz(std::istream& is) {
  std::vector<double> xyz;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 3) throw ParseError("expected 3 coordinates, found " + std::to_string(toks.size()), lineno);
    for (auto t : toks) xyz.push_back(detail::parse_number(t, lineno));
  }
  return detail::finish(xyz);
}

/// ASCII PLY. Reads the vertex element's x, y, z properties; other vertex
/// properties and any other elements are skipped.
inline PointCloud parse_ply(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "ply") throw ParseError("missing 'ply' magic", lineno ? lineno : 1);

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
    bool has_list = false;
  };
  std::vector<Element> elements;
  bool ascii = false;
  for (;;) {
    if (!next()) throw ParseError("unterminated header", lineno);
    const auto t = detail::split_ws(line);
    if (t.empty() || t[0] == "comment" || t[0] == "obj_info") continue;
    if (t[0] == "end_header") break;
    if (t[0] == "format") {
      if (t.size() < 2) throw ParseError("malformed format line", lineno);
      if (t[1] != "ascii") throw ParseError("binary PLY is not supported", lineno);
      ascii = true;
    } else if (t[0] == "element") {
      if (t.size() != 3) throw ParseError("malformed element line", lineno);
      Element e;
      e.name = std::string(t[1]);
      std::size_t count = 0;
      auto [p, ec] = std::from_chars(t[2].data(), t[2].data() + t[2].size(), count);
      if (ec != std::errc() || p != t[2].data() + t[2].size()) throw ParseError("malformed element count", lineno);
      e.count = count;
      elements.push_back(std::move(e));
    } else if (t[0] == "property") {
      if (elements.empty() || t.size() < 3) throw ParseError("property outside an element", lineno);
      if (t[1] == "list") elements.back().has_list = true;
      elements.back().props.emplace_back(t.back());
    } else {
      throw ParseError("unknown header keyword '" + std::string(t[0]) + "'", lineno);
    }
  }
  if (!ascii) throw ParseError("missing format line", lineno);

  std::vector<double> xyz;
  bool seen_vertex = false;
  for (const Element& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i)
        if (!next()) throw ParseError("file ends inside element '" + e.name + "'", lineno);
      continue;
    }
    seen_vertex = true;
    if (e.has_list) throw ParseError("list properties on vertices are not supported");
    int col[3] = {-1, -1, -1};
    for (std::size_t p = 0; p < e.props.size(); ++p)
      for (int a = 0; a < 3; ++a)
        if (e.props[p] == std::string(1, char('x' + a))) col[a] = int(p);
    if (col[0] < 0 || col[1] < 0 || col[2] < 0) throw ParseError("vertex element lacks x, y or z");
    xyz.reserve(e.count * 3);
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!next()) throw ParseError("vertex count mismatch: header says " + std::to_string(e.count) + ", found " +
                                        std::to_string(i), lineno);
      const auto t = detail::split_ws(line);
      if (t.size() != e.props.size())
        throw ParseError("expected " + std::to_string(e.props.size()) + " values, found " + std::to_string(t.size()),
                         lineno);
      for (int a = 0; a < 3; ++a) xyz.push_back(detail::parse_number(t[std::size_t(col[a])], lineno));
    }
  }
  if (!seen_vertex) throw ParseError("no vertex element");
  while (next())
    if (!detail::split_ws(line).empty())
      throw ParseError("vertex count mismatch: data continues past declared elements", lineno);
  return detail::finish(xyz);
}

inline PointCloud parse_cloud(std::istream& is, Format fmt) {
  return fmt == Format::xyz ? parse_xyz(is) : parse_ply(is);
}

inline PointCloud read_cloud(const std::filesystem::path& path) {
  const Format fmt = format_from_path(path);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string());
  return parse_cloud(is, fmt);
}

// =============================================================================
// Writers
// =============================================================================

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_xyz(std::ostream& os, const PointCloud& c) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3 p = c.point(i);
    os << format_real(p[0]) << ' ' << format_real(p[1]) << ' ' << format_real(p[2]) << '\n';
  }
}

inline void write_ply(std::ostream& os, const PointCloud& c) {
  os << "ply\nformat ascii 1.0\nelement vertex " << c.size()
     << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  write_xyz(os, c);
}

inline void write_cloud(std::ostream& os, const PointCloud& c, Format fmt) {
  fmt == Format::xyz ? write_xyz(os, c) : write_ply(os, c);
}

inline void write_cloud(const std::filesystem::path& path, const PointCloud& c) {
  const Format fmt = format_from_path(path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  write_cloud(os, c, fmt);
}

/// `index,x,y,z,point_score,shape_score,total`, one row per point.
inline void write_score_csv(std::ostream& os, const PointCloud& c, const ScoreTable& t) {
  reps::detail::require(t.size() == c.size(), "score csv: table size differs from cloud");
  os << "index,x,y,z,point_score,shape_score,total\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3 p = c.point(i);
    os << i << ',' << format_real(p[0]) << ',' << format_real(p[1]) << ',' << format_real(p[2]) << ','
       << format_real(t.point_score[i]) << ',' << format_real(t.shape_score[i]) << ',' << format_real(t.total[i])
       << '\n';
  }
}

// =============================================================================
// Labeled dataset directories
// =============================================================================

/// `<root>/<split>/<class>/<cloud>.{xyz,ply}`. Class labels follow the sorted
/// class directory names; clouds are read in sorted path order.
struct DirectoryDataset {
  std::vector<std::string> class_names;
  std::vector<LabeledCloud> items;
};

inline DirectoryDataset read_dataset_dir(const std::filesystem::path& root, const std::string& split) {
  namespace fs = std::filesystem;
  const fs::path base = root / split;
  if (!fs::is_directory(base)) throw ParseError("dataset: missing directory " + base.string());
  DirectoryDataset out;
  for (const auto& entry : fs::directory_iterator(base))
    if (entry.is_directory()) out.class_names.push_back(entry.path().filename().string());
  std::sort(out.class_names.begin(), out.class_names.end());
  if (out.class_names.empty()) throw ParseError("dataset: no class directories under " + base.string());
  for (std::size_t label = 0; label < out.class_names.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(base / out.class_names[label])) {
      if (!entry.is_regular_file()) continue;
      try {
        format_from_path(entry.path());
        files.push_back(entry.path());
      } catch (const InvalidArgument&) {
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        out.items.push_back(LabeledCloud{read_cloud(f), label});
      } catch (const ParseError& e) {
        throw ParseError(f.string() + ": " + e.what());
      }
    }
  }
  if (out.items.empty()) throw ParseError("dataset: no clouds under " + base.string());
  return out;
}

}  // namespace reps::io

#endif  // REPS_IO_HPP
