#include "elastoreg/textio.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace elastoreg::textio {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double parse_double(const std::string& field, const std::string& context) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE) {
    throw config_error("bad numeric field '" + field + "' in " + context);
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw config_error("cannot open for writing: " + path.string());
  os << content;
  if (!os) throw config_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("cannot open: " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::istringstream is(read_text_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

geom::PointSet read_pointset_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "x,y,z,region,compartment") {
    throw config_error("point set CSV must start with 'x,y,z,region,compartment': " +
                       path.string());
  }
  geom::PointSet ps;
  ps.subject_id = path.stem().string();
  const std::size_t n = lines.size() - 1;
  ps.points.resize(static_cast<Eigen::Index>(n), 3);
  ps.region.reserve(n);
  ps.compartment.reserve(n);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 5) {
      throw config_error("expected 5 fields on line " + std::to_string(i + 1) + " of " +
                         path.string());
    }
    const std::string ctx = path.string() + ":" + std::to_string(i + 1);
    for (int j = 0; j < 3; ++j) {
      ps.points(static_cast<Eigen::Index>(i - 1), j) = parse_double(f[static_cast<std::size_t>(j)], ctx);
    }
    try {
      ps.region.push_back(geom::region_from_string(f[3]));
      ps.compartment.push_back(geom::compartment_from_string(f[4]));
    } catch (const argument_error& e) {
      throw config_error(std::string(e.what()) + " in " + ctx);
    }
  }
  return ps;
}

std::string pointset_csv(const geom::PointSet& ps) {
  std::string out = "x,y,z,region,compartment\n";
  for (int i = 0; i < ps.size(); ++i) {
    out += format_double(ps.points(i, 0)) + "," + format_double(ps.points(i, 1)) + "," +
           format_double(ps.points(i, 2)) + "," +
           geom::to_string(ps.region[static_cast<std::size_t>(i)]) + "," +
           geom::to_string(ps.compartment[static_cast<std::size_t>(i)]) + "\n";
  }
  return out;
}

std::vector<geom::LandmarkPair> read_landmarks_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "landmark_name,side,x,y,z") {
    throw config_error("landmark CSV must start with 'landmark_name,side,x,y,z': " +
                       path.string());
  }
  std::vector<geom::LandmarkPair> pairs;
  std::vector<std::vector<geom::Vec3>> src, tgt;
  auto pair_index = [&](const std::string& name) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (pairs[k].name == name) return k;
    }
    pairs.push_back({.name = name});
    src.emplace_back();
    tgt.emplace_back();
    return pairs.size() - 1;
  };
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    const std::string ctx = path.string() + ":" + std::to_string(i + 1);
    if (f.size() != 5) throw config_error("expected 5 fields in " + ctx);
    const std::size_t k = pair_index(f[0]);
    const geom::Vec3 p(parse_double(f[2], ctx), parse_double(f[3], ctx), parse_double(f[4], ctx));
    if (f[1] == "source") {
      src[k].push_back(p);
    } else if (f[1] == "target") {
      tgt[k].push_back(p);
    } else {
      throw config_error("landmark side must be source or target in " + ctx);
    }
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (src[k].empty() || tgt[k].empty()) {
      throw config_error("landmark '" + pairs[k].name + "' is missing a source or target cluster");
    }
    pairs[k].source_cluster.resize(static_cast<Eigen::Index>(src[k].size()), 3);
    for (std::size_t i = 0; i < src[k].size(); ++i) {
      pairs[k].source_cluster.row(static_cast<Eigen::Index>(i)) = src[k][i].transpose();
    }
    pairs[k].target_cluster.resize(static_cast<Eigen::Index>(tgt[k].size()), 3);
    for (std::size_t i = 0; i < tgt[k].size(); ++i) {
      pairs[k].target_cluster.row(static_cast<Eigen::Index>(i)) = tgt[k][i].transpose();
    }
  }
  return pairs;
}

std::string landmarks_csv(const std::vector<geom::LandmarkPair>& pairs) {
  std::string out = "landmark_name,side,x,y,z\n";
  auto emit = [&](const std::string& name, const char* side, const geom::Points& pts) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      out += name;
      out += ",";
      out += side;
      for (int j = 0; j < 3; ++j) {
        out += ",";
        out += format_double(pts(i, j));
      }
      out += "\n";
    }
  };
  for (const auto& p : pairs) {
    emit(p.name, "source", p.source_cluster);
    emit(p.name, "target", p.target_cluster);
  }
  return out;
}

DisplacementField read_displacement_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "x,y,z,dx,dy,dz") {
    throw config_error("displacement CSV must start with 'x,y,z,dx,dy,dz': " + path.string());
  }
  DisplacementField field;
  const std::size_t n = lines.size() - 1;
  field.points.resize(static_cast<Eigen::Index>(n), 3);
  field.displacements.resize(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    const std::string ctx = path.string() + ":" + std::to_string(i + 1);
    if (f.size() != 6) throw config_error("expected 6 fields in " + ctx);
    for (int j = 0; j < 3; ++j) {
      field.points(static_cast<Eigen::Index>(i - 1), j) = parse_double(f[static_cast<std::size_t>(j)], ctx);
      field.displacements(static_cast<Eigen::Index>(i - 1), j) =
          parse_double(f[static_cast<std::size_t>(j + 3)], ctx);
    }
  }
  return field;
}

std::string displacement_csv(const geom::Points& points, const geom::Points& displacements) {
  if (points.rows() != displacements.rows()) {
    throw argument_error("displacement_csv: row count mismatch");
  }
  std::string out = "x,y,z,dx,dy,dz\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (int j = 0; j < 3; ++j) {
      if (j) out += ",";
      out += format_double(points(i, j));
    }
    for (int j = 0; j < 3; ++j) {
      out += ",";
      out += format_double(displacements(i, j));
    }
    out += "\n";
  }
  return out;
}

}  // namespace elastoreg::textio
