#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "elastoreg/geometry.hpp"

namespace elastoreg::textio {

// 17 significant digits: enough to round-trip any double exactly, so
// written fixtures are stable across platforms.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

double parse_double(const std::string& field, const std::string& context);

// Splits one CSV line on commas. No quoting: the formats here never need it.
std::vector<std::string> split_csv_line(const std::string& line);

// Atomic-ish text write: whole content in one stream, throws config_error on
// failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

// PointSet CSV: header `x,y,z,region,compartment`.
geom::PointSet read_pointset_csv(const std::filesystem::path& path);
std::string pointset_csv(const geom::PointSet& ps);

// Landmark CSV: header `landmark_name,side,x,y,z`, side ∈ {source,target};
// rows grouped into pairs by landmark_name (file order preserved).
std::vector<geom::LandmarkPair> read_landmarks_csv(const std::filesystem::path& path);
std::string landmarks_csv(const std::vector<geom::LandmarkPair>& pairs);

// Displacement CSV: header `x,y,z,dx,dy,dz`; rows aligned with the source
// point order.
struct DisplacementField {
  geom::Points points;
  geom::Points displacements;
};
DisplacementField read_displacement_csv(const std::filesystem::path& path);
std::string displacement_csv(const geom::Points& points, const geom::Points& displacements);

}  // namespace elastoreg::textio
