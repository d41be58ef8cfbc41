#pragma once

// Image-database catalog: attribute table, multivariate range queries, X-Z projection images.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bubbles.hpp"
#include "common.hpp"

namespace bflow::catalog {

struct CatalogRow {
  std::int32_t time_index = 0;
  std::int32_t bubble_id = 0;
  double volume = 0.0;
  double x_center = 0.0;
  double y_center = 0.0;
  double z_center = 0.0;
  double aspect_ratio = 0.0;
  double mean_similarity = 0.0;
  bool is_freeboard = false;
  std::string image_path;

  bool operator==(const CatalogRow&) const = default;
};

/// Numeric columns usable in range predicates, in CSV order.
const std::vector<std::string>& numeric_columns();
double column_value(const CatalogRow& row, const std::string& column);

std::string image_file_name(int t, int bubble_id);
CatalogRow row_from_bubble(const bubbles::BubbleRecord& b);
nlohmann::json row_to_json(const CatalogRow& row);

std::string write_csv(const std::vector<CatalogRow>& rows);
std::vector<CatalogRow> parse_csv(const std::string& text);
/// RFC-4180 record splitting; exposed for tests.
std::vector<std::vector<std::string>> parse_csv_records(const std::string& text);
std::string csv_escape(const std::string& field);

struct QuerySpec {
  std::map<std::string, std::pair<double, double>> ranges;  // column -> closed [lo, hi]
  std::optional<std::pair<std::int32_t, std::int32_t>> time_range;
  bool include_freeboard = false;

  void validate() const;
};

/// Parses `t0=&t1=&<col>_min=&<col>_max=&freeboard=` parameters ("aspect" aliases aspect_ratio).
QuerySpec query_from_params(const std::multimap<std::string, std::string>& params);

/// Conjunction of all predicates, ordered by (time, id).
std::vector<CatalogRow> query(const std::vector<CatalogRow>& rows, const QuerySpec& spec);

struct Rgba {
  std::uint8_t r = 0, g = 0, b = 0, a = 0;
  bool operator==(const Rgba&) const = default;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgba> pixels;  // row-major, row 0 at the top

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {}
  Rgba& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  const Rgba& at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  }
  bool operator==(const Image&) const = default;
};

inline constexpr Rgba kBubbleColor{40, 90, 220, 255};

/// Projection along y onto an X-Z image (z to the right, x upward); each voxel becomes a
/// scale x scale block.
struct RenderOptions {
  int scale = 4;
  const ScalarGrid* context = nullptr;  // optional BSF drawn in grey behind the bubble
};

/// Maximum over y per (x, z) column.
std::vector<std::vector<double>> max_projection(const ScalarGrid& field);
/// Mean over y per (x, z) column; used for signed fields.
std::vector<std::vector<double>> mean_projection(const ScalarGrid& field);
/// One y-slab as [x][z].
std::vector<std::vector<double>> y_slab(const ScalarGrid& field, int j);

Image render_projection(const std::vector<std::size_t>& voxels, const GridSpec& spec, const RenderOptions& options);

std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const Image& image, const std::string& path);
Image decode_png(const std::vector<std::uint8_t>& bytes);

}  // namespace bflow::catalog
