#include "catalog.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include <fmt/format.h>
#include <png.h>

#include "binio.hpp"

namespace bflow::catalog {

const std::vector<std::string>& numeric_columns() {
  static const std::vector<std::string> cols{"time_index", "bubble_id",    "volume",         "x_center",
                                             "y_center",   "z_center",     "aspect_ratio",   "mean_similarity"};
  return cols;
}

double column_value(const CatalogRow& row, const std::string& column) {
  if (column == "time_index") return row.time_index;
  if (column == "bubble_id") return row.bubble_id;
  if (column == "volume") return row.volume;
  if (column == "x_center") return row.x_center;
  if (column == "y_center") return row.y_center;
  if (column == "z_center") return row.z_center;
  if (column == "aspect_ratio") return row.aspect_ratio;
  if (column == "mean_similarity") return row.mean_similarity;
  throw Error(ErrorCode::InvalidArgument, "unknown column '" + column + "'");
}

std::string image_file_name(int t, int bubble_id) { return fmt::format("images/t{:06}_b{:04}.png", t, bubble_id); }

CatalogRow row_from_bubble(const bubbles::BubbleRecord& b) {
  CatalogRow r;
  r.time_index = b.time_index;
  r.bubble_id = b.bubble_id;
  r.volume = b.volume;
  r.x_center = b.centroid[0];
  r.y_center = b.centroid[1];
  r.z_center = b.centroid[2];
  r.aspect_ratio = b.aspect_ratio;
  r.mean_similarity = b.mean_similarity;
  r.is_freeboard = b.is_freeboard;
  r.image_path = image_file_name(b.time_index, b.bubble_id);
  return r;
}

nlohmann::json row_to_json(const CatalogRow& r) {
  return {{"time_index", r.time_index},   {"bubble_id", r.bubble_id},       {"volume", r.volume},
          {"x_center", r.x_center},       {"y_center", r.y_center},         {"z_center", r.z_center},
          {"aspect_ratio", r.aspect_ratio}, {"mean_similarity", r.mean_similarity}, {"is_freeboard", r.is_freeboard},
          {"image_path", r.image_path}};
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

namespace {

const char* kHeader[] = {"time_index", "bubble_id",    "volume",          "x_center",     "y_center",
                         "z_center",   "aspect_ratio", "mean_similarity", "is_freeboard", "image_path"};

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Format, fmt::format("catalog.csv: bad {} value '{}'", what, s));
  }
}

}  // namespace

std::string write_csv(const std::vector<CatalogRow>& rows) {
  std::string out;
  for (std::size_t i = 0; i < std::size(kHeader); ++i) {
    if (i) out += ',';
    out += kHeader[i];
  }
  out += "\r\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\r\n", r.time_index, r.bubble_id, r.volume, r.x_center, r.y_center,
                       r.z_center, r.aspect_ratio, r.mean_similarity, r.is_freeboard ? "true" : "false",
                       csv_escape(r.image_path));
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  const auto end_record = [&] {
    record.push_back(field);
    records.push_back(std::move(record));
    record.clear();
    field.clear();
    field_started = false;
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
      } else {
        field += c;
      }
      ++i;
      continue;
    }
    if (c == '"' && !field_started && field.empty()) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(field);
      field.clear();
      field_started = false;
    } else if (c == '\r' || c == '\n') {
      end_record();
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      field += c;
      field_started = true;
    }
    ++i;
  }
  if (quoted) throw Error(ErrorCode::Format, "catalog.csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::vector<CatalogRow> parse_csv(const std::string& text) {
  const auto records = parse_csv_records(text);
  if (records.empty()) throw Error(ErrorCode::Format, "catalog.csv: missing header");
  const auto& header = records.front();
  if (header.size() != std::size(kHeader) || !std::equal(header.begin(), header.end(), std::begin(kHeader)))
    throw Error(ErrorCode::Format, "catalog.csv: unexpected header");
  std::vector<CatalogRow> rows;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() != std::size(kHeader)) throw Error(ErrorCode::Format, fmt::format("catalog.csv: record {} has {} fields", i, f.size()));
    CatalogRow r;
    r.time_index = static_cast<std::int32_t>(parse_double(f[0], "time_index"));
    r.bubble_id = static_cast<std::int32_t>(parse_double(f[1], "bubble_id"));
    r.volume = parse_double(f[2], "volume");
    r.x_center = parse_double(f[3], "x_center");
    r.y_center = parse_double(f[4], "y_center");
    r.z_center = parse_double(f[5], "z_center");
    r.aspect_ratio = parse_double(f[6], "aspect_ratio");
    r.mean_similarity = parse_double(f[7], "mean_similarity");
    if (f[8] != "true" && f[8] != "false") throw Error(ErrorCode::Format, "catalog.csv: bad is_freeboard '" + f[8] + "'");
    r.is_freeboard = f[8] == "true";
    r.image_path = f[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

void QuerySpec::validate() const {
  for (const auto& [col, range] : ranges) {
    column_value(CatalogRow{}, col);  // throws on unknown columns
    if (!(range.first <= range.second))
      throw Error(ErrorCode::InvalidArgument, fmt::format("range for {} has lo > hi", col));
  }
  if (time_range && time_range->first > time_range->second)
    throw Error(ErrorCode::InvalidArgument, "time range has t0 > t1");
}

QuerySpec query_from_params(const std::multimap<std::string, std::string>& params) {
  QuerySpec q;
  const auto number = [](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size() || std::isnan(d)) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("parameter {} is not a number: '{}'", key, v));
    }
  };
  std::optional<std::int32_t> t0, t1;
  for (const auto& [key, value] : params) {
    if (key == "t0") {
      t0 = static_cast<std::int32_t>(number(key, value));
    } else if (key == "t1") {
      t1 = static_cast<std::int32_t>(number(key, value));
    } else if (key == "freeboard") {
      if (value != "true" && value != "false") throw Error(ErrorCode::InvalidArgument, "freeboard must be true or false");
      q.include_freeboard = value == "true";
    } else {
      const bool is_min = key.size() > 4 && key.compare(key.size() - 4, 4, "_min") == 0;
      const bool is_max = key.size() > 4 && key.compare(key.size() - 4, 4, "_max") == 0;
      if (!is_min && !is_max) throw Error(ErrorCode::InvalidArgument, "unknown query parameter '" + key + "'");
      std::string col = key.substr(0, key.size() - 4);
      if (col == "aspect") col = "aspect_ratio";
      if (col == "similarity") col = "mean_similarity";
      const auto& cols = numeric_columns();
      if (std::find(cols.begin(), cols.end(), col) == cols.end())
        throw Error(ErrorCode::InvalidArgument, "unknown query parameter '" + key + "'");
      auto [it, inserted] = q.ranges.try_emplace(col, -HUGE_VAL, HUGE_VAL);
      (is_min ? it->second.first : it->second.second) = number(key, value);
    }
  }
  if (t0 || t1) q.time_range = std::make_pair(t0.value_or(INT32_MIN), t1.value_or(INT32_MAX));
  q.validate();
  return q;
}

std::vector<CatalogRow> query(const std::vector<CatalogRow>& rows, const QuerySpec& spec) {
  spec.validate();
  std::vector<CatalogRow> out;
  for (const auto& r : rows) {
    if (r.is_freeboard && !spec.include_freeboard) continue;
    if (spec.time_range && (r.time_index < spec.time_range->first || r.time_index > spec.time_range->second)) continue;
    bool ok = true;
    for (const auto& [col, range] : spec.ranges) {
      const double v = column_value(r, col);
      if (v < range.first || v > range.second) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::pair(a.time_index, a.bubble_id) < std::pair(b.time_index, b.bubble_id);
  });
  return out;
}

std::vector<std::vector<double>> max_projection(const ScalarGrid& f) {
  const auto& d = f.spec.dims;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(d[0]), std::vector<double>(static_cast<std::size_t>(d[2]), -HUGE_VAL));
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) out[i][k] = std::max(out[i][k], f.at(i, j, k));
  return out;
}

std::vector<std::vector<double>> mean_projection(const ScalarGrid& f) {
  const auto& d = f.spec.dims;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(d[0]), std::vector<double>(static_cast<std::size_t>(d[2]), 0.0));
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) out[i][k] += f.at(i, j, k) / d[1];
  return out;
}

std::vector<std::vector<double>> y_slab(const ScalarGrid& f, int j) {
  const auto& d = f.spec.dims;
  if (j < 0 || j >= d[1]) throw Error(ErrorCode::OutOfBounds, fmt::format("slab {} outside [0, {})", j, d[1]));
  std::vector<std::vector<double>> out(static_cast<std::size_t>(d[0]), std::vector<double>(static_cast<std::size_t>(d[2])));
  for (int k = 0; k < d[2]; ++k)
    for (int i = 0; i < d[0]; ++i) out[i][k] = f.at(i, j, k);
  return out;
}

Image render_projection(const std::vector<std::size_t>& voxels, const GridSpec& spec, const RenderOptions& options) {
  if (options.scale < 1) throw Error(ErrorCode::InvalidArgument, "image scale must be >= 1");
  const int nx = spec.dims[0], nz = spec.dims[2], s = options.scale;
  Image img(nz * s, nx * s);
  const auto fill = [&](int i, int k, Rgba c) {
    const int y0 = (nx - 1 - i) * s, x0 = k * s;
    for (int y = y0; y < y0 + s; ++y)
      for (int x = x0; x < x0 + s; ++x) img.at(x, y) = c;
  };
  if (options.context) {
    if (!(options.context->spec == spec)) throw Error(ErrorCode::SpecMismatch, "context field grid differs");
    const auto mip = max_projection(*options.context);
    for (int i = 0; i < nx; ++i)
      for (int k = 0; k < nz; ++k) {
        const auto g = static_cast<std::uint8_t>(std::lround(235.0 - 135.0 * std::clamp(mip[i][k], 0.0, 1.0)));
        fill(i, k, {g, g, g, 255});
      }
  }
  for (auto v : voxels) {
    if (v >= spec.size()) throw Error(ErrorCode::OutOfBounds, "voxel index outside grid");
    const auto c = spec.ijk(v);
    fill(c[0], c[2], kBubbleColor);
  }
  return img;
}

namespace {

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

struct PngReadState {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_read_from_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + len > st->bytes->size()) png_error(png, "truncated png");
  std::memcpy(data, st->bytes->data() + st->pos, len);
  st->pos += len;
}

// Keeps libpng quiet on stderr; the message travels with the longjmp.
void png_error_to_string(png_structp png, png_const_charp msg) {
  if (auto* out = static_cast<std::string*>(png_get_error_ptr(png))) *out = msg;
  png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.width < 1 || image.height < 1) throw Error(ErrorCode::InvalidArgument, "empty image");
  std::vector<std::uint8_t> out;
  std::string message;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_to_string, png_warning_ignore);
  if (!png) throw Error(ErrorCode::Internal, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Internal, "png encoding failed: " + message);
  }
  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    auto* row = reinterpret_cast<png_bytep>(const_cast<Rgba*>(&image.at(0, y)));
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const Image& image, const std::string& path) { binio::write_file(path, encode_png(image)); }

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_to_string, png_warning_ignore);
  if (!png) throw Error(ErrorCode::Internal, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  Image img;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::Format, "png decoding failed: " + message);
  }
  PngReadState st{&bytes, 0};
  png_set_read_fn(png, &st, png_read_from_vector);
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGBA || png_get_bit_depth(png, info) != 8)
    png_error(png, "only 8-bit RGBA is supported");
  img = Image(static_cast<int>(png_get_image_width(png, info)), static_cast<int>(png_get_image_height(png, info)));
  for (int y = 0; y < img.height; ++y) png_read_row(png, reinterpret_cast<png_bytep>(&img.at(0, y)), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace bflow::catalog
