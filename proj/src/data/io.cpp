#include "bilevel/data/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "bilevel/error.hpp"

namespace bilevel::data {
namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw DataError(path.string() + ": truncated header at byte " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char buf[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(buf, 4);
}

unsigned char to_byte(double v) {
  const double scaled = std::round(v * 255.0);
  return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

std::size_t resolve_classes(const std::vector<int>& labels, std::optional<std::size_t> classes) {
  if (classes) return *classes;
  int top = -1;
  for (int y : labels) top = std::max(top, y);
  return static_cast<std::size_t>(top + 1);
}

Dataset load_idx(const std::filesystem::path& prefix, std::optional<std::size_t> classes) {
  const auto image_path = idx_images_path(prefix);
  const auto label_path = idx_labels_path(prefix);
  const auto images = read_file(image_path);
  const auto labels = read_file(label_path);

  if (const auto magic = read_be32(images, 0, image_path); magic != kImagesMagic) {
    throw DataError(image_path.string() + ": bad magic number at byte 0");
  }
  const std::size_t count = read_be32(images, 4, image_path);
  const std::size_t rows = read_be32(images, 8, image_path);
  const std::size_t cols = read_be32(images, 12, image_path);
  const std::size_t payload = count * rows * cols;
  if (images.size() != 16 + payload) {
    throw DataError(image_path.string() + ": expected " + std::to_string(16 + payload) +
                    " bytes for " + std::to_string(count) + " images of " + std::to_string(rows) +
                    "x" + std::to_string(cols) + ", payload ends at byte " +
                    std::to_string(images.size()));
  }
  if (const auto magic = read_be32(labels, 0, label_path); magic != kLabelsMagic) {
    throw DataError(label_path.string() + ": bad magic number at byte 0");
  }
  if (const std::size_t label_count = read_be32(labels, 4, label_path); label_count != count) {
    throw DataError(label_path.string() + ": dimension mismatch at byte 4: " +
                    std::to_string(label_count) + " labels for " + std::to_string(count) +
                    " images");
  }
  if (labels.size() != 8 + count) {
    throw DataError(label_path.string() + ": expected " + std::to_string(8 + count) +
                    " bytes, payload ends at byte " + std::to_string(labels.size()));
  }

  std::vector<double> values(payload);
  for (std::size_t i = 0; i < payload; ++i) values[i] = images[16 + i] / 255.0;
  Dataset ds;
  ds.inputs = nn::Tensor({count, rows, cols}, std::move(values));
  ds.labels.assign(labels.begin() + 8, labels.end());
  ds.class_count = resolve_classes(ds.labels, classes);
  return ds;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& field, std::size_t line, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used == field.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError(path.string() + ":" + std::to_string(line) + ": not a number: '" + field + "'");
}

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ":1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 2 || header[0] != "label") {
    throw DataError(path.string() + ":1: header must be label,p0,...,pN");
  }
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != "p" + std::to_string(i - 1)) {
      throw DataError(path.string() + ":1: expected column p" + std::to_string(i - 1) + ", got '" +
                      header[i] + "'");
    }
  }
  const std::size_t pixels = header.size() - 1;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    const double label = parse_number(fields[0], line_no, path);
    if (label < 0 || label != std::floor(label)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad label '" + fields[0] +
                      "'");
    }
    labels.push_back(static_cast<int>(label));
    for (std::size_t p = 1; p < fields.size(); ++p) {
      const double v = parse_number(fields[p], line_no, path);
      if (v < 0.0 || v > 255.0) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": pixel value " +
                        fields[p] + " outside [0, 255]");
      }
      values.push_back(v / 255.0);
    }
  }
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
  nn::Shape shape = side * side == pixels ? nn::Shape{labels.size(), side, side}
                                          : nn::Shape{labels.size(), pixels};
  Dataset ds;
  ds.inputs = nn::Tensor(std::move(shape), std::move(values));
  ds.labels = std::move(labels);
  ds.class_count = resolve_classes(ds.labels, classes);
  return ds;
}

}  // namespace

Format parse_format(std::string_view name) {
  if (name == "idx") return Format::Idx;
  if (name == "csv") return Format::Csv;
  throw ConfigError("unknown dataset format '" + std::string(name) + "' (expected idx or csv)");
}

std::filesystem::path idx_images_path(const std::filesystem::path& prefix) {
  return prefix.string() + "-images-idx3-ubyte";
}

std::filesystem::path idx_labels_path(const std::filesystem::path& prefix) {
  return prefix.string() + "-labels-idx1-ubyte";
}

Dataset load_dataset(const std::filesystem::path& path, Format format,
                     std::optional<std::size_t> class_count, Split split) {
  Dataset ds = format == Format::Idx ? load_idx(path, class_count) : load_csv(path, class_count);
  ds.split = split;
  ds.check();
  return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& prefix) {
  if (ds.inputs.rank() != 3) {
    throw ConfigError("IDX images need [m, rows, cols] inputs, got " +
                      nn::shape_string(ds.inputs.shape()));
  }
  {
    std::ofstream out(idx_images_path(prefix), std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + idx_images_path(prefix).string());
    write_be32(out, kImagesMagic);
    for (std::size_t d : ds.inputs.shape()) write_be32(out, static_cast<std::uint32_t>(d));
    std::vector<char> bytes(ds.inputs.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(to_byte(ds.inputs[i]));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + idx_images_path(prefix).string());
  }
  std::ofstream out(idx_labels_path(prefix), std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + idx_labels_path(prefix).string());
  write_be32(out, kLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) out.put(static_cast<char>(y));
  if (!out) throw IoError("failed writing " + idx_labels_path(prefix).string());
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t pixels = ds.inputs.row_size();
  out << "label";
  for (std::size_t p = 0; p < pixels; ++p) out << ",p" << p;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (double v : ds.inputs.row(i)) out << ',' << static_cast<int>(to_byte(v));
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace bilevel::data
