#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string_view>

#include "bilevel/data/dataset.hpp"

namespace bilevel::data {

enum class Format { Idx, Csv };

/// "idx" or "csv"; throws ConfigError otherwise.
Format parse_format(std::string_view name);

/// IDX datasets are addressed by prefix: `<prefix>-images-idx3-ubyte` holds
/// the big-endian 0x00000803 image file and `<prefix>-labels-idx1-ubyte` the
/// 0x00000801 label file (the MNIST naming scheme, e.g. prefix "train").
std::filesystem::path idx_images_path(const std::filesystem::path& prefix);
std::filesystem::path idx_labels_path(const std::filesystem::path& prefix);

/// Loads and validates a dataset; pixel bytes are scaled to [0, 1].
/// CSV files need the header "label,p0,...,pN" and pixel values in [0, 255];
/// rows with a perfect-square pixel count load as square images.
/// `class_count` defaults to the largest label + 1.
/// Throws DataError with a byte (IDX) or line (CSV) offset on malformed input,
/// IoError when a file cannot be opened.
Dataset load_dataset(const std::filesystem::path& path, Format format,
                     std::optional<std::size_t> class_count = std::nullopt,
                     Split split = Split::Train);

/// Pixels are written as round(255 * value). Images must be [m, rows, cols].
void write_idx(const Dataset& ds, const std::filesystem::path& prefix);
void write_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace bilevel::data
