#pragma once

// File-based dataset ingestion. A dataset directory pairs <name>_img.pgm (or
// .ppm) with <name>_mask.pgm; images are bilinearly resized to the target
// size, masks nearest-neighbor resized and binarized at 127/255.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attswin/image_io.hpp"
#include "attswin/metrics.hpp"

namespace attswin {

inline Dataset load_dataset(const std::string& dir, int target_size,
                            std::vector<std::string>* stems = nullptr) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
  std::vector<std::string> image_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.ends_with("_img.pgm") || name.ends_with("_img.ppm")) image_files.push_back(name);
  }
  std::sort(image_files.begin(), image_files.end());
  if (image_files.empty()) throw std::runtime_error("no *_img.pgm / *_img.ppm files in " + dir);

  Dataset out;
  for (const std::string& img_name : image_files) {
    const std::string stem = img_name.substr(0, img_name.size() - std::string("_img.pgm").size());
    if (stems) stems->push_back(stem);
    const fs::path img_path = fs::path(dir) / img_name;
    const fs::path mask_path = fs::path(dir) / (stem + "_mask.pgm");
    if (!fs::exists(mask_path))
      throw std::runtime_error("unpaired image " + img_path.string() + ": missing " + mask_path.string());

    PnmImage img = read_pnm(img_path.string());
    PnmImage mask = read_pnm(mask_path.string());
    if (mask.channels != 1) throw std::runtime_error("mask must be grayscale: " + mask_path.string());
    if (mask.width != img.width || mask.height != img.height)
      throw std::runtime_error("mask extents differ from image: " + mask_path.string());

    std::vector<double> real(img.data.size());
    for (std::size_t i = 0; i < real.size(); ++i)
      real[i] = static_cast<double>(img.data[i]) / img.maxval;
    Sample s;
    s.h = target_size;
    s.w = target_size;
    s.channels = img.channels;
    s.image = resize_bilinear(real, img.height, img.width, img.channels, target_size, target_size);
    auto resized_mask = resize_nearest(mask.data, mask.height, mask.width, target_size, target_size);
    s.mask.resize(resized_mask.size());
    for (std::size_t i = 0; i < resized_mask.size(); ++i) {
      const int v = resized_mask[i] * 255 / mask.maxval;
      s.mask[i] = v > 127 ? 1 : 0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Materialize a dataset as <stem><index>_img.pgm + _mask.pgm pairs.
inline void save_dataset(const std::string& dir, const Dataset& data,
                         const std::string& stem = "sample") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  char name[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample& s = data[i];
    std::snprintf(name, sizeof(name), "%s%04zu", stem.c_str(), i);
    std::vector<std::uint8_t> bytes(s.image.size());
    for (std::size_t j = 0; j < bytes.size(); ++j) {
      const double v = std::min(1.0, std::max(0.0, s.image[j]));
      bytes[j] = static_cast<std::uint8_t>(v * 255.0 + 0.5);
    }
    const fs::path base = fs::path(dir) / name;
    if (s.channels == 1)
      write_pgm(base.string() + "_img.pgm", s.w, s.h, bytes);
    else if (s.channels == 3)
      write_ppm(base.string() + "_img.ppm", s.w, s.h, bytes);
    else
      throw std::invalid_argument("save_dataset: unsupported channel count");
    std::vector<std::uint8_t> mask_bytes(s.mask.size());
    for (std::size_t j = 0; j < mask_bytes.size(); ++j) mask_bytes[j] = s.mask[j] ? 255 : 0;
    write_pgm(base.string() + "_mask.pgm", s.w, s.h, mask_bytes);
  }
}

}  // namespace attswin
