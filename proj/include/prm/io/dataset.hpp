#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "prm/io/files.hpp"
#include "prm/io/pgm.hpp"
#include "prm/synthetic.hpp"

namespace prm::io {

// dir/manifest.json, dir/images/NNNNNN.pgm (channels stacked), dir/masks/NNNNNN_K.pgm
inline constexpr int kDatasetVersion = 1;
inline constexpr std::size_t kImageChannels = 3;

struct Dataset {
  SyntheticConfig config;
  std::size_t train_count = 0;  // samples [0, train_count) are the training split
  std::vector<SyntheticSample> samples;

  std::size_t num_classes() const { return config.num_classes; }
};

namespace detail {

inline std::string sample_stem(std::size_t id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", id);
  return buf;
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t n = 0; n < ds.samples.size(); ++n) {
    const auto& s = ds.samples[n];
    const std::string stem = detail::sample_stem(n);
    const std::string image_rel = "images/" + stem + ".pgm";
    write_pgm(dir / image_rel, image_to_gray(s.image));
    nlohmann::json inst = nlohmann::json::array();
    for (std::size_t k = 0; k < s.truth.instances.size(); ++k) {
      const auto& g = s.truth.instances[k];
      const std::string mask_rel = "masks/" + stem + "_" + std::to_string(k) + ".pgm";
      write_pgm(dir / mask_rel, mask_to_gray(g.mask));
      inst.push_back({{"class", g.class_id}, {"box", {g.box.row0, g.box.col0, g.box.row1, g.box.col1}}, {"mask", mask_rel}});
    }
    samples.push_back({{"id", n},
                       {"seed", s.seed},
                       {"split", n < ds.train_count ? "train" : "val"},
                       {"image", image_rel},
                       {"labels", s.truth.labels},
                       {"instances", inst}});
  }
  const auto& c = ds.config;
  nlohmann::json manifest{{"version", kDatasetVersion},
                          {"config",
                           {{"seed", c.seed},
                            {"count", c.count},
                            {"image_size", c.image_size},
                            {"num_classes", c.num_classes},
                            {"max_instances", c.max_instances},
                            {"min_extent", c.min_extent},
                            {"max_extent", c.max_extent}}},
                          {"train_count", ds.train_count},
                          {"samples", samples}};
  atomic_write(dir / "manifest.json", manifest.dump(1) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  Dataset ds;
  try {
    if (m.at("version").get<int>() != kDatasetVersion) throw FormatError("unsupported dataset version");
    const auto& c = m.at("config");
    ds.config.seed = c.at("seed").get<std::uint64_t>();
    ds.config.count = c.at("count").get<std::size_t>();
    ds.config.image_size = c.at("image_size").get<std::size_t>();
    ds.config.num_classes = c.at("num_classes").get<std::size_t>();
    ds.config.max_instances = c.at("max_instances").get<std::size_t>();
    ds.config.min_extent = c.value("min_extent", std::size_t{0});
    ds.config.max_extent = c.value("max_extent", std::size_t{0});
    ds.train_count = m.at("train_count").get<std::size_t>();
    for (const auto& js : m.at("samples")) {
      SyntheticSample s;
      s.seed = js.value("seed", std::uint64_t{0});
      s.image = gray_to_image(read_pgm(dir / js.at("image").get<std::string>()), kImageChannels);
      s.truth.height = s.image.height();
      s.truth.width = s.image.width();
      s.truth.labels = js.at("labels").get<std::vector<int>>();
      if (s.truth.labels.size() != ds.config.num_classes) throw FormatError("sample label vector has wrong length");
      for (const auto& ji : js.at("instances")) {
        GtInstance g;
        g.class_id = ji.at("class").get<std::size_t>();
        const auto b = ji.at("box").get<std::vector<std::size_t>>();
        if (b.size() != 4) throw FormatError("box must have 4 entries");
        g.box = {b[0], b[1], b[2], b[3]};
        const auto mask_path = dir / ji.at("mask").get<std::string>();
        g.mask = gray_to_mask(read_pgm(mask_path), mask_path.string());
        if (g.class_id >= ds.config.num_classes) throw FormatError("instance class out of range");
        if (g.mask.height() != s.truth.height || g.mask.width() != s.truth.width)
          throw FormatError(mask_path.string() + ": mask dims differ from image");
        if (g.mask.empty()) throw FormatError(mask_path.string() + ": empty GT mask");
        if (g.box.row1 >= s.truth.height || g.box.col1 >= s.truth.width || g.box.row0 > g.box.row1 ||
            g.box.col0 > g.box.col1)
          throw FormatError("box out of bounds");
        s.truth.instances.push_back(std::move(g));
      }
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (ds.train_count > ds.samples.size()) throw FormatError("train_count exceeds sample count");
  return ds;
}

}  // namespace prm::io
