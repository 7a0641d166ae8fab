#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "prm/io/files.hpp"
#include "prm/io/pgm.hpp"
#include "prm/mask.hpp"
#include "prm/retrieval.hpp"

namespace prm::io {

/// Row-major alternating run lengths, first run counts zeros (possibly 0).
struct Rle {
  std::size_t height = 0, width = 0;
  std::vector<std::size_t> counts;
  bool operator==(const Rle&) const = default;
};

inline Rle rle_encode(const BinaryMask& m) {
  Rle r{m.height(), m.width(), {}};
  bool current = false;
  std::size_t run = 0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m.at(k) != current) {
      r.counts.push_back(run);
      run = 0;
      current = !current;
    }
    ++run;
  }
  r.counts.push_back(run);
  return r;
}

/// Throws FormatError when the runs do not cover the mask exactly.
inline BinaryMask rle_decode(const Rle& r) {
  std::size_t total = 0;
  for (std::size_t c : r.counts) total += c;
  if (total != r.height * r.width)
    throw FormatError("rle: runs sum to " + std::to_string(total) + ", mask has " + std::to_string(r.height * r.width) +
                      " pixels");
  BinaryMask m(r.height, r.width);
  std::size_t k = 0;
  bool v = false;
  for (std::size_t c : r.counts) {
    for (std::size_t n = 0; n < c; ++n, ++k)
      if (v) m.set(k / r.width, k % r.width, true);
    v = !v;
  }
  return m;
}

inline nlohmann::json rle_to_json(const Rle& r) {
  return {{"height", r.height}, {"width", r.width}, {"counts", r.counts}};
}

inline Rle rle_from_json(const nlohmann::json& j) {
  return {j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
          j.at("counts").get<std::vector<std::size_t>>()};
}

using Gallery = std::vector<SegmentProposal>;
using GalleryMap = std::map<std::size_t, Gallery>;  // by image id

namespace detail {

inline std::string with_line(const std::string& what, std::size_t line, const std::string& msg) {
  return what + ":" + std::to_string(line) + ": " + msg;
}

/// Calls fn(json, line_no) for each non-blank line; parse and schema errors carry the line number.
template <class Fn>
void for_each_record(const std::string& text, const std::string& what, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line), no);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(with_line(what, no, e.what()));
    } catch (const FormatError& e) {
      throw FormatError(with_line(what, no, e.what()));
    }
  }
}

}  // namespace detail

inline std::string encode_proposals(const GalleryMap& galleries) {
  std::string out;
  for (const auto& [image, gallery] : galleries) {
    for (const auto& p : gallery) {
      nlohmann::json j{{"image", image}, {"id", p.id}};
      j.update(rle_to_json(rle_encode(p.mask)));
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

inline GalleryMap decode_proposals(const std::string& text, const std::string& what = "proposals") {
  GalleryMap out;
  detail::for_each_record(text, what, [&](const nlohmann::json& j, std::size_t) {
    SegmentProposal p{j.at("id").get<long>(), rle_decode(rle_from_json(j))};
    if (p.mask.empty()) throw FormatError("proposal mask is empty");
    out[j.at("image").get<std::size_t>()].push_back(std::move(p));
  });
  return out;
}

inline void save_proposals(const std::filesystem::path& path, const GalleryMap& galleries) {
  atomic_write(path, encode_proposals(galleries));
}

inline GalleryMap load_proposals(const std::filesystem::path& path) {
  return decode_proposals(read_file(path), path.string());
}

using PredictionMap = std::map<std::size_t, std::vector<InstancePrediction>>;

inline std::string encode_predictions(const PredictionMap& preds) {
  std::string out;
  for (const auto& [image, list] : preds) {
    for (const auto& p : list) {
      nlohmann::json j{{"image", image},
                       {"class", p.class_id},
                       {"confidence", p.confidence},
                       {"score", p.retrieval_score},
                       {"proposal", p.proposal_id},
                       {"peak", {p.peak.row, p.peak.col}}};
      j.update(rle_to_json(rle_encode(p.mask)));
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

inline PredictionMap decode_predictions(const std::string& text, const std::string& what = "predictions") {
  PredictionMap out;
  detail::for_each_record(text, what, [&](const nlohmann::json& j, std::size_t) {
    InstancePrediction p;
    p.class_id = j.at("class").get<std::size_t>();
    p.confidence = j.at("confidence").get<double>();
    p.retrieval_score = j.value("score", 0.0);
    p.proposal_id = j.value("proposal", -1L);
    if (j.contains("peak")) {
      p.peak.row = j["peak"].at(0).get<std::size_t>();
      p.peak.col = j["peak"].at(1).get<std::size_t>();
      p.peak.value = p.confidence;
    }
    p.mask = rle_decode(rle_from_json(j));
    out[j.at("image").get<std::size_t>()].push_back(std::move(p));
  });
  return out;
}

inline void save_predictions(const std::filesystem::path& path, const PredictionMap& preds) {
  atomic_write(path, encode_predictions(preds));
}

inline PredictionMap load_predictions(const std::filesystem::path& path) {
  return decode_predictions(read_file(path), path.string());
}

}  // namespace prm::io
