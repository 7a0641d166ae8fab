// prm: command line front end for the toy peak-response pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prm/gradcheck.hpp"
#include "prm/io/config.hpp"
#include "prm/io/dataset.hpp"
#include "prm/io/files.hpp"
#include "prm/io/pgm.hpp"
#include "prm/io/proposals.hpp"
#include "prm/io/weights.hpp"
#include "prm/pipeline.hpp"
#include "prm/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit 2: the caller handed us something unusable (flags, missing or malformed inputs).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Settings {
  std::string config;

  // shared
  std::string data, weights, proposals, out, predictions;
  std::string split = "val";
  std::size_t limit = 0;
  std::size_t radius = 3;

  // gen-data
  std::uint64_t data_seed = 7;
  std::size_t count = 500, train_count = 400, image_size = 64, num_classes = 3, max_instances = 3;
  std::size_t distractors = 20;
  std::uint64_t proposal_seed = 11;

  // train-toy
  std::size_t steps = 500, batch = 8, width = 8;
  double lr = 0.1;
  std::uint64_t seed = 7;
  std::string aggregation = "peak";

  // segment / sweep
  double alpha = 1.0, beta = 1.0, bias = 0.0, nms_iou = 0.5, cutoff = 0.0;
  std::vector<double> alphas{0.0, 0.5, 1.0, 1.5, 2.0}, betas{0.5, 1.0, 2.0}, biases{0.0, 10.0, 20.0};

  // gradcheck
  std::uint64_t gc_seed = 1;
  std::size_t gc_seeds = 1;
  double tolerance = 1e-6;
};

prm::RetrievalParams retrieval_params(const Settings& s) {
  prm::RetrievalParams p;
  p.alpha = s.alpha;
  p.beta = s.beta;
  p.background_bias = s.bias;
  p.nms_iou = s.nms_iou;
  p.class_cutoff = s.cutoff;
  try {
    prm::validate(p);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return p;
}

prm::StimulationConfig stimulation(const Settings& s) {
  if (s.radius < 1) throw UsageError("--radius must be >= 1");
  return {s.radius, true};
}

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw UsageError(std::string(flag) + ": no such file: " + path);
}

prm::io::Dataset load_data(const Settings& s) {
  require_file(s.data, "--data");
  try {
    return prm::io::load_dataset(s.data);
  } catch (const prm::io::FileError& e) {
    throw UsageError(e.what());
  } catch (const prm::io::FormatError& e) {
    throw UsageError(e.what());
  }
}

prm::NetworkSpec load_net(const Settings& s, const prm::io::Dataset& ds) {
  require_file(s.weights, "--weights");
  prm::NetworkSpec net;
  try {
    net = prm::io::load_weights(s.weights);
  } catch (const prm::io::WeightsError& e) {
    throw UsageError(s.weights + ": " + e.what());
  }
  if (net.num_classes != ds.num_classes())
    throw UsageError("weights have " + std::to_string(net.num_classes) + " classes, dataset has " +
                     std::to_string(ds.num_classes()));
  if (net.input_channels() != prm::io::kImageChannels) throw UsageError("weights expect a different channel count");
  return net;
}

std::vector<std::size_t> select_ids(const Settings& s, const prm::io::Dataset& ds) {
  std::size_t lo = 0, hi = ds.samples.size();
  if (s.split == "train") hi = ds.train_count;
  else if (s.split == "val") lo = ds.train_count;
  else if (s.split != "all") throw UsageError("--split must be train, val or all");
  std::vector<std::size_t> ids;
  for (std::size_t n = lo; n < hi && (s.limit == 0 || ids.size() < s.limit); ++n) ids.push_back(n);
  if (ids.empty()) throw UsageError("split '" + s.split + "' is empty");
  return ids;
}

prm::io::GalleryMap load_galleries(const Settings& s, const std::vector<std::size_t>& ids) {
  require_file(s.proposals, "--proposals");
  prm::io::GalleryMap g;
  try {
    g = prm::io::load_proposals(s.proposals);
  } catch (const prm::io::FormatError& e) {
    throw UsageError(e.what());
  }
  if (g.empty()) throw UsageError(s.proposals + ": proposal file holds no proposals");
  for (std::size_t id : ids)
    if (!g.count(id)) throw UsageError(s.proposals + ": no proposals for image " + std::to_string(id));
  return g;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

json report_json(const prm::MetricReport& r) {
  json pc = json::array();
  for (const auto& v : r.per_class) pc.push_back(v ? json(*v) : json(nullptr));
  return {{"name", r.name}, {"per_class", pc}, {"aggregate", r.aggregate}};
}

std::string report_text(const prm::MetricReport& r) {
  std::string line = r.name + ": " + fmt(100.0 * r.aggregate, 2) + "%  [";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    if (c) line += ' ';
    line += r.per_class[c] ? fmt(100.0 * *r.per_class[c], 1) : "-";
  }
  return line + "]\n";
}

// ---- subcommands ----

int cmd_gen_data(const Settings& s) {
  if (s.out.empty()) throw UsageError("--out is required");
  if (s.train_count > s.count) throw UsageError("--train-count exceeds --count");
  prm::io::Dataset ds;
  ds.config.seed = s.data_seed;
  ds.config.count = s.count;
  ds.config.image_size = s.image_size;
  ds.config.num_classes = s.num_classes;
  ds.config.max_instances = s.max_instances;
  ds.train_count = s.train_count;
  try {
    ds.samples = prm::gen_synthetic(ds.config);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  prm::io::save_dataset(s.out, ds);
  if (s.distractors > 0) {
    prm::io::GalleryMap g;
    for (std::size_t n = 0; n < ds.samples.size(); ++n)
      g[n] = prm::make_jittered_gallery(ds.samples[n].truth, s.distractors, prm::mix_seed(s.proposal_seed, n));
    prm::io::save_proposals(fs::path(s.out) / "proposals.jsonl", g);
  }
  std::cout << "wrote " << ds.samples.size() << " samples (" << ds.train_count << " train) to " << s.out << "\n";
  return 0;
}

prm::Aggregation parse_aggregation(const std::string& a) {
  if (a == "peak") return prm::Aggregation::PeakStimulation;
  if (a == "gap") return prm::Aggregation::GlobalAverage;
  throw UsageError("--aggregation must be peak or gap");
}

int cmd_train(const Settings& s) {
  if (s.out.empty()) throw UsageError("--out is required");
  const auto ds = load_data(s);
  std::vector<prm::LabeledImage> train;
  for (std::size_t n = 0; n < ds.train_count; ++n) train.push_back(prm::to_labeled(ds.samples[n]));
  if (train.empty()) throw UsageError("dataset has no training samples");
  prm::TrainConfig tc;
  tc.steps = s.steps;
  tc.batch_size = s.batch;
  tc.learning_rate = s.lr;
  tc.seed = s.seed;
  tc.aggregation = parse_aggregation(s.aggregation);
  tc.stimulation = stimulation(s);
  if (tc.batch_size == 0) throw UsageError("--batch must be >= 1");
  const auto net = prm::train_toy(prm::make_toy_network(prm::io::kImageChannels, ds.num_classes(), s.seed, s.width),
                                  train, tc);
  prm::io::save_weights(s.out, net);
  std::cout << "train loss " << fmt(prm::dataset_loss(net, train, tc.aggregation, tc.stimulation), 6) << ", wrote "
            << s.out << "\n";
  return 0;
}

int cmd_infer(const Settings& s) {
  if (s.out.empty()) throw UsageError("--out is required");
  const auto ds = load_data(s);
  const auto net = load_net(s, ds);
  const auto stim = stimulation(s);
  for (std::size_t id : select_ids(s, ds)) {
    const auto& sample = ds.samples[id];
    const fs::path dir = fs::path(s.out) / prm::io::detail::sample_stem(id);
    const auto trace = prm::network_forward(net, sample.image);
    const auto& maps = trace.output;
    const auto peaks = prm::find_peaks(maps, stim);
    const auto scores = prm::stimulate_forward(maps, peaks);
    json classes = json::array();
    for (std::size_t c = 0; c < maps.channels(); ++c) {
      json plist = json::array();
      for (std::size_t k = 0; k < peaks.peaks[c].size(); ++k) {
        const auto& pk = peaks.peaks[c][k];
        const auto prm_map = prm::peak_response_map(net, trace, c, pk);
        const std::string name = "prm_" + std::to_string(c) + "_" + std::to_string(k) + ".pgm";
        prm::io::write_pgm(dir / name, prm::io::plane_to_gray(prm_map.map));
        plist.push_back({{"row", pk.row}, {"col", pk.col}, {"value", pk.value}, {"fallback", pk.fallback},
                         {"leaked", prm_map.leaked}, {"prm", name}});
      }
      const auto plane = maps.channel(c);
      prm::io::write_pgm(dir / ("response_" + std::to_string(c) + ".pgm"), prm::io::plane_to_gray(plane));
      classes.push_back({{"class", c},
                         {"score", scores[c]},
                         {"height", maps.height()},
                         {"width", maps.width()},
                         {"response", std::vector<double>(plane.data().begin(), plane.data().end())},
                         {"peaks", plist}});
    }
    prm::io::atomic_write(dir / "maps.json", json{{"image", id}, {"classes", classes}}.dump() + "\n");
  }
  std::cout << "wrote response maps, peaks and PRMs to " << s.out << "\n";
  return 0;
}

int cmd_segment(const Settings& s) {
  if (s.out.empty()) throw UsageError("--out is required");
  const auto ds = load_data(s);
  const auto ids = select_ids(s, ds);
  const auto galleries = load_galleries(s, ids);
  const auto net = load_net(s, ds);
  const auto params = retrieval_params(s);
  const auto stim = stimulation(s);
  prm::io::PredictionMap preds;
  std::size_t total = 0;
  for (std::size_t id : ids) {
    preds[id] = prm::segment_instances(net, ds.samples[id].image, galleries.at(id), stim, params);
    total += preds[id].size();
  }
  prm::io::save_predictions(s.out, preds);
  std::cout << "wrote " << total << " instance predictions for " << ids.size() << " images to " << s.out << "\n";
  return 0;
}

int cmd_eval(const Settings& s) {
  if (s.out.empty()) throw UsageError("--out is required");
  const auto ds = load_data(s);
  const auto ids = select_ids(s, ds);
  require_file(s.predictions, "--predictions");
  prm::io::PredictionMap preds;
  try {
    preds = prm::io::load_predictions(s.predictions);
  } catch (const prm::io::FormatError& e) {
    throw UsageError(e.what());
  }
  const std::set<std::size_t> wanted(ids.begin(), ids.end());
  for (const auto& [id, list] : preds)
    if (!wanted.count(id)) throw UsageError("predictions mention image " + std::to_string(id) + " outside the split");

  std::vector<std::vector<prm::InstancePrediction>> per_image;
  std::vector<prm::EvalSample> truth;
  std::vector<std::pair<prm::LabelMap, prm::LabelMap>> label_maps;
  for (std::size_t id : ids) {
    const auto& t = ds.samples[id].truth;
    auto it = preds.find(id);
    per_image.push_back(it == preds.end() ? std::vector<prm::InstancePrediction>{} : it->second);
    for (const auto& p : per_image.back()) {
      if (p.mask.height() != t.height || p.mask.width() != t.width)
        throw UsageError("prediction mask dims differ from image " + std::to_string(id));
    }
    truth.push_back(t);
    label_maps.emplace_back(prm::merge_semantic(per_image.back(), t.height, t.width), prm::gt_label_map(t));
  }
  std::vector<prm::MetricReport> reports = prm::map_r(per_image, truth, {0.25, 0.5, 0.75});
  reports.push_back(prm::abo(per_image, truth));
  reports.push_back(prm::miou(label_maps, ds.num_classes()));

  if (!s.weights.empty()) {
    const auto net = load_net(s, ds);
    const auto stim = stimulation(s);
    std::vector<std::vector<prm::PointPrediction>> points;
    std::size_t good = 0, walked = 0;
    for (std::size_t n = 0; n < ids.size(); ++n) {
      points.push_back(prm::point_predictions(net, ds.samples[ids[n]].image, prm::Aggregation::PeakStimulation, stim));
      for (double q : prm::prm_qualities(net, ds.samples[ids[n]].image, truth[n], stim, s.cutoff)) {
        ++walked;
        good += q > 0.5;
      }
    }
    reports.push_back(prm::point_localization_ap(points, truth));
    reports.push_back({"PRM quality > 0.5", {}, walked ? static_cast<double>(good) / static_cast<double>(walked) : 0.0});
  }

  json j = json::array();
  std::string text;
  for (const auto& r : reports) {
    j.push_back(report_json(r));
    text += report_text(r);
  }
  const fs::path dir(s.out);
  prm::io::atomic_write(dir / "report.json", json{{"images", ids.size()}, {"metrics", j}}.dump(1) + "\n");
  prm::io::atomic_write(dir / "report.txt", text);
  std::cout << text;
  return 0;
}

int cmd_gradcheck(const Settings& s) {
  if (s.gc_seeds == 0) throw UsageError("--seeds must be >= 1");
  bool ok = true;
  for (std::uint64_t seed = s.gc_seed; seed < s.gc_seed + s.gc_seeds; ++seed) {
    for (const auto& r : prm::gradcheck_suite(seed)) {
      const bool pass = r.max_rel_error < s.tolerance;
      ok = ok && pass;
      std::printf("%s seed %llu %-36s max rel err %.3e over %zu entries\n", pass ? "ok  " : "FAIL",
                  static_cast<unsigned long long>(seed), r.name.c_str(), r.max_rel_error, r.checked);
    }
  }
  return ok ? 0 : 1;
}

int cmd_sweep(const Settings& s) {
  const auto ds = load_data(s);
  const auto ids = select_ids(s, ds);
  const auto galleries = load_galleries(s, ids);
  const auto net = load_net(s, ds);
  std::vector<prm::Tensor> images;
  std::vector<prm::EvalSample> truth;
  std::vector<std::vector<prm::SegmentProposal>> gal;
  for (std::size_t id : ids) {
    images.push_back(ds.samples[id].image);
    truth.push_back(ds.samples[id].truth);
    gal.push_back(galleries.at(id));
  }
  const auto res = prm::sweep_retrieval(net, images, truth, gal, stimulation(s), retrieval_params(s), s.alphas, s.betas,
                                        s.biases);
  json grid = json::array();
  for (const auto& p : res.grid) {
    std::printf("alpha %-5s beta %-5s bias %-6s mAP^r@0.5 %s exact %s\n", fmt(p.params.alpha, 2).c_str(),
                fmt(p.params.beta, 2).c_str(), fmt(p.params.background_bias, 1).c_str(), fmt(p.map50).c_str(),
                fmt(p.exact_rate).c_str());
    grid.push_back({{"alpha", p.params.alpha},
                    {"beta", p.params.beta},
                    {"bias", p.params.background_bias},
                    {"map50", p.map50},
                    {"exact_rate", p.exact_rate}});
  }
  const auto& b = res.best;
  std::printf("selected alpha=%g beta=%g bias=%g\n", b.params.alpha, b.params.beta, b.params.background_bias);
  if (!s.out.empty()) {
    const json j{{"split", s.split},
                 {"grid", grid},
                 {"selected", {{"alpha", b.params.alpha}, {"beta", b.params.beta}, {"bias", b.params.background_bias}}}};
    prm::io::atomic_write(s.out, j.dump(1) + "\n");
  }
  return 0;
}

// ---- config file ----

/// Fills options not given on the command line from the config map. Plain keys apply to every
/// subcommand that has such an option; "sub.key" only to that subcommand and wins over "key".
void apply_config(CLI::App& app, CLI::App& sub, const prm::io::ConfigMap& cfg) {
  std::set<std::string> known;
  for (CLI::App* a : app.get_subcommands({})) {
    for (const CLI::Option* o : a->get_options())
      for (const auto& n : o->get_lnames()) {
        known.insert(n);
        known.insert(a->get_name() + "." + n);
      }
  }
  for (const auto& [key, value] : cfg)
    if (!known.count(key)) throw UsageError("config: unknown key '" + key + "'");

  for (CLI::Option* o : sub.get_options()) {
    if (o->count() > 0 || o->get_lnames().empty()) continue;
    const std::string& name = o->get_lnames().front();
    auto it = cfg.find(sub.get_name() + "." + name);
    if (it == cfg.end()) it = cfg.find(name);
    if (it == cfg.end()) continue;
    try {
      std::string v = it->second;
      if (o->get_expected_max() > 1) {
        for (char& ch : v)
          if (ch == ',') ch = ' ';
        std::istringstream in(v);
        std::string item;
        while (in >> item) o->add_result(item);
      } else {
        o->add_result(v);
      }
      o->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError("config key '" + it->first + "': " + e.what());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  CLI::App app{"Peak response map toolkit: synthetic data, toy training, PRM inference and retrieval"};
  app.require_subcommand(1);
  app.add_option("--config", s.config, "key = value file (default: $PRM_CONFIG)");

  auto split_opts = [&](CLI::App* c) {
    c->add_option("--split", s.split, "train, val or all")->capture_default_str();
    c->add_option("--limit", s.limit, "use at most this many images (0 = all)")->capture_default_str();
  };
  auto radius_opt = [&](CLI::App* c) { c->add_option("--radius", s.radius, "peak window radius")->capture_default_str(); };
  auto retrieval_opts = [&](CLI::App* c) {
    c->add_option("--alpha", s.alpha, "instance-aware weight")->capture_default_str();
    c->add_option("--beta", s.beta, "class-aware weight")->capture_default_str();
    c->add_option("--bias", s.bias, "offset added to the map mean for the background mask")->capture_default_str();
    c->add_option("--nms-iou", s.nms_iou, "mask NMS IoU threshold")->capture_default_str();
    c->add_option("--cutoff", s.cutoff, "segment classes whose score exceeds this")->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
  gen->add_option("--out", s.out, "dataset directory");
  gen->add_option("--seed", s.data_seed, "dataset seed")->capture_default_str();
  gen->add_option("--count", s.count)->capture_default_str();
  gen->add_option("--train-count", s.train_count, "first N samples form the training split")->capture_default_str();
  gen->add_option("--image-size", s.image_size)->capture_default_str();
  gen->add_option("--num-classes", s.num_classes)->capture_default_str();
  gen->add_option("--max-instances", s.max_instances)->capture_default_str();
  gen->add_option("--distractors", s.distractors, "jittered proposals per image (0: no proposals.jsonl)")
      ->capture_default_str();
  gen->add_option("--proposal-seed", s.proposal_seed)->capture_default_str();

  auto* train = app.add_subcommand("train-toy", "train the toy classifier and write weights");
  train->add_option("--data", s.data, "dataset directory");
  train->add_option("--out", s.out, "weights file");
  train->add_option("--steps", s.steps)->capture_default_str();
  train->add_option("--batch", s.batch)->capture_default_str();
  train->add_option("--lr", s.lr)->capture_default_str();
  train->add_option("--seed", s.seed, "init and shuffle seed")->capture_default_str();
  train->add_option("--width", s.width, "channels of the first conv")->capture_default_str();
  train->add_option("--aggregation", s.aggregation, "peak or gap")->capture_default_str();
  radius_opt(train);

  auto* infer = app.add_subcommand("infer", "write class response maps, peaks and PRM images");
  infer->add_option("--data", s.data);
  infer->add_option("--weights", s.weights);
  infer->add_option("--out", s.out, "output directory");
  split_opts(infer);
  radius_opt(infer);

  auto* seg = app.add_subcommand("segment", "retrieve instance masks from a proposal gallery");
  seg->add_option("--data", s.data);
  seg->add_option("--weights", s.weights);
  seg->add_option("--proposals", s.proposals, "JSON-lines proposal file");
  seg->add_option("--out", s.out, "predictions file");
  split_opts(seg);
  radius_opt(seg);
  retrieval_opts(seg);

  auto* ev = app.add_subcommand("eval", "score predictions against ground truth");
  ev->add_option("--data", s.data);
  ev->add_option("--predictions", s.predictions);
  ev->add_option("--weights", s.weights, "also report pointwise localization and PRM quality");
  ev->add_option("--out", s.out, "report directory");
  ev->add_option("--cutoff", s.cutoff, "class score cutoff for PRM quality")->capture_default_str();
  split_opts(ev);
  radius_opt(ev);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--seed", s.gc_seed)->capture_default_str();
  gc->add_option("--seeds", s.gc_seeds, "number of consecutive seeds")->capture_default_str();
  gc->add_option("--tolerance", s.tolerance, "max relative error")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep-ab", "grid-search alpha, beta and background bias");
  sweep->add_option("--data", s.data);
  sweep->add_option("--weights", s.weights);
  sweep->add_option("--proposals", s.proposals);
  sweep->add_option("--out", s.out, "optional JSON result");
  sweep->add_option("--alphas", s.alphas)->delimiter(',')->capture_default_str();
  sweep->add_option("--betas", s.betas)->delimiter(',')->capture_default_str();
  sweep->add_option("--biases", s.biases)->delimiter(',')->capture_default_str();
  split_opts(sweep);
  radius_opt(sweep);
  retrieval_opts(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (auto path = prm::io::config_path(s.config)) {
      if (!fs::exists(*path)) throw UsageError("config file not found: " + path->string());
      prm::io::ConfigMap cfg;
      try {
        cfg = prm::io::load_config(*path);
      } catch (const prm::io::FormatError& e) {
        throw UsageError(e.what());
      }
      apply_config(app, *sub, cfg);
    }
    const std::string name = sub->get_name();
    if (name == "gen-data") return cmd_gen_data(s);
    if (name == "train-toy") return cmd_train(s);
    if (name == "infer") return cmd_infer(s);
    if (name == "segment") return cmd_segment(s);
    if (name == "eval") return cmd_eval(s);
    if (name == "gradcheck") return cmd_gradcheck(s);
    if (name == "sweep-ab") return cmd_sweep(s);
    throw UsageError("unknown subcommand " + name);
  } catch (const UsageError& e) {
    std::cerr << "prm " << sub->get_name() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "prm " << sub->get_name() << ": internal error: " << e.what() << "\n";
    return 1;
  }
}
