// deconvparse command-line driver: dataset synthesis, training, prediction,
// evaluation, ablation/seed studies, and filter/heatmap visualization.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "deconvparse/config.hpp"
#include "deconvparse/network.hpp"
#include "deconvparse/parallel.hpp"

namespace fs = std::filesystem;
using namespace deconvparse;

namespace {

void print_usage() {
  std::cerr
      << "usage: deconvparse <command> --config PATH [--out DIR] [--seed N]\n"
         "\n"
         "commands:\n"
         "  synth        generate a synthetic scene dataset + manifest\n"
         "  train        run the three-stage training schedule\n"
         "  predict      label one image with a trained model\n"
         "  eval         score a trained model on the test split\n"
         "  ablate       layer removal/replacement study over seeds\n"
         "  seedstudy    repeated training runs across random seeds\n"
         "  viz-filters  write filter montages, one PPM per layer\n"
         "  viz-heatmap  write per-class probability maps for one image\n"
         "\n"
         "flags:\n"
         "  --config PATH   key=value run configuration (required)\n"
         "  --out DIR       output directory (default ./out)\n"
         "  --seed N        override the config seed\n"
         "\n"
         "DECONVPARSE_THREADS caps the worker pool.\n";
}

struct CliArgs {
  std::string command;
  std::string config_path;
  std::string out_dir = "out";
  bool seed_override = false;
  std::uint64_t seed = 0;
};

CliArgs parse_args(int argc, char** argv) {
  if (argc < 2) {
    throw ConfigError("missing command");
  }
  CliArgs args;
  args.command = argv[1];
  for (int i = 2; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&](const char* flag) -> std::string {
      if (i + 1 >= argc) {
        throw ConfigError(std::string(flag) + " requires a value");
      }
      return argv[++i];
    };
    if (a == "--config") {
      args.config_path = next("--config");
    } else if (a == "--out") {
      args.out_dir = next("--out");
    } else if (a == "--seed") {
      args.seed = std::stoull(next("--seed"));
      args.seed_override = true;
    } else {
      throw ConfigError("unknown flag '" + a + "'");
    }
  }
  if (args.config_path.empty()) {
    throw ConfigError("--config is required");
  }
  return args;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path);
}

std::string out_path(const CliArgs& args, const std::string& name) {
  return (fs::path(args.out_dir) / name).string();
}

NetworkConfig resolved_network_config(const RunConfig& cfg,
                                      const CliArgs& args) {
  NetworkConfig nc = cfg.network_config();
  if (args.seed_override) nc.seed = args.seed;
  return nc;
}

// Tiles one filter bank into a square montage, each tile independently
// scaled to [0,255]; multi-channel kernels render channel means (the first
// bank renders RGB when the input has three channels).
Tensor filter_montage(const Tensor& filters, bool rgb) {
  const std::size_t n = filters.extent(0);
  const std::size_t cin = filters.extent(1);
  const std::size_t kh = filters.extent(2), kw = filters.extent(3);
  std::size_t grid = 1;
  while (grid * grid < n) ++grid;
  const std::size_t channels = rgb ? 3 : 1;
  const std::size_t H = grid * (kh + 1) + 1;
  const std::size_t W = grid * (kw + 1) + 1;
  Tensor img({channels, H, W});
  for (std::size_t k = 0; k < n; ++k) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t i = 0; i < kh * kw; ++i) {
        const double v = filters[(k * cin + c) * kh * kw + i];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
    const std::size_t r0 = (k / grid) * (kh + 1) + 1;
    const std::size_t c0 = (k % grid) * (kw + 1) + 1;
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
          double v;
          if (rgb && cin >= 3) {
            v = filters[(k * cin + ch) * kh * kw + i * kw + j];
          } else {
            double acc = 0.0;
            for (std::size_t c = 0; c < cin; ++c) {
              acc += filters[(k * cin + c) * kh * kw + i * kw + j];
            }
            v = acc / static_cast<double>(cin);
          }
          img.at3(ch, r0 + i, c0 + j) = (v - lo) * scale;
        }
      }
    }
  }
  return img;
}

Tensor gray_to_rgb(const Tensor& gray) {
  const std::size_t plane = gray.extent(1) * gray.extent(2);
  Tensor img({3, gray.extent(1), gray.extent(2)});
  for (std::size_t c = 0; c < 3; ++c) {
    std::copy(gray.data(), gray.data() + plane, img.data() + c * plane);
  }
  return img;
}

int cmd_synth(const RunConfig& cfg, const CliArgs& args) {
  const std::size_t classes = static_cast<std::size_t>(cfg.get_int("classes"));
  const std::size_t size = static_cast<std::size_t>(cfg.get_int("image_size"));
  const std::size_t channels =
      static_cast<std::size_t>(cfg.get_int("channels"));
  const std::uint64_t seed = args.seed_override
                                 ? args.seed
                                 : static_cast<std::uint64_t>(
                                       cfg.get_int("seed"));
  const std::size_t n_train =
      static_cast<std::size_t>(cfg.get_int("train_count"));
  const std::size_t n_test =
      static_cast<std::size_t>(cfg.get_int("test_count"));

  const Dataset train = generate_synthetic_scenes(n_train, classes, size,
                                                  Rng::derive(seed, 1),
                                                  channels);
  const Dataset test = generate_synthetic_scenes(n_test, classes, size,
                                                 Rng::derive(seed, 2),
                                                 channels);
  save_dataset(args.out_dir, train, test, seed);
  std::printf("wrote %zu train + %zu test scenes to %s\n", train.size(),
              test.size(), args.out_dir.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, const CliArgs& args) {
  cfg.require("data_dir");
  const std::string data_dir = cfg.get_string("data_dir");
  const Dataset train = load_dataset_split(data_dir, "train");

  NetworkConfig nc = resolved_network_config(cfg, args);
  nc.classes = train.classes;
  nc.channels = train.channels();
  nc.image_h = train.samples.at(0).image.extent(1);
  nc.image_w = train.samples.at(0).image.extent(2);

  Network net = build_network(nc);
  std::printf("built %zu-layer network, %zu parameters, %zu heads\n",
              layer_count(net), parameter_count(net), net.heads.size());
  train_sequential(net, train);
  std::printf("train pixel accuracy %.4f\n", net.train_eval_pixel_acc);

  save_model(out_path(args, "model.dptn"), net);
  write_text(out_path(args, "training_log.csv"), training_log_csv(net));
  std::printf("wrote %s and %s\n", out_path(args, "model.dptn").c_str(),
              out_path(args, "training_log.csv").c_str());
  return 0;
}

int cmd_predict(const RunConfig& cfg, const CliArgs& args) {
  cfg.require("model_file");
  cfg.require("input_image");
  const Network net = load_model(cfg.get_string("model_file"));
  const Tensor image = read_ppm(cfg.get_string("input_image"));
  const Prediction p = predict(net, image);

  write_pgm(out_path(args, "prediction.pgm"), p.labels);
  for (std::size_t c = 0; c < net.cfg.classes; ++c) {
    Tensor plane({p.prob.extent(1), p.prob.extent(2)});
    std::copy(p.prob.data() + c * plane.size(),
              p.prob.data() + (c + 1) * plane.size(), plane.data());
    char name[48];
    std::snprintf(name, sizeof(name), "prob_class_%zu.pgm", c);
    write_pgm_gray(out_path(args, name), plane);
  }
  std::printf("wrote prediction.pgm and %zu probability maps to %s\n",
              net.cfg.classes, args.out_dir.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const CliArgs& args) {
  cfg.require("model_file");
  cfg.require("data_dir");
  const Network net = load_model(cfg.get_string("model_file"));
  const Dataset test = load_dataset_split(cfg.get_string("data_dir"), "test");
  const MetricsReport report = evaluate(net, test);

  std::string csv = metrics_csv_header() + "\n" + metrics_csv_row(report) +
                    "\n";
  write_text(out_path(args, "metrics.csv"), csv);
  std::printf("pixel_acc %.4f class_acc %.4f", report.accuracy.pixel_acc,
              report.accuracy.class_acc);
  if (report.binary) {
    std::printf(" maxf %.4f ap %.4f", report.binary->max_f1,
                report.binary->ap);
  }
  std::printf("\nwrote %s\n", out_path(args, "metrics.csv").c_str());
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const CliArgs& args) {
  cfg.require("data_dir");
  const std::string data_dir = cfg.get_string("data_dir");
  const Dataset train = load_dataset_split(data_dir, "train");
  const Dataset test = load_dataset_split(data_dir, "test");

  NetworkConfig nc = resolved_network_config(cfg, args);
  nc.classes = train.classes;
  nc.channels = train.channels();
  nc.image_h = train.samples.at(0).image.extent(1);
  nc.image_w = train.samples.at(0).image.extent(2);

  const std::string mode = cfg.get_string("ablation_mode");
  std::vector<std::uint64_t> seeds;
  for (std::int64_t s : cfg.get_int_list("ablation_seeds")) {
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  const auto rows = run_ablation(nc, train, test, mode, seeds);
  write_text(out_path(args, "ablation.csv"),
             ablation_csv(rows, fs::path(data_dir).filename().string()));
  for (const AblationRow& r : rows) {
    std::printf("%-10s seed %2llu  pixel %.4f  class %.4f\n",
                r.variant.c_str(), static_cast<unsigned long long>(r.seed),
                r.pixel_acc, r.class_acc);
  }
  std::printf("wrote %s\n", out_path(args, "ablation.csv").c_str());
  return 0;
}

int cmd_seedstudy(const RunConfig& cfg, const CliArgs& args) {
  cfg.require("data_dir");
  const std::string data_dir = cfg.get_string("data_dir");
  const Dataset train = load_dataset_split(data_dir, "train");
  const Dataset test = load_dataset_split(data_dir, "test");

  NetworkConfig nc = resolved_network_config(cfg, args);
  nc.classes = train.classes;
  nc.channels = train.channels();
  nc.image_h = train.samples.at(0).image.extent(1);
  nc.image_w = train.samples.at(0).image.extent(2);

  const std::vector<std::string> variants =
      cfg.get_string_list("seedstudy_variants");
  const std::size_t runs =
      static_cast<std::size_t>(cfg.get_int("seedstudy_runs"));
  const SeedStudyResult result =
      run_seed_study(nc, variants, train, test, runs);

  write_text(out_path(args, "seedstudy.csv"), seed_study_csv(result));
  std::string summary = "variant,mean_pixel_acc,variance\n";
  for (const SeedStudySummary& s : result.summary) {
    char line[128];
    std::snprintf(line, sizeof(line), "%s,%.10g,%.10g\n", s.variant.c_str(),
                  s.mean, s.variance);
    summary += line;
    std::printf("%-10s mean %.4f variance %.3e\n", s.variant.c_str(), s.mean,
                s.variance);
  }
  write_text(out_path(args, "seedstudy_summary.csv"), summary);
  std::printf("wrote %s\n", out_path(args, "seedstudy.csv").c_str());
  return 0;
}

int cmd_viz_filters(const RunConfig& cfg, const CliArgs& args) {
  cfg.require("model_file");
  const Network net = load_model(cfg.get_string("model_file"));
  const Trunk& trunk = net.trunks[0];
  std::size_t layer = 1;
  for (const ConvStageParams& s : trunk.conv) {
    const bool rgb = s.maps_in() == 3;
    Tensor montage = filter_montage(s.filters, rgb);
    if (!rgb) montage = gray_to_rgb(montage);
    char name[48];
    std::snprintf(name, sizeof(name), "filters_layer_%zu.ppm", layer);
    write_ppm(out_path(args, name), montage);
    ++layer;
  }
  for (const FilterBank& b : trunk.deconv) {
    Tensor montage = gray_to_rgb(filter_montage(b.filters, false));
    char name[48];
    std::snprintf(name, sizeof(name), "filters_layer_%zu.ppm", layer);
    write_ppm(out_path(args, name), montage);
    ++layer;
  }
  std::printf("wrote %zu filter montages to %s\n", layer - 1,
              args.out_dir.c_str());
  return 0;
}

int cmd_viz_heatmap(const RunConfig& cfg, const CliArgs& args) {
  cfg.require("model_file");
  cfg.require("input_image");
  const Network net = load_model(cfg.get_string("model_file"));
  const Tensor image = read_ppm(cfg.get_string("input_image"));
  const Prediction p = predict(net, image);
  for (std::size_t c = 0; c < net.cfg.classes; ++c) {
    Tensor plane({p.prob.extent(1), p.prob.extent(2)});
    std::copy(p.prob.data() + c * plane.size(),
              p.prob.data() + (c + 1) * plane.size(), plane.data());
    char name[48];
    std::snprintf(name, sizeof(name), "heatmap_class_%zu.pgm", c);
    write_pgm_gray(out_path(args, name), plane);
  }
  std::printf("wrote %zu class heatmaps to %s\n", net.cfg.classes,
              args.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    const CliArgs args = parse_args(argc, argv);
    const RunConfig cfg = RunConfig::parse_file(args.config_path);
    fs::create_directories(args.out_dir);

    if (args.command == "synth") return cmd_synth(cfg, args);
    if (args.command == "train") return cmd_train(cfg, args);
    if (args.command == "predict") return cmd_predict(cfg, args);
    if (args.command == "eval") return cmd_eval(cfg, args);
    if (args.command == "ablate") return cmd_ablate(cfg, args);
    if (args.command == "seedstudy") return cmd_seedstudy(cfg, args);
    if (args.command == "viz-filters") return cmd_viz_filters(cfg, args);
    if (args.command == "viz-heatmap") return cmd_viz_heatmap(cfg, args);
    std::cerr << "error: unknown command '" << args.command << "'\n";
    print_usage();
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (argc < 2) print_usage();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
