// casc: train/evaluate the cascaded landmark alignment pipeline and poke at
// its pieces from the command line. Exit codes: 0 ok, 1 config error,
// 2 data error, 3 checkpoint error, 4 verification failure.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "casc/checkpoint.hpp"
#include "casc/config.hpp"
#include "casc/gradcheck.hpp"
#include "casc/pipeline.hpp"
#include "casc/shape_space.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string profile;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

casc::RunConfig resolve_config(const GlobalOpts& g) {
  casc::RunConfig cfg;
  if (!g.config_path.empty()) {
    cfg = casc::load_config(g.config_path);
    if (!g.profile.empty() && g.profile != cfg.profile) {
      // Profile flag wins over the file's profile; reparse on that base.
      std::ifstream in(g.config_path);
      nlohmann::json j;
      in >> j;
      j["profile"] = g.profile;
      cfg = casc::parse_config(j);
    }
  } else if (!g.profile.empty()) {
    cfg = casc::profile_config(g.profile);
  } else {
    cfg = casc::profile_config("paper");
  }
  if (g.seed_set) cfg.seed = g.seed;
  return cfg;
}

void print_shape(const casc::LandmarkShape& shape) {
  for (const casc::Point& p : shape.points)
    std::printf("%.6f %.6f\n", p.x, p.y);
}

int cmd_train(const GlobalOpts& g, const std::string& out_path) {
  casc::RunConfig cfg = resolve_config(g);
  cfg.validate();
  std::vector<casc::Sample> train = casc::load_dataset(cfg, false);
  casc::TrainArtifacts art = casc::train_full(
      cfg, train, [](const std::string& line) { std::cout << line << "\n"; });
  casc::save_checkpoint(art.model, out_path);
  std::cout << "checkpoint=" << out_path << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& image_path,
                const std::vector<double>& bbox) {
  casc::TrainedModel model = casc::load_checkpoint(ckpt_path);
  casc::Sample s;
  s.image = casc::read_pnm(image_path);
  s.bbox = {bbox[0], bbox[1], bbox[2], bbox[3]};
  if (s.bbox.width <= 0 || s.bbox.height <= 0)
    throw casc::data_error("bbox sides must be positive");
  print_shape(casc::predict_sample(model, s));
  return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& ckpt_path,
                 bool identity, const std::string& manifest,
                 const std::string& out_csv) {
  casc::RunConfig cfg = resolve_config(g);
  std::vector<casc::Sample> samples = casc::load_manifest_samples(manifest);
  if (samples.empty()) throw casc::data_error("manifest has no samples: " + manifest);

  std::vector<casc::LandmarkShape> predictions, truths;
  predictions.reserve(samples.size());
  for (const casc::Sample& s : samples) truths.push_back(s.shape);
  if (identity) {
    predictions = truths;
  } else {
    casc::TrainedModel model = casc::load_checkpoint(ckpt_path);
    for (const casc::Sample& s : samples)
      predictions.push_back(casc::predict_sample(model, s));
  }

  const auto [left, right] = casc::default_eye_indices(truths.front().size());
  const std::vector<double> thresholds =
      cfg.ced_thresholds.empty() ? casc::default_ced_thresholds() : cfg.ced_thresholds;
  casc::EvalReport rep = casc::make_report(predictions, truths, left, right, thresholds);
  casc::write_report(rep, out_csv);
  casc::write_summary(rep, out_csv + ".summary");
  std::cout << "mean_error_percent=" << casc::format_fixed6(rep.mean * 100.0) << "\n";
  return 0;
}

int cmd_augment(const GlobalOpts& g, const std::string& manifest,
                const std::string& out_dir) {
  casc::RunConfig cfg = resolve_config(g);
  std::vector<casc::Sample> samples = casc::load_manifest_samples(manifest);
  if (samples.empty()) throw casc::data_error("manifest has no samples: " + manifest);

  casc::AugmentConfig aug = cfg.augment;
  if (aug.mirror && aug.mirror_perm.empty() && samples.front().shape.size() == 68)
    aug.mirror_perm = casc::mirror_permutation_68();
  std::vector<casc::Sample> expanded = casc::augment_dataset(samples, aug, cfg.seed);

  std::filesystem::create_directories(out_dir);
  std::ofstream mf(std::filesystem::path(out_dir) / "manifest.txt");
  if (!mf) throw casc::data_error("cannot write manifest in " + out_dir);
  for (std::size_t i = 0; i < expanded.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "aug_%06zu", i);
    const std::string img = std::string(stem) + ".pgm";
    const std::string pts = std::string(stem) + ".pts";
    casc::write_pgm(expanded[i].image, (std::filesystem::path(out_dir) / img).string());
    casc::save_pts(expanded[i].shape, (std::filesystem::path(out_dir) / pts).string());
    mf << img << " " << pts << " " << expanded[i].bbox.left << " "
       << expanded[i].bbox.top << " " << expanded[i].bbox.width << " "
       << expanded[i].bbox.height << "\n";
  }
  std::cout << "inputs=" << samples.size() << " outputs=" << expanded.size()
            << " multiplicity=" << aug.multiplicity() << "\n";
  return 0;
}

int cmd_cluster_shapes(const GlobalOpts& g, const std::string& manifest,
                       const std::string& out_path) {
  casc::RunConfig cfg = resolve_config(g);
  std::vector<casc::Sample> samples = casc::load_manifest_samples(manifest);
  if (samples.empty()) throw casc::data_error("manifest has no samples: " + manifest);
  casc::WorkingSet ws = casc::prepare_working_set(samples, cfg.input_size);
  casc::KmeansResult km = casc::kmeans_shapes(
      ws.shapes, static_cast<std::size_t>(cfg.shape_space_size), cfg.seed,
      cfg.kmeans_max_iters);
  for (const std::string& w : km.warnings) std::cerr << "warning: " << w << "\n";

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw casc::data_error("cannot write shape space: " + out_path);
  out.write("SSPC", 4);
  casc::detail::put_u64(out, km.space.candidates.size());
  casc::detail::put_u64(out, km.space.landmark_count());
  for (const casc::LandmarkShape& s : km.space.candidates)
    for (double v : s.flat()) casc::detail::put_f64(out, v);
  std::cout << "candidates=" << km.space.size()
            << " iterations=" << km.objective_trace.size() << "\n";
  return 0;
}

int cmd_gradcheck(bool corrupt) {
  std::vector<casc::OpCheck> table = casc::run_gradcheck_suite(corrupt);
  bool all_ok = true;
  for (const casc::OpCheck& c : table) {
    std::printf("op=%s max_rel_err=%.3e tol=%.0e status=%s\n", c.op.c_str(),
                c.max_rel_err, c.tolerance, c.ok() ? "ok" : "FAIL");
    all_ok = all_ok && c.ok();
  }
  return all_ok ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep cascaded regression for facial landmark alignment"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON configuration file");
  app.add_option("--profile", g.profile, "configuration profile (desk|paper)");
  app.add_option("--seed", g.seed, "seed override")->each([&](const std::string&) {
    g.seed_set = true;
  });

  auto* train = app.add_subcommand("train", "run the three training phases");
  std::string train_out = "model.casc";
  train->add_option("--out", train_out, "checkpoint output path");

  auto* predict = app.add_subcommand("predict", "predict landmarks for one image");
  std::string pr_ckpt, pr_image;
  std::vector<double> pr_bbox;
  predict->add_option("--checkpoint", pr_ckpt, "trained checkpoint")->required();
  predict->add_option("--image", pr_image, "P5/P6 image")->required();
  predict->add_option("--bbox", pr_bbox, "face box: left top width height")
      ->expected(4)
      ->required();

  auto* evaluate = app.add_subcommand("evaluate", "mean error and CED over a manifest");
  std::string ev_ckpt, ev_manifest, ev_out = "report.csv";
  bool ev_identity = false;
  evaluate->add_option("--checkpoint", ev_ckpt, "trained checkpoint");
  evaluate->add_flag("--identity", ev_identity,
                     "score ground truth against itself (metric harness check)");
  evaluate->add_option("--manifest", ev_manifest, "evaluation manifest")->required();
  evaluate->add_option("--out", ev_out, "CSV report path");

  auto* augment = app.add_subcommand("augment", "expand a dataset on disk");
  std::string au_manifest, au_out;
  augment->add_option("--manifest", au_manifest, "input manifest")->required();
  augment->add_option("--out-dir", au_out, "output directory")->required();

  auto* cluster = app.add_subcommand("cluster-shapes", "build the candidate shape space");
  std::string cl_manifest, cl_out = "shapes.sspc";
  cluster->add_option("--manifest", cl_manifest, "training manifest")->required();
  cluster->add_option("--out", cl_out, "shape space output path");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op");
  bool gc_corrupt = false;
  gradcheck->add_flag("--corrupt", gc_corrupt,
                      "inject a broken backward pass (harness self-test)");

  // Let --config/--profile/--seed appear after the subcommand too.
  for (CLI::App* sub : {train, predict, evaluate, augment, cluster, gradcheck})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (train->parsed()) return cmd_train(g, train_out);
    if (predict->parsed()) return cmd_predict(pr_ckpt, pr_image, pr_bbox);
    if (evaluate->parsed()) {
      if (!ev_identity && ev_ckpt.empty())
        throw casc::config_error("evaluate needs --checkpoint or --identity");
      return cmd_evaluate(g, ev_ckpt, ev_identity, ev_manifest, ev_out);
    }
    if (augment->parsed()) return cmd_augment(g, au_manifest, au_out);
    if (cluster->parsed()) return cmd_cluster_shapes(g, cl_manifest, cl_out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_corrupt);
  } catch (const casc::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const casc::checkpoint_error& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 3;
  } catch (const casc::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const casc::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
