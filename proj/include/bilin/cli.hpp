#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bilin/adversarial.hpp"
#include "bilin/analysis.hpp"
#include "bilin/challenge.hpp"
#include "bilin/data.hpp"
#include "bilin/decompose.hpp"
#include "bilin/errors.hpp"
#include "bilin/io.hpp"
#include "bilin/model.hpp"
#include "bilin/train.hpp"

namespace bilin {

namespace cli_detail {

namespace fs = std::filesystem;

inline std::string data_dir_or_env(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("BLNR_DATA_DIR")) return env;
  return "data";
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad JSON in " + path + ": " + e.what());
  }
}

// <out>/<command>/<timestamp>-<seed>/ ; suffixed when the second resolution
// collides.
inline fs::path make_run_dir(const std::string& out_dir, const std::string& command,
                             std::uint64_t seed) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);

  fs::path base = fs::path(out_dir) / command;
  fs::create_directories(base);
  fs::path dir = base / (std::string(stamp) + "-" + std::to_string(seed));
  for (int i = 2; fs::exists(dir); ++i)
    dir = base / (std::string(stamp) + "-" + std::to_string(seed) + "-" + std::to_string(i));
  fs::create_directories(dir);
  return dir;
}

struct Run {
  fs::path dir;
  RunManifest manifest;

  std::string path(const std::string& name) {
    manifest.artifact_paths.push_back(name);  // relative to the run dir
    return (dir / name).string();
  }

  void finish() { manifest.write((dir / "manifest.json").string()); }
};

inline Run begin_run(const std::string& out_dir, const std::string& command, std::uint64_t seed,
                     const nlohmann::json& effective_config) {
  Run run;
  run.dir = make_run_dir(out_dir, command, seed);
  run.manifest.command = command;
  run.manifest.seed = seed;
  run.manifest.config_json = effective_config.dump();
  return run;
}

inline Vector class_onehot(std::size_t n_classes, std::size_t c) {
  Vector u(n_classes, 0.0);
  u[c] = 1.0;
  return u;
}

inline std::size_t image_side(std::size_t n) {
  const auto side = std::size_t(std::lround(std::sqrt(double(n))));
  return side * side == n ? side : 0;
}

inline void render_rows_as_ppm(const Matrix& rows, std::size_t count, Run& run,
                               const std::string& prefix) {
  const std::size_t side = image_side(rows.cols());
  if (side == 0) throw InvalidInput("render: rows are not square images");
  count = std::min(count, rows.rows());
  for (std::size_t i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03zu.ppm", prefix.c_str(), i);
    write_ppm_diverging(rows.row_copy(i), side, side, run.path(name));
  }
}

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string data_dir;
  std::string out_dir = "out";
  std::vector<std::string> checkpoints;
  long long class_index = -1;
  long long k = -1;
  double scale = 1.0;
  double rcond = kDefaultRcond;
};

inline Model load_single_checkpoint(const CommonArgs& args) {
  if (args.checkpoints.size() != 1)
    throw InvalidInput("expected exactly one --checkpoint");
  return load_checkpoint(args.checkpoints[0]);
}

inline std::string checkpoint_sha(const Model& m) { return sha256_hex(checkpoint_bytes(m)); }

// ---- subcommand bodies ----------------------------------------------------

inline void cmd_train(const CommonArgs& args) {
  if (args.config_path.empty()) throw InvalidInput("train: --config is required");
  nlohmann::json cfg = load_json_file(args.config_path);
  ModelConfig model_cfg = model_config_from_json(cfg.value("model", nlohmann::json::object()));
  TrainConfig train_cfg = train_config_from_json(cfg.value("train", nlohmann::json::object()));
  if (args.seed_given) train_cfg.seed = args.seed;

  const std::string data_dir = data_dir_or_env(args.data_dir);
  Dataset train_data = load_mnist_split(data_dir, true);
  Dataset test_data = load_mnist_split(data_dir, false);

  nlohmann::json effective{{"model", model_config_to_json(model_cfg)},
                           {"train", train_config_to_json(train_cfg)}};
  Run run = begin_run(args.out_dir, "train", train_cfg.seed, effective);

  Model model = train(train_cfg, model_cfg, train_data);
  const auto bytes = checkpoint_bytes(model);
  run.manifest.checkpoint_hash = sha256_hex(bytes);
  {
    std::ofstream out(run.path("model.blnr"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }

  EvalResult on_train = evaluate(model, train_data);
  EvalResult on_test = evaluate(model, test_data);
  nlohmann::json report{{"train_accuracy", on_train.accuracy},
                        {"test_accuracy", on_test.accuracy},
                        {"test_per_class", on_test.per_class_accuracy}};
  std::ofstream(run.path("eval.json")) << report.dump(2) << "\n";
  run.finish();
  std::cout << "test_accuracy " << on_test.accuracy << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_eval(const CommonArgs& args) {
  Model model = load_single_checkpoint(args);
  Dataset test_data = load_mnist_split(data_dir_or_env(args.data_dir), false);
  Run run = begin_run(args.out_dir, "eval", model.seed,
                      {{"checkpoint", args.checkpoints[0]}});
  run.manifest.checkpoint_hash = checkpoint_sha(model);
  EvalResult r = evaluate(model, test_data);
  nlohmann::json report{{"accuracy", r.accuracy}, {"per_class", r.per_class_accuracy}};
  std::ofstream(run.path("eval.json")) << report.dump(2) << "\n";
  run.finish();
  std::cout << "accuracy " << r.accuracy << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_spectrum(const CommonArgs& args) {
  Model model = load_single_checkpoint(args);
  if (args.class_index < 0) throw InvalidInput("spectrum: --class is required");
  const auto c = std::size_t(args.class_index);

  Run run = begin_run(args.out_dir, "spectrum", model.seed,
                      {{"checkpoint", args.checkpoints[0]}, {"class", c}});
  run.manifest.checkpoint_hash = checkpoint_sha(model);

  ClassSpectrum cs = class_spectrum(model, c);
  write_spectrum_csv(cs.spectrum, run.path("spectrum.csv"));
  write_matrix_sidecar(cs.spectrum.eigenvectors, run.path("eigenvectors.bin"));
  write_matrix_sidecar(cs.pixel_eigenvectors, run.path("pixel_eigenvectors.bin"));
  run.finish();
  std::cout << "rows " << cs.spectrum.size() << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

// Renders rows of a previously exported sidecar; never recomputes spectra.
inline void cmd_render(const CommonArgs& args, const std::string& sidecar) {
  if (sidecar.empty()) throw InvalidInput("render: sidecar path is required");
  Matrix rows = read_matrix_sidecar(sidecar);
  const std::size_t count = args.k < 0 ? std::min<std::size_t>(rows.rows(), 8) : std::size_t(args.k);
  Run run = begin_run(args.out_dir, "render", 0, {{"sidecar", sidecar}, {"k", count}});
  render_rows_as_ppm(rows, count, run, "eigvec");
  run.finish();
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_truncate(const CommonArgs& args) {
  Model model = load_single_checkpoint(args);
  if (args.k < 0) throw InvalidInput("truncate: --k is required");
  Dataset test_data = load_mnist_split(data_dir_or_env(args.data_dir), false);

  Run run = begin_run(args.out_dir, "truncate", model.seed,
                      {{"checkpoint", args.checkpoints[0]}, {"k", args.k}});
  run.manifest.checkpoint_hash = checkpoint_sha(model);

  SpectrumCache cache;
  const double trunc = truncated_accuracy(model, std::size_t(args.k), test_data, cache);
  const double full = evaluate(model, test_data).accuracy;
  nlohmann::json report{{"k", args.k}, {"truncated_accuracy", trunc}, {"full_accuracy", full}};
  std::ofstream(run.path("truncate.json")) << report.dump(2) << "\n";
  run.finish();
  std::cout << "truncated_accuracy " << trunc << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_similarity(const CommonArgs& args) {
  if (args.checkpoints.size() < 2)
    throw InvalidInput("similarity: need at least two --checkpoint");
  if (args.class_index < 0) throw InvalidInput("similarity: --class is required");
  const std::size_t top_k = args.k < 0 ? 10 : std::size_t(args.k);

  std::vector<Model> models;
  for (const std::string& path : args.checkpoints) models.push_back(load_checkpoint(path));

  Run run = begin_run(args.out_dir, "similarity", models[0].seed,
                      {{"checkpoints", args.checkpoints},
                       {"class", args.class_index},
                       {"k", top_k}});
  SpectrumCache cache;
  SimilarityReport rep =
      eigenvector_similarity(models, std::size_t(args.class_index), top_k, cache);

  std::ofstream csv(run.path("similarity.csv"));
  csv << "rank,mean,p05,p95";
  for (std::size_t p = 0; p < rep.per_rank_similarity.cols(); ++p) csv << ",pair" << p;
  csv << "\n";
  for (std::size_t r = 0; r < rep.mean_per_rank.size(); ++r) {
    csv << (r + 1) << "," << format_double(rep.mean_per_rank[r]) << ","
        << format_double(rep.confidence_band.first[r]) << ","
        << format_double(rep.confidence_band.second[r]);
    for (std::size_t p = 0; p < rep.per_rank_similarity.cols(); ++p)
      csv << "," << format_double(rep.per_rank_similarity(r, p));
    csv << "\n";
  }
  run.finish();
  std::cout << "rank1_mean " << rep.mean_per_rank[0] << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_sparsity_sweep(const CommonArgs& args) {
  if (args.config_path.empty()) throw InvalidInput("sparsity-sweep: --config is required");
  nlohmann::json cfg = load_json_file(args.config_path);
  ModelConfig model_cfg = model_config_from_json(cfg.value("model", nlohmann::json::object()));
  TrainConfig base = train_config_from_json(cfg.value("train", nlohmann::json::object()));
  if (args.seed_given) base.seed = args.seed;
  std::vector<double> noises, decays;
  try {
    noises = cfg.at("noise_stds").get<std::vector<double>>();
    decays = cfg.at("weight_decays").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("sparsity-sweep config: ") + e.what());
  }
  std::size_t subset = cfg.value("train_subset", std::size_t{0});

  Dataset train_data = load_mnist_split(data_dir_or_env(args.data_dir), true);
  if (subset > 0) train_data = train_data.subset(subset);

  Run run = begin_run(args.out_dir, "sparsity-sweep", base.seed, cfg);
  auto table = sparsity_sweep(noises, decays, base, model_cfg, train_data);

  std::ofstream csv(run.path("sweep.csv"));
  csv << "noise_std,weight_decay,seed,eigenvalue_sparsity,eigenvector_sparsity\n";
  for (const SweepCell& cell : table)
    csv << format_double(cell.noise_std) << "," << format_double(cell.weight_decay) << ","
        << cell.seed << "," << format_double(cell.eigenvalue_sparsity) << ","
        << format_double(cell.eigenvector_sparsity) << "\n";
  run.finish();
  std::cout << "cells " << table.size() << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_hosvd(const CommonArgs& args) {
  Model model = load_single_checkpoint(args);
  const std::size_t k = args.k < 0 ? std::min<std::size_t>(model.config.hidden(), 16)
                                   : std::size_t(args.k);
  Run run = begin_run(args.out_dir, "hosvd", model.seed,
                      {{"checkpoint", args.checkpoints[0]}, {"k", k}});
  run.manifest.checkpoint_hash = checkpoint_sha(model);

  HosvdResult res = hosvd(model, k);
  std::ofstream csv(run.path("hosvd.csv"));
  csv << "rank,singular_value\n";
  for (std::size_t i = 0; i < res.singular_values.size(); ++i)
    csv << (i + 1) << "," << format_double(res.singular_values[i]) << "\n";
  write_matrix_sidecar(res.output_directions, run.path("output_directions.bin"));
  for (std::size_t i = 0; i < std::min<std::size_t>(res.interaction_components.size(), 8); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "component_%03zu.bin", i);
    write_matrix_sidecar(res.interaction_components[i], run.path(name));
  }
  run.finish();
  std::cout << "sigma1 " << (res.singular_values.empty() ? 0.0 : res.singular_values[0]) << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_explain(const CommonArgs& args) {
  Model model = load_single_checkpoint(args);
  Dataset test_data = load_mnist_split(data_dir_or_env(args.data_dir), false);
  std::size_t index = 0;
  if (!args.config_path.empty())
    index = load_json_file(args.config_path).value("test_index", std::size_t{0});
  if (index >= test_data.size()) throw InvalidInput("explain: test_index out of range");
  const std::size_t top_m = args.k < 0 ? 5 : std::size_t(args.k);

  Run run = begin_run(args.out_dir, "explain", model.seed,
                      {{"checkpoint", args.checkpoints[0]},
                       {"test_index", index},
                       {"top_m", top_m}});
  run.manifest.checkpoint_hash = checkpoint_sha(model);

  SpectrumCache cache;
  Vector x = test_data.images.row_copy(index);
  ExplainReport rep = explain_input(model, x, top_m, cache);

  nlohmann::json classes = nlohmann::json::array();
  for (const auto& entry : rep.top_classes) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : entry.terms)
      terms.push_back({{"rank", t.rank}, {"eigenvalue", t.eigenvalue},
                       {"activation", t.activation}});
    classes.push_back({{"class", entry.class_index},
                       {"logit", entry.logit},
                       {"activation_sum", entry.activation_sum},
                       {"terms", terms}});
  }
  nlohmann::json report{{"test_index", index},
                        {"label", test_data.labels[index]},
                        {"logits", rep.logits},
                        {"top_classes", classes}};
  std::ofstream(run.path("explain.json")) << report.dump(2) << "\n";

  // pixel eigenvectors referenced by the report, for rendering
  for (const auto& entry : rep.top_classes) {
    Matrix rows(entry.terms.size(), model.config.input_dim);
    for (std::size_t i = 0; i < entry.terms.size(); ++i)
      rows.set_row(i, entry.spectrum->pixel_eigenvectors.row_copy(entry.terms[i].rank));
    char name[64];
    std::snprintf(name, sizeof(name), "class%zu_eigvecs.bin", entry.class_index);
    write_matrix_sidecar(rows, run.path(name));
  }
  const std::size_t side = image_side(model.config.input_dim);
  if (side) write_ppm_diverging(x, side, side, run.path("input.ppm"));
  run.finish();
  std::cout << "predicted " << rep.top_classes[0].class_index << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_attack(const CommonArgs& args) {
  Model model = load_single_checkpoint(args);
  if (args.class_index < 0) throw InvalidInput("attack: --class (target digit) is required");
  const auto target = std::size_t(args.class_index);
  const std::size_t eig_rank = args.k < 0 ? 1 : std::size_t(args.k);
  Dataset test_data = load_mnist_split(data_dir_or_env(args.data_dir), false);

  Run run = begin_run(args.out_dir, "attack", model.seed,
                      {{"checkpoint", args.checkpoints[0]},
                       {"class", target},
                       {"k", eig_rank},
                       {"scale", args.scale},
                       {"rcond", args.rcond}});
  run.manifest.checkpoint_hash = checkpoint_sha(model);

  SpectrumCache cache;
  MaskSet masks = build_masks(model, eig_rank, args.rcond, cache);
  Vector mask = masks.masks.row_copy(target);

  AttackResult clean = attack_eval(model, test_data, Vector(mask.size(), 0.0), target, 0.0);
  AttackResult attacked = attack_eval(model, test_data, mask, target, args.scale);

  const int n_baselines = 20;
  double base_acc = 0.0, base_rate = 0.0;
  for (int b = 0; b < n_baselines; ++b) {
    Vector perm = permuted_baseline(mask, derive_seed(model.seed, std::uint64_t(b)));
    AttackResult r = attack_eval(model, test_data, perm, target, args.scale);
    base_acc += r.accuracy;
    base_rate += r.target_rate;
  }
  base_acc /= n_baselines;
  base_rate /= n_baselines;

  std::ofstream csv(run.path("attack.csv"));
  csv << "scale,accuracy,target_rate,baseline_accuracy,baseline_target_rate,clean_accuracy\n";
  csv << format_double(args.scale) << "," << format_double(attacked.accuracy) << ","
      << format_double(attacked.target_rate) << "," << format_double(base_acc) << ","
      << format_double(base_rate) << "," << format_double(clean.accuracy) << "\n";

  write_matrix_sidecar(masks.masks, run.path("masks.bin"));
  render_rows_as_ppm(masks.masks, masks.masks.rows(), run, "mask");
  run.finish();
  std::cout << "target_rate " << attacked.target_rate << " baseline " << base_rate << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_challenge(const CommonArgs& args) {
  if (args.config_path.empty()) throw InvalidInput("challenge: --config is required");
  nlohmann::json cfg = load_json_file(args.config_path);
  ModelConfig model_cfg = model_config_from_json(cfg.value("model", nlohmann::json::object()));
  TrainConfig train_cfg = train_config_from_json(cfg.value("train", nlohmann::json::object()));
  if (args.seed_given) train_cfg.seed = args.seed;
  model_cfg.use_bias = true;
  model_cfg.n_classes = 2;

  const std::string data_dir = data_dir_or_env(args.data_dir);
  Dataset train_data = load_mnist_split(data_dir, true);
  Dataset test_data = load_mnist_split(data_dir, false);

  // target: first '1'-labeled training image in native order, unless given
  long long target_index = cfg.value("target_index", -1);
  if (target_index < 0) {
    for (std::size_t i = 0; i < train_data.size(); ++i)
      if (train_data.labels[i] == 1) {
        target_index = (long long)i;
        break;
      }
  }
  if (target_index < 0 || std::size_t(target_index) >= train_data.size())
    throw InvalidInput("challenge: no valid target image");

  ChallengeSpec spec;
  spec.target = train_data.images.row_copy(std::size_t(target_index));

  Run run = begin_run(args.out_dir, "challenge", train_cfg.seed,
                      {{"model", model_config_to_json(model_cfg)},
                       {"train", train_config_to_json(train_cfg)},
                       {"target_index", target_index}});

  ChallengeResult res = run_challenge(train_data, spec, train_cfg, model_cfg);
  run.manifest.checkpoint_hash = sha256_hex(checkpoint_bytes(res.model));
  save_checkpoint(res.model, run.path("model.blnr"));

  // held-out evaluation under the frozen threshold
  ChallengeSpec test_spec = spec;
  test_spec.threshold_rule = ChallengeSpec::ThresholdRule::kFixedTau;
  test_spec.tau = res.tau;
  LabeledChallenge test_labeled = generate_labels(test_data, test_spec);
  SpectrumCache cache;
  const double test_acc = evaluate(res.model, test_labeled.data).accuracy;
  const double test_trunc = truncated_accuracy(res.model, 1, test_labeled.data, cache);

  Vector top10(res.diff_spectrum.eigenvalues.begin(),
               res.diff_spectrum.eigenvalues.begin() +
                   std::min<std::size_t>(10, res.diff_spectrum.size()));
  Vector bottom(res.diff_spectrum.eigenvalues.end() -
                    std::min<std::size_t>(5, res.diff_spectrum.size()),
                res.diff_spectrum.eigenvalues.end());
  nlohmann::json report{{"tau", res.tau},
                        {"target_index", target_index},
                        {"lambda_dominance", res.lambda_dominance},
                        {"top_eigenvalues", top10},
                        {"bottom_eigenvalues", bottom},
                        {"bias_diagonal", res.bias_diagonal},
                        {"train_accuracy", res.train_accuracy},
                        {"train_truncated_accuracy", res.truncated_train_accuracy},
                        {"test_accuracy", test_acc},
                        {"test_truncated_accuracy", test_trunc}};
  std::ofstream(run.path("challenge.json")) << report.dump(2) << "\n";
  write_spectrum_csv(res.diff_spectrum, run.path("spectrum.csv"));

  const std::size_t side = image_side(model_cfg.input_dim);
  if (side) {
    write_ppm_diverging(res.pixel_eigenvectors.row_copy(0), side, side,
                        run.path("top_eigenvector.ppm"));
    write_ppm_diverging(spec.target, side, side, run.path("target.ppm"));
    Vector complement(spec.target.size());
    for (std::size_t i = 0; i < complement.size(); ++i) complement[i] = 1.0 - spec.target[i];
    write_ppm_diverging(complement, side, side, run.path("complement.ppm"));
    write_ppm_diverging(res.bias_cross_pixel, side, side, run.path("bias_cross.ppm"));
  }
  run.finish();
  std::cout << "lambda_dominance " << res.lambda_dominance << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

inline void cmd_feature_transform(const CommonArgs& args) {
  Model model = load_single_checkpoint(args);
  if (args.config_path.empty()) throw InvalidInput("feature-transform: --config is required");
  nlohmann::json cfg = load_json_file(args.config_path);

  const std::size_t dim = model.interaction_dim();
  Matrix d_in = Matrix::identity(dim);
  if (cfg.contains("d_in") && cfg.at("d_in").is_string())
    d_in = read_matrix_sidecar(cfg.at("d_in").get<std::string>());
  Matrix rows_out = Matrix::identity(model.config.hidden());
  if (cfg.contains("rows_out") && cfg.at("rows_out").is_string())
    rows_out = read_matrix_sidecar(cfg.at("rows_out").get<std::string>());

  Run run = begin_run(args.out_dir, "feature-transform", model.seed, cfg);
  run.manifest.checkpoint_hash = checkpoint_sha(model);

  std::vector<Matrix> transformed = feature_transform(model, d_in, rows_out);
  std::ofstream csv(run.path("features.csv"));
  csv << "feature,frobenius_norm\n";
  for (std::size_t a = 0; a < transformed.size(); ++a)
    csv << a << "," << format_double(frobenius_norm(transformed[a])) << "\n";
  for (std::size_t a = 0; a < std::min<std::size_t>(transformed.size(), 16); ++a) {
    char name[64];
    std::snprintf(name, sizeof(name), "feature_%03zu.bin", a);
    write_matrix_sidecar(transformed[a], run.path(name));
  }
  run.finish();
  std::cout << "features " << transformed.size() << "\n";
  std::cout << "run_dir " << run.dir.string() << "\n";
}

}  // namespace cli_detail

// Exit codes: 0 success, 2 invalid input or format error, 3 numerical or
// training failure.
inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"bilinear MLP training and weight decomposition"};
  app.require_subcommand(1);

  cli_detail::CommonArgs common;
  std::string render_sidecar;

  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--seed", common.seed, "RNG seed override")
        ->each([&common](const std::string&) { common.seed_given = true; });
    sub->add_option("--data-dir", common.data_dir, "IDX data directory (default $BLNR_DATA_DIR)");
    sub->add_option("--out-dir", common.out_dir, "output root");
    sub->add_option("--checkpoint", common.checkpoints, "model checkpoint (repeatable)");
    sub->add_option("--class", common.class_index, "class index / target digit");
    sub->add_option("--k", common.k, "rank / count parameter");
    sub->add_option("--scale", common.scale, "mask scale");
    sub->add_option("--rcond", common.rcond, "pseudoinverse cutoff");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  CLI::App* spectrum_cmd = app.add_subcommand("spectrum", "per-class eigendecomposition");
  CLI::App* render_cmd = app.add_subcommand("render", "render a sidecar as PPM images");
  render_cmd->add_option("sidecar", render_sidecar, "matrix sidecar file");
  CLI::App* truncate_cmd = app.add_subcommand("truncate", "truncated-classifier accuracy");
  CLI::App* similarity_cmd = app.add_subcommand("similarity", "cross-model eigenvector similarity");
  CLI::App* sweep_cmd = app.add_subcommand("sparsity-sweep", "noise x weight-decay sparsity grid");
  CLI::App* hosvd_cmd = app.add_subcommand("hosvd", "higher-order SVD of the weight tensor");
  CLI::App* explain_cmd = app.add_subcommand("explain", "per-input eigenvector explanation");
  CLI::App* attack_cmd = app.add_subcommand("attack", "pseudoinverse adversarial masks");
  CLI::App* challenge_cmd = app.add_subcommand("challenge", "similarity-labeling recovery task");
  CLI::App* ft_cmd = app.add_subcommand("feature-transform", "tensor in a feature basis");
  for (CLI::App* sub : {train_cmd, eval_cmd, spectrum_cmd, render_cmd, truncate_cmd,
                        similarity_cmd, sweep_cmd, hosvd_cmd, explain_cmd, attack_cmd,
                        challenge_cmd, ft_cmd})
    add_common(sub);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) cli_detail::cmd_train(common);
    else if (eval_cmd->parsed()) cli_detail::cmd_eval(common);
    else if (spectrum_cmd->parsed()) cli_detail::cmd_spectrum(common);
    else if (render_cmd->parsed()) cli_detail::cmd_render(common, render_sidecar);
    else if (truncate_cmd->parsed()) cli_detail::cmd_truncate(common);
    else if (similarity_cmd->parsed()) cli_detail::cmd_similarity(common);
    else if (sweep_cmd->parsed()) cli_detail::cmd_sparsity_sweep(common);
    else if (hosvd_cmd->parsed()) cli_detail::cmd_hosvd(common);
    else if (explain_cmd->parsed()) cli_detail::cmd_explain(common);
    else if (attack_cmd->parsed()) cli_detail::cmd_attack(common);
    else if (challenge_cmd->parsed()) cli_detail::cmd_challenge(common);
    else if (ft_cmd->parsed()) cli_detail::cmd_feature_transform(common);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InsufficientData& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const TrainingFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace bilin
