// ssn-lab: experiment driver for the stochastic segmentation toolkit.
//
// Exit codes: 0 ok, 2 usage or invalid input, 3 divergence, 4 I/O,
// 5 check failure.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssn/assembly.hpp"
#include "ssn/errors.hpp"
#include "ssn/io.hpp"
#include "ssn/likelihood.hpp"
#include "ssn/metrics.hpp"
#include "ssn/rng.hpp"
#include "ssn/toy.hpp"

namespace fs = std::filesystem;
using ssn::io::Json;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kDivergence = 3, kIo = 4, kCheckFailed = 5 };

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ssn::IoError("cannot create directory " + dir.string());
}

void write_json(const fs::path& path, const Json& doc) {
  ssn::io::write_text(path, doc.dump(2) + "\n");
}

struct TrainArgs {
  std::string mode = "lowrank";
  ssn::toy::TrainConfig config;
  fs::path out;
};

void add_train_flags(CLI::App* cmd, ssn::toy::TrainConfig& c) {
  cmd->add_option("--mc-samples", c.mc_samples, "Monte-Carlo samples per joint iteration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--iters", c.iterations, "joint-training iterations")->capture_default_str();
  cmd->add_option("--pretrain-iters", c.pretrain_iterations, "mean pre-training iterations")
      ->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "joint-training learning rate")->capture_default_str();
  cmd->add_option("--pretrain-lr", c.pretrain_learning_rate, "pre-training learning rate")
      ->capture_default_str();
  cmd->add_option("--overflow-threshold", c.overflow_threshold,
                  "early-stop bound on any parameter magnitude or loss")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--eval-lik-samples", c.eval_lik_samples,
                  "Monte-Carlo samples for the final NLL estimate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

int run_toy_train(const TrainArgs& a) {
  const auto mode =
      a.mode == "diagonal" ? ssn::toy::CovarianceMode::diagonal : ssn::toy::CovarianceMode::lowrank;
  ensure_dir(a.out);
  const auto report = ssn::toy::train_toy(a.config, mode);
  ssn::io::save_ssnt(a.out / "model.ssnt", report.checkpoint);

  std::ostringstream csv;
  csv << "iteration,phase,loss\n";
  for (std::size_t i = 0; i < report.loss_trace.size(); ++i) {
    const bool joint = i >= report.phase_boundary;
    csv << (joint ? i - report.phase_boundary : i) << ',' << (joint ? "joint" : "pretrain") << ','
        << num(report.loss_trace[i]) << '\n';
  }
  ssn::io::write_text(a.out / "loss.csv", csv.str());

  const auto& c = a.config;
  Json doc;
  doc["mode"] = a.mode;
  doc["rank"] = c.rank;
  doc["seed"] = c.seed;
  doc["mc_samples"] = c.mc_samples;
  doc["iterations"] = c.iterations;
  doc["pretrain_iterations"] = c.pretrain_iterations;
  doc["learning_rate"] = c.learning_rate;
  doc["pretrain_learning_rate"] = c.pretrain_learning_rate;
  doc["overflow_threshold"] = c.overflow_threshold;
  doc["eval_lik_samples"] = c.eval_lik_samples;
  doc["stop_reason"] = ssn::toy::to_string(report.stop_reason);
  doc["stop_detail"] = report.stop_detail;
  doc["joint_iterations_run"] = report.joint_iterations_run;
  doc["phase_boundary"] = report.phase_boundary;
  doc["final_nll_per_map"] = report.final_nll_per_map;
  write_json(a.out / "report.json", doc);

  std::cout << "mode=" << a.mode << " rank=" << c.rank << " seed=" << c.seed
            << " stop_reason=" << ssn::toy::to_string(report.stop_reason)
            << " final_nll_per_map=" << num(report.final_nll_per_map) << "\n";
  return kOk;
}

struct EvalArgs {
  fs::path model;
  std::size_t samples = 10000;
  std::size_t lik_samples = 10000;
  std::uint64_t seed = 0;
  fs::path out;
};

// Mean absolute covariance inside the middle-third block over the mean outside it.
double block_ratio(const ssn::Tensor& cov) {
  using ssn::toy::kPixels;
  using ssn::toy::kThird;
  double inside = 0.0, outside = 0.0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < kPixels; ++i) {
    for (std::size_t j = 0; j < kPixels; ++j) {
      const bool mid = i >= kThird && i < 2 * kThird && j >= kThird && j < 2 * kThird;
      (mid ? inside : outside) += std::abs(cov(i, j));
      ++(mid ? n_in : n_out);
    }
  }
  inside /= static_cast<double>(n_in);
  outside /= static_cast<double>(n_out);
  return outside > 0.0 ? inside / outside : std::numeric_limits<double>::infinity();
}

int run_toy_eval(const EvalArgs& a) {
  using ssn::toy::kPixels;
  const auto model = ssn::io::load_ssnt(a.model);
  if (model.pixels() != kPixels || model.classes() != 1) {
    throw ssn::IoError(a.model.string() + " is not a toy model (S=21, C=1)");
  }
  ensure_dir(a.out);
  const auto eval = ssn::toy::evaluate_toy(model, a.samples, a.lik_samples, a.seed);

  Json doc;
  doc["nll_per_map"] = eval.nll_per_map;
  doc["nll_by_map"] = eval.nll_by_map;
  doc["samples"] = eval.samples;
  doc["map_counts"] = eval.map_counts;
  const double n = static_cast<double>(eval.samples);
  doc["map_fraction"] = {eval.map_counts[0] / n, eval.map_counts[1] / n};
  doc["exact_match_fraction"] = (eval.map_counts[0] + eval.map_counts[1]) / n;
  doc["diversity"] = eval.diversity;
  doc["ged"] = ssn::io::to_json(eval.ged);
  doc["covariance_block_ratio"] = block_ratio(eval.covariance);
  Json hist = Json::array();
  for (const auto& h : eval.histogram) hist.push_back({{"pattern", h.pattern}, {"count", h.count}});
  doc["histogram"] = std::move(hist);
  write_json(a.out / "eval.json", doc);

  ssn::io::write_heatmap(a.out / "mean.pgm", kPixels, 1, model.mean().data(), 8, 1);
  ssn::io::write_heatmap(a.out / "covariance.pgm", kPixels, kPixels, eval.covariance.data());
  // 14 thresholded samples side by side, one column each.
  constexpr std::size_t kColumns = 14;
  const auto batch = ssn::sample(model, kColumns, ssn::mix_seed(a.seed, 99));
  std::vector<double> grid(kPixels * kColumns);
  for (std::size_t m = 0; m < kColumns; ++m) {
    for (std::size_t i = 0; i < kPixels; ++i) grid[i * kColumns + m] = batch.values(m, i) > 0.0;
  }
  ssn::io::write_heatmap(a.out / "samples.pgm", kPixels, kColumns, grid, 8, 1);

  std::cout << "nll_per_map=" << num(eval.nll_per_map) << " diversity=" << num(eval.diversity)
            << " ged_squared=" << num(eval.ged.ged_squared) << "\n";
  return kOk;
}

struct SweepArgs {
  std::vector<std::size_t> ranks{1, 2, 5, 10, 15, 20};
  std::size_t seeds = 5;
  std::size_t jobs = 1;
  ssn::toy::TrainConfig config;
  ssn::toy::SweepOptions options;
  fs::path out;
};

int run_rank_sweep(SweepArgs a) {
  ensure_dir(a.out);
  std::vector<std::uint64_t> seeds(a.seeds);
  for (std::size_t k = 0; k < a.seeds; ++k) seeds[k] = k;
  a.options.jobs = a.jobs;
  const auto result = ssn::toy::rank_sweep(a.ranks, seeds, a.config, a.options);

  std::ostringstream rows;
  rows << "rank,seed,nll,diversity,ged2,stop_reason,status\n";
  for (const auto& r : result.rows) {
    std::string status = r.status;
    for (char& ch : status) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    rows << r.rank << ',' << r.seed << ',' << num(r.nll) << ',' << num(r.diversity) << ','
         << num(r.ged2) << ',' << ssn::toy::to_string(r.stop_reason) << ',' << status << '\n';
  }
  ssn::io::write_text(a.out / "sweep.csv", rows.str());

  std::ostringstream sum;
  sum << "rank,runs,succeeded,nll_mean,nll_se,diversity_mean,diversity_se,ged2_mean,ged2_se\n";
  for (const auto& s : result.summary) {
    sum << s.rank << ',' << s.runs << ',' << s.succeeded << ',' << num(s.nll.mean) << ','
        << num(s.nll.standard_error) << ',' << num(s.diversity.mean) << ','
        << num(s.diversity.standard_error) << ',' << num(s.ged2.mean) << ','
        << num(s.ged2.standard_error) << '\n';
    std::cout << "rank " << s.rank << ": nll " << num(s.nll.mean) << " +- "
              << num(s.nll.standard_error) << " (" << s.succeeded << "/" << s.runs << " ok)\n";
  }
  ssn::io::write_text(a.out / "summary.csv", sum.str());
  return kOk;
}

struct SampleArgs {
  fs::path model;
  std::size_t n = 10;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  fs::path out;
};

int run_sample(const SampleArgs& a) {
  const auto model = ssn::io::load_ssnt(a.model);
  ensure_dir(a.out);
  const auto batch = ssn::sample(model, a.n, a.seed);
  const std::size_t s = model.pixels(), c = model.classes();
  const std::size_t width = std::to_string(a.n > 0 ? a.n - 1 : 0).size();
  for (std::size_t m = 0; m < a.n; ++m) {
    std::vector<int> labels(s);
    for (std::size_t i = 0; i < s; ++i) {
      if (c == 1) {
        labels[i] = batch.values(m, i) > a.threshold ? 1 : 0;
        continue;
      }
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (batch.values(m, i * c + k) > batch.values(m, i * c + best)) best = k;
      }
      labels[i] = static_cast<int>(best);
    }
    std::string index = std::to_string(m);
    index.insert(0, std::max<std::size_t>(width, 4) - index.size(), '0');
    ssn::io::save_labelmap(a.out / ("sample_" + index + ".json"),
                           ssn::LabelMap(std::move(labels), static_cast<int>(c)));
  }
  std::cout << "wrote " << a.n << " label maps to " << a.out.string() << "\n";
  return kOk;
}

struct ManipulateArgs {
  fs::path model;
  std::string scale;
  fs::path out;
};

int run_manipulate(const ManipulateArgs& a) {
  const auto model = ssn::io::load_ssnt(a.model);
  const std::string text = !a.scale.empty() && a.scale.front() == '{' ? a.scale
                                                                     : ssn::io::read_text(a.scale);
  ssn::DeviationScale scale;
  try {
    scale = ssn::io::deviation_scale_from_json(Json::parse(text));
  } catch (const Json::exception& e) {
    throw ssn::IoError(std::string("malformed scale JSON: ") + e.what());
  }
  ssn::io::save_ssnt(a.out, ssn::apply_deviation_scale(model, scale));
  return kOk;
}

struct MetricsArgs {
  fs::path gt, pred, out;
};

int run_metrics(const MetricsArgs& a) {
  const ssn::SampleSet gt(ssn::io::load_labelmap_dir(a.gt), ssn::SampleSource::ground_truth);
  const ssn::SampleSet pred(ssn::io::load_labelmap_dir(a.pred), ssn::SampleSource::model);
  const auto report = ssn::ged_squared(gt, pred);
  Json doc = ssn::io::to_json(report);
  doc["gt_samples"] = gt.size();
  doc["pred_samples"] = pred.size();
  write_json(a.out, doc);
  std::cout << "ged_squared=" << num(report.ged_squared) << " diversity=" << num(report.diversity)
            << "\n";
  return kOk;
}

struct GradcheckArgs {
  std::size_t trials = 50;
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradcheckArgs& a) {
  const auto r = ssn::gradient_check(a.trials, a.seed);
  std::cout << "gradcheck: " << r.trials << " trials, " << r.coordinates << " coordinates, "
            << r.failures << " failures, max relative error " << num(r.worst_relative_error)
            << ", max absolute error " << num(r.worst_absolute_error) << "\n";
  return r.passed() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic segmentation toolkit: toy experiment, rank sweep, sampling, "
               "manipulation, metrics and gradient checks."};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 2 usage, 3 divergence, 4 I/O, 5 check failure.");

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("toy-train", "Train a model on the 21-pixel toy problem");
  cmd_train->add_option("--mode", train.mode, "covariance mode")
      ->check(CLI::IsMember({"diagonal", "lowrank"}))
      ->capture_default_str();
  cmd_train->add_option("--rank", train.config.rank, "factor rank")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20))
      ->capture_default_str();
  cmd_train->add_option("--seed", train.config.seed, "random seed")->capture_default_str();
  add_train_flags(cmd_train, train.config);
  cmd_train->add_option("--out", train.out, "output directory")->required();
  cmd_train->footer(
      "Writes model.ssnt, loss.csv (iteration,phase,loss) and report.json with keys: mode, rank, "
      "seed, mc_samples, iterations, pretrain_iterations, learning_rate, pretrain_learning_rate, "
      "overflow_threshold, eval_lik_samples, stop_reason, stop_detail, joint_iterations_run, "
      "phase_boundary, final_nll_per_map.");

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("toy-eval", "Evaluate a toy model and write plots");
  cmd_eval->add_option("--model", eval.model, "SSNT model file")->required();
  cmd_eval->add_option("--samples", eval.samples, "samples for histogram and metrics")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_eval->add_option("--lik-samples", eval.lik_samples, "Monte-Carlo samples for the NLL")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_eval->add_option("--seed", eval.seed, "random seed")->capture_default_str();
  cmd_eval->add_option("--out", eval.out, "output directory")->required();
  cmd_eval->footer(
      "Writes eval.json with keys: nll_per_map, nll_by_map, samples, map_counts, map_fraction, "
      "exact_match_fraction, diversity, ged {ged_squared, diversity, cross_term, gt_self_term}, "
      "covariance_block_ratio, histogram [{pattern, count}]; and mean.pgm, covariance.pgm "
      "(21x21), samples.pgm (14 columns), each with a .json sidecar giving the value range.");

  SweepArgs sweep;
  auto* cmd_sweep = app.add_subcommand("rank-sweep", "Train and evaluate over ranks and seeds");
  cmd_sweep->add_option("--ranks", sweep.ranks, "comma-separated ranks")
      ->delimiter(',')
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_sweep->add_option("--seeds", sweep.seeds, "number of seeds (0..N-1)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  auto* jobs_opt = cmd_sweep->add_option("--jobs", sweep.jobs, "worker threads (default 1)")
                       ->check(CLI::PositiveNumber);
  cmd_sweep->add_option("--eval-samples", sweep.options.eval_samples, "evaluation samples per run")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_train_flags(cmd_sweep, sweep.config);
  cmd_sweep->add_option("--out", sweep.out, "output directory")->required();
  cmd_sweep->footer(
      "Writes sweep.csv (rank,seed,nll,diversity,ged2,stop_reason,status) and summary.csv "
      "(rank,runs,succeeded,nll_mean,nll_se,diversity_mean,diversity_se,ged2_mean,ged2_se). "
      "SSN_LAB_JOBS sets --jobs when the flag is absent.");

  SampleArgs samp;
  auto* cmd_sample = app.add_subcommand("sample", "Draw label-map samples from a model");
  cmd_sample->add_option("--model", samp.model, "SSNT model file")->required();
  cmd_sample->add_option("--n", samp.n, "number of samples")->capture_default_str();
  cmd_sample->add_option("--seed", samp.seed, "random seed")->capture_default_str();
  cmd_sample->add_option("--threshold", samp.threshold, "foreground logit threshold (C=1)")
      ->capture_default_str();
  cmd_sample->add_option("--out", samp.out, "output directory")->required();
  cmd_sample->footer(
      "Writes sample_NNNN.json label maps with keys: shape, num_classes, labels. Binary models "
      "threshold the logit; multi-class models take the per-pixel argmax.");

  ManipulateArgs manip;
  auto* cmd_manip = app.add_subcommand("manipulate", "Scale class deviations and temperature");
  cmd_manip->add_option("--model", manip.model, "SSNT model file")->required();
  cmd_manip->add_option("--scale", manip.scale,
                        "JSON file or inline JSON {\"per_class\":[...],\"temperature\":t}")
      ->required();
  cmd_manip->add_option("--out", manip.out, "output SSNT file")->required();

  MetricsArgs met;
  auto* cmd_metrics = app.add_subcommand("metrics", "GED and diversity between sample sets");
  cmd_metrics->add_option("--gt", met.gt, "directory of ground-truth label maps")->required();
  cmd_metrics->add_option("--pred", met.pred, "directory of predicted label maps")->required();
  cmd_metrics->add_option("--out", met.out, "output JSON file")->required();
  cmd_metrics->footer(
      "Writes JSON with keys: ged_squared, diversity, cross_term, gt_self_term, gt_samples, "
      "pred_samples.");

  GradcheckArgs grad;
  auto* cmd_grad = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradient");
  cmd_grad->add_option("--trials", grad.trials, "random instances")->capture_default_str();
  cmd_grad->add_option("--seed", grad.seed, "random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*cmd_train) return run_toy_train(train);
    if (*cmd_eval) return run_toy_eval(eval);
    if (*cmd_sweep) {
      if (jobs_opt->count() == 0) {
        if (const char* env = std::getenv("SSN_LAB_JOBS"); env && *env) {
          const std::string text(env);
          const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), sweep.jobs);
          if (ec != std::errc() || end != text.data() + text.size() || sweep.jobs == 0) {
            std::cerr << "SSN_LAB_JOBS must be a positive integer, got \"" << text << "\"\n";
            return kUsage;
          }
        }
      }
      return run_rank_sweep(sweep);
    }
    if (*cmd_sample) return run_sample(samp);
    if (*cmd_manip) return run_manipulate(manip);
    if (*cmd_metrics) return run_metrics(met);
    if (*cmd_grad) return run_gradcheck(grad);
  } catch (const ssn::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const ssn::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const ssn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
