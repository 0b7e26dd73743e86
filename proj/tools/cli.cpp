#include "cli.hpp"

#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "ctxrescore/analysis.hpp"
#include "ctxrescore/ap_eval.hpp"
#include "ctxrescore/core.hpp"
#include "ctxrescore/matching.hpp"
#include "ctxrescore/model.hpp"
#include "ctxrescore/rank.hpp"
#include "ctxrescore/synth.hpp"
#include "ctxrescore/training.hpp"

namespace ctxrescore::cli {
namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool quiet = false;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path);
}

// Writes to `path`, or to `out` when no path was given.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

Dataset load(const std::string& ann, const std::string& det) {
  Dataset ds = load_annotations(ann);
  if (!det.empty()) load_detections(det, ds);
  return ds;
}

const std::vector<std::string> kMatchingChoices{"localization", "confidence"};
const std::vector<std::string> kTargetChoices{"iou", "binary"};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Detection rescoring toolkit: AP evaluation, rescoring targets, contextual model"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "PRNG seed");
  app.add_option("--threads", g.threads, "Parallelism cap")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  // eval
  std::string ann, det, csv_path, report_path;
  auto* eval_cmd = app.add_subcommand("eval", "Compute COCO-style AP");
  eval_cmd->add_option("--ann", ann, "Annotation file")->required();
  eval_cmd->add_option("--det", det, "Detection results file")->required();
  eval_cmd->add_option("--csv", csv_path, "Per-class per-threshold AP CSV (default stdout)");
  eval_cmd->add_option("--report", report_path, "Text report (default stdout)");

  // target
  std::string matching = "localization", target = "iou", out_path;
  auto* target_cmd = app.add_subcommand("target", "Replace scores by rescoring targets");
  target_cmd->add_option("--ann", ann)->required();
  target_cmd->add_option("--det", det)->required();
  target_cmd->add_option("--matching", matching)->check(CLI::IsMember(kMatchingChoices));
  target_cmd->add_option("--target", target)->check(CLI::IsMember(kTargetChoices));
  target_cmd->add_option("--out", out_path, "Rescored detection file")->required();
  target_cmd->add_option("--report", report_path, "Text report (default stdout)");

  // train
  std::string val_ann, val_det, history_path, encoder = "gru";
  ModelConfig mc;
  TrainConfig tc;
  auto* train_cmd = app.add_subcommand("train", "Train the rescoring model");
  train_cmd->add_option("--ann", ann)->required();
  train_cmd->add_option("--det", det)->required();
  train_cmd->add_option("--val-ann", val_ann, "Validation annotations (default: training set)");
  train_cmd->add_option("--val-det", val_det);
  train_cmd->add_option("--hidden", mc.hidden)->capture_default_str();
  train_cmd->add_option("--layers", mc.layers)->capture_default_str();
  train_cmd->add_option("--encoder", encoder)->check(CLI::IsMember({"gru", "linear"}));
  train_cmd->add_option("--target", target)->check(CLI::IsMember(kTargetChoices));
  train_cmd->add_option("--matching", matching)->check(CLI::IsMember(kMatchingChoices));
  train_cmd->add_option("--batch", tc.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", tc.lr0)->capture_default_str();
  train_cmd->add_option("--shuffle-prob", tc.shuffle_prob)->capture_default_str();
  train_cmd->add_option("--patience", tc.patience)->capture_default_str();
  train_cmd->add_option("--early-stop", tc.early_stop)->capture_default_str();
  train_cmd->add_option("--max-epochs", tc.max_epochs)->capture_default_str();
  train_cmd->add_option("--max-steps", tc.max_steps, "Optimizer step budget (0: none)");
  train_cmd->add_option("--out", out_path, "Checkpoint path")->required();
  train_cmd->add_option("--history", history_path, "History CSV (default: <out>.history.csv)");

  // rescore
  std::string checkpoint;
  auto* rescore_cmd = app.add_subcommand("rescore", "Apply a trained model to detections");
  rescore_cmd->add_option("--ann", ann)->required();
  rescore_cmd->add_option("--det", det)->required();
  rescore_cmd->add_option("--checkpoint", checkpoint)->required();
  rescore_cmd->add_option("--out", out_path, "Rescored detection file")->required();
  rescore_cmd->add_option("--report", report_path, "AP report after rescoring");

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Confidence share per error category");
  analyze_cmd->add_option("--ann", ann)->required();
  analyze_cmd->add_option("--det", det)->required();
  analyze_cmd->add_option("--out", out_path, "CSV path (default stdout)");

  // cooccur
  auto* cooccur_cmd = app.add_subcommand("cooccur", "Class co-occurrence matrix");
  cooccur_cmd->add_option("--ann", ann)->required();
  cooccur_cmd->add_option("--out", out_path, "CSV path (default stdout)");

  // rank
  std::string before, after;
  RankOptions ro;
  std::size_t rank_max_dets = 0;
  double rank_min_score = 0.0;
  auto* rank_cmd = app.add_subcommand("rank", "Rank images by change in confidences");
  rank_cmd->add_option("--ann", ann, "Annotation file naming images and categories")->required();
  rank_cmd->add_option("--before", before)->required();
  rank_cmd->add_option("--after", after)->required();
  rank_cmd->add_option("--top", ro.top)->capture_default_str();
  auto* max_dets_opt = rank_cmd->add_option("--max-dets", rank_max_dets);
  auto* min_score_opt = rank_cmd->add_option("--min-score", rank_min_score);
  rank_cmd->add_option("--out", out_path, "CSV path (default stdout)");

  // synth
  SynthParams sp;
  std::string out_ann, out_det;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic annotation + detection pair");
  synth_cmd->add_option("--out-ann", out_ann)->required();
  synth_cmd->add_option("--out-det", out_det)->required();
  synth_cmd->add_option("--images", sp.n_images)->capture_default_str();
  synth_cmd->add_option("--classes", sp.num_classes)->capture_default_str();
  synth_cmd->add_option("--gts-min", sp.gts_min)->capture_default_str();
  synth_cmd->add_option("--gts-max", sp.gts_max)->capture_default_str();
  synth_cmd->add_option("--dups-min", sp.duplicates_min)->capture_default_str();
  synth_cmd->add_option("--dups-max", sp.duplicates_max)->capture_default_str();
  synth_cmd->add_option("--jitter", sp.jitter)->capture_default_str();
  synth_cmd->add_option("--confusion", sp.confusion_prob)->capture_default_str();
  synth_cmd->add_option("--background", sp.background_rate)->capture_default_str();
  synth_cmd->add_option("--score-iou-weight", sp.score_iou_weight)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*eval_cmd) {
      const Dataset ds = load(ann, det);
      const auto report = evaluate(ds.images, ds.categories.size());
      if (!report.defined()) throw std::runtime_error("no ground truth: AP undefined");
      emit(report_path, format_report(report), out);
      emit(csv_path, format_per_class_csv(report, ds.categories), out);
    } else if (*target_cmd) {
      Dataset ds = load(ann, det);
      const TargetConfig cfg{parse_matching_mode(matching), parse_target_mode(target)};
      ds.images = apply_targets(ds.images, cfg);
      write_detections(out_path, ds);
      emit(report_path, format_report(evaluate(ds.images, ds.categories.size())), out);
    } else if (*train_cmd) {
      const Dataset train = load(ann, det);
      const Dataset val = val_ann.empty() ? train : load(val_ann, val_det);
      if (!(val.categories == train.categories)) {
        throw std::runtime_error("validation categories differ from training categories");
      }
      mc.encoder = parse_encoder(encoder);
      mc.num_classes = train.categories.size();
      mc.seed = g.seed;
      tc.seed = g.seed;
      tc.threads = g.threads;
      tc.targets = {parse_matching_mode(matching), parse_target_mode(target)};
      const auto progress = [&](const EpochRecord& r) {
        if (!g.quiet) {
          err << "epoch " << r.epoch << " loss " << r.train_loss << " val_ap " << r.val_ap
              << " lr " << r.lr << (r.reverted ? " (reverted)" : "") << "\n";
        }
      };
      const auto result = train_loop(train.images, val.images, mc, tc, progress);
      save_checkpoint(result.best_params, result.config, out_path);
      write_text(history_path.empty() ? out_path + ".history.csv" : history_path,
                 format_history_csv(result.history));
      if (!g.quiet) {
        err << "best val AP " << result.best_val_ap << " at epoch " << result.best_epoch << " ("
            << result.stop_reason << ")\n";
      }
      if (result.diverged) throw std::runtime_error(result.stop_reason);
    } else if (*rescore_cmd) {
      Dataset ds = load(ann, det);
      const Checkpoint ck = load_checkpoint(checkpoint);
      if (ck.config.num_classes != ds.categories.size()) {
        throw ShapeError("checkpoint expects " + std::to_string(ck.config.num_classes) +
                         " classes, annotations define " +
                         std::to_string(ds.categories.size()));
      }
      ds.images = rescore_dataset(ds.images, ck.params, ck.config);
      write_detections(out_path, ds);
      if (!report_path.empty()) {
        write_text(report_path, format_report(evaluate(ds.images, ds.categories.size())));
      }
    } else if (*analyze_cmd) {
      const Dataset ds = load(ann, det);
      emit(out_path, format_breakdown_csv(confidence_shares(ds.images, ds.categories)), out);
    } else if (*cooccur_cmd) {
      const Dataset ds = load(ann, "");
      emit(out_path,
           format_cooccurrence_csv(cooccurrence_matrix(ds.images, ds.categories.size()),
                                   ds.categories),
           out);
    } else if (*rank_cmd) {
      const Dataset b = load(ann, before);
      const Dataset a = load(ann, after);
      if (*max_dets_opt) ro.max_dets = rank_max_dets;
      if (*min_score_opt) ro.min_score = rank_min_score;
      std::vector<std::string> warnings;
      const auto entries = rank_images(b.images, a.images, ro, &warnings);
      if (!g.quiet) {
        for (const auto& w : warnings) err << "warning: " << w << "\n";
      }
      emit(out_path, format_rank_csv(entries), out);
    } else if (*synth_cmd) {
      sp.seed = g.seed;
      const Dataset ds = generate_dataset(sp);
      write_annotations(out_ann, ds);
      write_detections(out_det, ds);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace ctxrescore::cli
