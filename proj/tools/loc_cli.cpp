// loc: command-line driver for the occupancy pipeline.
//
//   loc gen          --out scene/
//   loc densify      --scene scene/ --out dense/
//   loc lift         --scene scene/ --out vpsi.oten
//   loc mock-embed   --scene scene/ --out text.oten
//   loc train        --vpsi vpsi.oten --occupancy dense/occupancy.oten --targets scene/gt_labels.oten
//                    --embeddings text.oten --out ckpt/
//   loc eval         --checkpoint ckpt/ --vpsi vpsi.oten --occupancy dense/occupancy.oten
//                    --gt scene/gt_labels.oten --embeddings text.oten --out report.json
//   loc export-mesh  --scene scene/ --out mesh.obj
//
// Exit codes: 0 ok, 2 invalid input, 3 numerical failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "loc/config.hpp"
#include "loc/io/scene_io.hpp"
#include "loc/stages.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config_path;
  std::vector<std::string> sets;  // key=json-value
  std::optional<std::uint64_t> seed;
  std::optional<int> frames, embed_dim, grid_res, knn_k, epochs;
  std::optional<double> lr, lambda1, lambda2, tau1, tau2, delta;
  std::optional<std::string> pooling, region_loss, supervision, fusion;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "Override a config key, e.g. --set epochs=50 (repeatable)");
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--frames", o.frames);
  cmd->add_option("--embed-dim", o.embed_dim, "C_o");
  cmd->add_option("--grid-res", o.grid_res, "Poisson lattice resolution");
  cmd->add_option("--knn-k", o.knn_k);
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--lr", o.lr);
  cmd->add_option("--lambda1", o.lambda1);
  cmd->add_option("--lambda2", o.lambda2);
  cmd->add_option("--tau1", o.tau1);
  cmd->add_option("--tau2", o.tau2);
  cmd->add_option("--delta", o.delta);
  cmd->add_option("--pooling", o.pooling, "mean|max");
  cmd->add_option("--region-loss", o.region_loss, "dcl|cossim");
  cmd->add_option("--supervision", o.supervision, "gt|densified");
  cmd->add_option("--fusion", o.fusion, "probability|logit-max");
}

loc::RunConfig resolve_config(const Overrides& o) {
  json j = o.config_path.empty() ? json::object() : loc::io::read_json(o.config_path);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw loc::ValidationError("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    try {
      j[key] = json::parse(value);
    } catch (const json::exception&) {
      j[key] = value;  // bare strings
    }
  }
  auto put = [&](const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  put("seed", o.seed);
  put("frames", o.frames);
  put("embed_dim", o.embed_dim);
  put("poisson_grid_res", o.grid_res);
  put("knn_k", o.knn_k);
  put("epochs", o.epochs);
  put("lr", o.lr);
  put("lambda1", o.lambda1);
  put("lambda2", o.lambda2);
  put("tau1", o.tau1);
  put("tau2", o.tau2);
  put("delta", o.delta);
  put("pooling", o.pooling);
  put("region_loss", o.region_loss);
  put("supervision", o.supervision);
  put("fusion", o.fusion);
  return loc::config_from_json(j);
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set 3D occupancy pipeline"};
  app.require_subcommand(1);
  Overrides ov;
  std::string out, scene_dir, vpsi, occupancy, supervision, embeddings, checkpoint, gt, mesh, scores_dir;
  bool rank_free = false;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic scene directory");
  gen->add_option("--out", out, "Output scene directory")->required();

  auto* densify = app.add_subcommand("densify", "Fuse frames, reconstruct and voxelize");
  densify->add_option("--scene", scene_dir)->required()->check(CLI::ExistingDirectory);
  densify->add_option("--out", out, "Output directory")->required();
  densify->add_option("--mesh", mesh, "Also write the Poisson mesh as OBJ");

  auto* lift = app.add_subcommand("lift", "Build the sparse voxel feature tensor");
  lift->add_option("--scene", scene_dir)->required()->check(CLI::ExistingDirectory);
  lift->add_option("--out", out, "Output OTEN file")->required();

  auto* embed = app.add_subcommand("mock-embed", "Write deterministic mock text embeddings");
  embed->add_option("--scene", scene_dir, "Scene whose classes form the vocabulary")->required()->check(CLI::ExistingDirectory);
  embed->add_option("--out", out, "Output OTEN file")->required();

  auto* trn = app.add_subcommand("train", "Train the dual-head model");
  trn->add_option("--vpsi", vpsi)->required()->check(CLI::ExistingFile);
  trn->add_option("--occupancy", occupancy, "V^D grid from densify")->required()->check(CLI::ExistingFile);
  trn->add_option("--targets", supervision, "Label grid used as targets: ground truth or V^D-hat")->required()->check(CLI::ExistingFile);
  trn->add_option("--embeddings", embeddings)->required()->check(CLI::ExistingFile);
  trn->add_option("--out", out, "Checkpoint directory")->required();

  auto* ev = app.add_subcommand("eval", "Open-set inference and metrics");
  ev->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--vpsi", vpsi)->required()->check(CLI::ExistingFile);
  ev->add_option("--occupancy", occupancy)->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", gt, "Ground-truth label grid")->required()->check(CLI::ExistingFile);
  ev->add_option("--embeddings", embeddings)->required()->check(CLI::ExistingFile);
  ev->add_option("--out", out, "JSON report")->required();
  ev->add_option("--scores-dir", scores_dir, "Also write s_occ/s_text/s_kn/prediction grids here");
  ev->add_flag("--rank-free", rank_free, "Include ground-truth free cells in open-set ranking");

  auto* exp = app.add_subcommand("export-mesh", "Write the reconstructed surface as OBJ");
  exp->add_option("--scene", scene_dir)->required()->check(CLI::ExistingDirectory);
  exp->add_option("--out", out, "Output OBJ")->required();

  for (auto* c : {gen, densify, lift, embed, trn, ev, exp}) add_common(c, ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const loc::RunConfig cfg = resolve_config(ov);
    namespace lio = loc::io;

    if (*gen) {
      const auto data = loc::generate_scene_data(cfg);
      lio::write_scene(out, data);
      std::cout << "wrote " << data.clouds.size() << " frames to " << out << "\n";
    } else if (*densify) {
      const auto data = lio::read_scene(scene_dir);
      const auto r = loc::densify_scene(data, cfg);
      fs::create_directories(out);
      lio::write_cloud(fs::path(out) / "fused_cloud.oten", fs::path(out) / "fused_labels.oten", r.fused);
      lio::write_label_grid(fs::path(out) / "occupancy.oten", r.occupancy);
      lio::write_label_grid(fs::path(out) / "labels.oten", r.labels);
      const auto& d = r.poisson.diagnostics;
      json info = {{"points", r.fused.size()},
                   {"occupied_voxels", r.occupancy.occupied_count()},
                   {"mesh_vertices", r.poisson.mesh.vertices.size()},
                   {"mesh_triangles", r.poisson.mesh.triangles.size()},
                   {"poisson", {{"iterations", d.iterations},
                                {"relative_residual", d.relative_residual},
                                {"iso_value", d.iso_value},
                                {"chi_stddev_at_points", d.chi_stddev_at_points}}}};
      if (data.ground_truth) info["surface_recall"] = loc::surface_recall(*data.ground_truth, r.occupancy);
      lio::write_json(fs::path(out) / "densify.json", info);
      if (!mesh.empty()) loc::write_obj(mesh, r.poisson.mesh);
      std::cout << info.dump() << "\n";
    } else if (*lift) {
      const auto data = lio::read_scene(scene_dir);
      const auto f = loc::lift_scene(data, cfg);
      if (f.empty()) std::cerr << "warning: no point is visible in any camera; V_psi is empty\n";
      lio::write_sparse_features(out, f, cfg.pooling);
      std::cout << "wrote " << f.size() << " voxel features to " << out << "\n";
    } else if (*embed) {
      const auto data = lio::read_scene(scene_dir);
      const auto vocab = loc::scene_vocabulary(cfg, data.classes);
      lio::write_embeddings(out, loc::scene_mock_embeddings(cfg, vocab), vocab);
      std::cout << "wrote " << vocab.prompt_count() << " prompts to " << out << "\n";
    } else if (*trn) {
      const auto lifted = lio::read_sparse_features(vpsi);
      const auto occ = lio::read_label_grid(occupancy, lifted.spec);
      const auto sup = lio::read_label_grid(supervision, lifted.spec);
      const auto emb = lio::read_embeddings(embeddings);
      const auto r = loc::train_model(cfg, occ, sup, lifted, emb.set, emb.vocab);
      const json trace = loc::trace_to_json(r.result);
      lio::write_checkpoint(out, r.model, {{"config", loc::config_to_json(cfg)}, {"trace", trace}});
      if (!r.result.trace.empty())
        std::cout << "epochs " << r.result.trace.size() << " first " << trace.front().dump() << " last "
                  << trace.back().dump() << "\n";
    } else if (*ev) {
      const auto ck = lio::read_checkpoint(checkpoint);
      const auto lifted = lio::read_sparse_features(vpsi);
      const auto occ = lio::read_label_grid(occupancy, lifted.spec);
      const auto truth = lio::read_label_grid(gt, lifted.spec);
      const auto emb = lio::read_embeddings(embeddings);
      const auto r = loc::evaluate_model(cfg, ck.model, occ, lifted, truth, emb.set, emb.vocab, rank_free);
      json report = {{"header", {{"tool", "loc"}, {"timestamp", utc_timestamp()}}}};
      report.update(r.report);
      lio::write_json(out, report);
      if (!scores_dir.empty()) {
        fs::create_directories(scores_dir);
        lio::write_score_grid(fs::path(scores_dir) / "s_occ.oten", truth.spec, r.s_occ);
        lio::write_score_grid(fs::path(scores_dir) / "s_text.oten", truth.spec, r.s_text);
        lio::write_score_grid(fs::path(scores_dir) / "s_kn.oten", truth.spec, r.s_kn);
        lio::write_label_grid(fs::path(scores_dir) / "prediction.oten", r.prediction);
      }
      std::cout << "miou " << r.report["miou"] << " auroc " << r.report["auroc"] << " aupr " << r.report["aupr"]
                << " fpr95 " << r.report["fpr95"] << "\n";
    } else if (*exp) {
      const auto data = lio::read_scene(scene_dir);
      const auto r = loc::densify_scene(data, cfg);
      loc::write_obj(out, r.poisson.mesh);
      std::cout << "wrote " << r.poisson.mesh.triangles.size() << " triangles to " << out << "\n";
    }
  } catch (const loc::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const loc::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
