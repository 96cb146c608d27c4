// Experiment CLI: generate synthetic identity-structured features, cluster
// them, train the encoder with one of the three contrastive losses, and run
// ablation sweeps. Outputs are deterministic for a fixed seed; errors exit
// nonzero with a single "code: message" line on stderr.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgce/mgce.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "mgce 1.0.0";

struct RunConfig {
  std::string output_dir;
  std::string features_path;
  std::string split_path;
  std::string preset = "medium";
  bool force = false;

  mgce::SynthConfig synth = mgce::synth_preset("medium");
  mgce::EncoderConfig encoder;  // empty layer_sizes = derive [D, 2D, D]
  mgce::AdamConfig adam;
  mgce::TrainConfig train;
  mgce::DbscanParams dbscan{0.5, 4};
};

std::string default_output_root() {
  if (const char* env = std::getenv("MGCE_OUTPUT_ROOT")) return env;
  return "mgce_out";
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      mgce::fail("config_invalid", "unknown config key '" + where + key + "'");
  }
}

mgce::GranularityLadder parse_ladder(const std::string& s) {
  double lo = 0, hi = 0, delta = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> lo >> c1 >> hi >> c2 >> delta) || c1 != ':' || c2 != ':' || !in.eof())
    mgce::fail("config_invalid", "ladder must be lo:hi:delta, got '" + s + "'");
  return mgce::GranularityLadder::make(lo, hi, delta);
}

std::vector<mgce::Index> parse_layer_sizes(const std::string& s) {
  std::vector<mgce::Index> sizes;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) sizes.push_back(std::stoll(tok));
  return sizes;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  const json j = mgce::read_json(path);
  reject_unknown_keys(j, {"output_dir", "features", "split", "preset", "synth", "encoder", "adam",
                          "train", "ladder", "dbscan"},
                      "");
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("features")) cfg.features_path = j["features"].get<std::string>();
  if (j.contains("split")) cfg.split_path = j["split"].get<std::string>();
  if (j.contains("preset")) {
    cfg.preset = j["preset"].get<std::string>();
    cfg.synth = mgce::synth_preset(cfg.preset);
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    reject_unknown_keys(
        s, {"num_ids", "samples_per_id", "dim", "num_cams", "intra_sigma", "cam_sigma", "seed"},
        "synth.");
    if (s.contains("num_ids")) cfg.synth.num_ids = s["num_ids"].get<int>();
    if (s.contains("samples_per_id")) cfg.synth.samples_per_id = s["samples_per_id"].get<int>();
    if (s.contains("dim")) cfg.synth.dim = s["dim"].get<int>();
    if (s.contains("num_cams")) cfg.synth.num_cams = s["num_cams"].get<int>();
    if (s.contains("intra_sigma")) cfg.synth.intra_sigma = s["intra_sigma"].get<double>();
    if (s.contains("cam_sigma")) cfg.synth.cam_sigma = s["cam_sigma"].get<double>();
    if (s.contains("seed")) cfg.synth.seed = s["seed"].get<std::uint64_t>();
  }
  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    reject_unknown_keys(e, {"layer_sizes", "identity_mode"}, "encoder.");
    if (e.contains("layer_sizes"))
      cfg.encoder.layer_sizes = e["layer_sizes"].get<std::vector<mgce::Index>>();
    if (e.contains("identity_mode")) cfg.encoder.identity_mode = e["identity_mode"].get<bool>();
  }
  if (j.contains("adam")) {
    const json& a = j["adam"];
    reject_unknown_keys(a, {"lr", "beta1", "beta2", "eps", "weight_decay"}, "adam.");
    if (a.contains("lr")) cfg.adam.lr = a["lr"].get<double>();
    if (a.contains("beta1")) cfg.adam.beta1 = a["beta1"].get<double>();
    if (a.contains("beta2")) cfg.adam.beta2 = a["beta2"].get<double>();
    if (a.contains("eps")) cfg.adam.eps = a["eps"].get<double>();
    if (a.contains("weight_decay")) cfg.adam.weight_decay = a["weight_decay"].get<double>();
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown_keys(t,
                        {"epochs", "p_identities", "k_instances", "iters_per_epoch", "loss", "d",
                         "min_pts", "gamma", "tau", "jitter_sigma", "seed"},
                        "train.");
    if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<int>();
    if (t.contains("p_identities")) cfg.train.p_identities = t["p_identities"].get<int>();
    if (t.contains("k_instances")) cfg.train.k_instances = t["k_instances"].get<int>();
    if (t.contains("iters_per_epoch")) cfg.train.iters_per_epoch = t["iters_per_epoch"].get<int>();
    if (t.contains("loss")) cfg.train.loss_kind = mgce::loss_kind_from_string(t["loss"]);
    if (t.contains("d")) cfg.train.single_d = t["d"].get<double>();
    if (t.contains("min_pts")) cfg.train.min_pts = t["min_pts"].get<int>();
    if (t.contains("gamma")) cfg.train.gamma = t["gamma"].get<double>();
    if (t.contains("tau")) cfg.train.tau = t["tau"].get<double>();
    if (t.contains("jitter_sigma")) cfg.train.jitter_sigma = t["jitter_sigma"].get<double>();
    if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
  }
  if (j.contains("ladder")) {
    const json& l = j["ladder"];
    reject_unknown_keys(l, {"lo", "hi", "delta"}, "ladder.");
    if (l.contains("lo")) cfg.train.ladder.lo = l["lo"].get<double>();
    if (l.contains("hi")) cfg.train.ladder.hi = l["hi"].get<double>();
    if (l.contains("delta")) cfg.train.ladder.delta = l["delta"].get<double>();
  }
  if (j.contains("dbscan")) {
    const json& d = j["dbscan"];
    reject_unknown_keys(d, {"d", "min_pts"}, "dbscan.");
    if (d.contains("d")) cfg.dbscan.eps = d["d"].get<double>();
    if (d.contains("min_pts")) cfg.dbscan.min_pts = d["min_pts"].get<int>();
  }
}

fs::path prepare_output_dir(const std::string& dir, bool force,
                            const std::vector<std::string>& artifacts) {
  const fs::path out(dir);
  fs::create_directories(out);
  if (!force) {
    for (const auto& a : artifacts)
      if (fs::exists(out / a))
        mgce::fail("output_exists",
                   (out / a).string() + " already exists (pass --force to overwrite)");
  }
  return out;
}

struct Dataset {
  mgce::MatrixX<double> features;  // raw
  std::vector<int> ids, cams;
  std::vector<mgce::Index> query, gallery;
};

Dataset load_or_generate(const RunConfig& cfg, std::uint64_t seed) {
  Dataset ds;
  if (!cfg.features_path.empty()) {
    const auto f = mgce::read_features(cfg.features_path);
    if (f.ids.empty() || f.cams.empty())
      mgce::fail("config_invalid",
                 "feature file '" + cfg.features_path + "' lacks ids/cams needed for training");
    ds.features = f.features;
    ds.ids = f.ids;
    ds.cams = f.cams;
    if (cfg.split_path.empty())
      mgce::fail("config_invalid", "--split is required when --features is given");
    const json split = mgce::read_json(cfg.split_path);
    reject_unknown_keys(split, {"query", "gallery"}, "split.");
    ds.query = split.at("query").get<std::vector<mgce::Index>>();
    ds.gallery = split.at("gallery").get<std::vector<mgce::Index>>();
  } else {
    mgce::SynthConfig synth = cfg.synth;
    synth.seed = seed;
    auto gen = mgce::generate(synth);
    ds.features = std::move(gen.features);
    ds.ids = std::move(gen.ids);
    ds.cams = std::move(gen.cams);
    ds.query = std::move(gen.query);
    ds.gallery = std::move(gen.gallery);
  }
  return ds;
}

mgce::EvalSet<double> make_evalset(const Dataset& ds, const mgce::MatrixX<double>& embeddings) {
  mgce::EvalSet<double> s;
  s.query_features.resize(static_cast<mgce::Index>(ds.query.size()), embeddings.cols());
  s.gallery_features.resize(static_cast<mgce::Index>(ds.gallery.size()), embeddings.cols());
  for (std::size_t i = 0; i < ds.query.size(); ++i) {
    s.query_features.row(static_cast<mgce::Index>(i)) = embeddings.row(ds.query[i]);
    s.query_ids.push_back(ds.ids[static_cast<std::size_t>(ds.query[i])]);
    s.query_cams.push_back(ds.cams[static_cast<std::size_t>(ds.query[i])]);
  }
  for (std::size_t i = 0; i < ds.gallery.size(); ++i) {
    s.gallery_features.row(static_cast<mgce::Index>(i)) = embeddings.row(ds.gallery[i]);
    s.gallery_ids.push_back(ds.ids[static_cast<std::size_t>(ds.gallery[i])]);
    s.gallery_cams.push_back(ds.cams[static_cast<std::size_t>(ds.gallery[i])]);
  }
  return s;
}

mgce::EncoderConfig resolve_encoder(const RunConfig& cfg, mgce::Index input_dim) {
  mgce::EncoderConfig e = cfg.encoder;
  if (e.layer_sizes.empty()) {
    if (e.identity_mode)
      e.layer_sizes = {input_dim, input_dim};
    else
      e.layer_sizes = {input_dim, 2 * input_dim, input_dim};
  }
  if (e.layer_sizes.front() != input_dim)
    mgce::fail("config_invalid", "encoder input dim " + std::to_string(e.layer_sizes.front()) +
                                     " does not match feature dim " + std::to_string(input_dim));
  return e;
}

struct TrainOutcome {
  mgce::TrainResult<double> result;
  mgce::EvalResult eval;
};

TrainOutcome run_training(const RunConfig& cfg, const Dataset& ds, std::uint64_t seed) {
  RunConfig local = cfg;
  local.train.seed = seed;
  const auto enc_cfg = resolve_encoder(local, ds.features.cols());
  auto result = mgce::train(ds.features, enc_cfg, local.adam, local.train);
  const auto embeddings = result.encoder.forward(ds.features, 0.0, nullptr);
  const auto eval = mgce::evaluate(make_evalset(ds, embeddings));
  return TrainOutcome{std::move(result), eval};
}

int cmd_generate(const RunConfig& cfg) {
  const auto out =
      prepare_output_dir(cfg.output_dir, cfg.force, {"features.featv1", "split.json"});
  const auto ds = mgce::generate(cfg.synth);
  mgce::write_features((out / "features.featv1").string(), ds.features, ds.ids, ds.cams);
  mgce::write_json((out / "split.json").string(), json{{"query", ds.query}, {"gallery", ds.gallery}});
  std::cout << "wrote " << (out / "features.featv1").string() << " (" << ds.features.rows() << "x"
            << ds.features.cols() << ") and split.json\n";
  return 0;
}

int cmd_cluster(const RunConfig& cfg) {
  if (cfg.features_path.empty()) mgce::fail("config_invalid", "cluster: --features is required");
  const auto out = prepare_output_dir(cfg.output_dir, cfg.force, {"labels.csv", "summary.json"});
  const auto f = mgce::read_features(cfg.features_path);
  const auto feats = mgce::l2_normalize(f.features);
  const auto labeling = mgce::dbscan(feats, cfg.dbscan);
  mgce::write_labels_csv((out / "labels.csv").string(), labeling);
  mgce::write_json((out / "summary.json").string(),
                   json{{"num_clusters", labeling.num_clusters},
                        {"noise_fraction", labeling.noise_fraction()}});
  std::cout << "clusters=" << labeling.num_clusters
            << " noise_fraction=" << labeling.noise_fraction() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto out = prepare_output_dir(
      cfg.output_dir, cfg.force, {"encoder.bin", "memory.featv1", "trainlog.jsonl", "eval.json"});
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = load_or_generate(cfg, cfg.train.seed);
  const auto outcome = run_training(cfg, ds, cfg.train.seed);
  const auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);

  mgce::write_encoder((out / "encoder.bin").string(), outcome.result.encoder);
  mgce::write_features((out / "memory.featv1").string(), outcome.result.bank.rows());
  mgce::write_trainlog((out / "trainlog.jsonl").string(), outcome.result.log);
  mgce::write_json((out / "eval.json").string(), mgce::eval_to_json(outcome.eval));

  std::cout << "loss=" << mgce::to_string(cfg.train.loss_kind) << " epochs=" << cfg.train.epochs
            << " map=" << outcome.eval.map << " cmc1=" << outcome.eval.cmc1 << "\n";
  std::cerr << "wall_ms=" << elapsed.count() << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& axis, const std::string& values_arg,
              const std::string& seeds_arg) {
  const auto out = prepare_output_dir(cfg.output_dir, cfg.force, {"sweep.csv"});

  std::vector<std::string> settings;
  {
    std::istringstream in(values_arg);
    std::string tok;
    while (std::getline(in, tok, ',')) settings.push_back(tok);
  }
  if (settings.empty()) mgce::fail("config_invalid", "sweep: --values is required");
  std::vector<std::uint64_t> seeds;
  {
    std::istringstream in(seeds_arg);
    std::string tok;
    while (std::getline(in, tok, ',')) seeds.push_back(std::stoull(tok));
  }
  if (seeds.empty()) seeds.push_back(cfg.train.seed);

  const bool is_d = axis == "d";
  const bool is_range = axis == "ladder_range";
  const bool is_delta = axis == "delta";
  const bool is_gamma = axis == "gamma";
  if (!is_d && !is_range && !is_delta && !is_gamma)
    mgce::fail("usage", "sweep: unknown axis '" + axis + "' (valid: d, ladder_range, delta, gamma)");
  if (is_d && cfg.train.loss_kind == mgce::LossKind::pc)
    mgce::fail("config_invalid", "sweep: axis d needs a single-radius loss (hcl or cluster_nce)");
  if ((is_range || is_delta) && cfg.train.loss_kind != mgce::LossKind::pc)
    mgce::fail("config_invalid", "sweep: axis " + axis + " needs --loss pc");

  std::ostringstream csv;
  csv << "setting,map,cmc1,cmc5,cmc10,seed\n";
  for (const auto& setting : settings) {
    std::vector<mgce::EvalResult> evals;
    for (const auto seed : seeds) {
      RunConfig row = cfg;
      if (is_d) row.train.single_d = std::stod(setting);
      if (is_gamma) row.train.gamma = std::stod(setting);
      if (is_delta) row.train.ladder.delta = std::stod(setting);
      if (is_range) {
        const auto colon = setting.find(':');
        if (colon == std::string::npos)
          mgce::fail("config_invalid", "sweep: ladder_range settings must be lo:hi");
        row.train.ladder.lo = std::stod(setting.substr(0, colon));
        row.train.ladder.hi = std::stod(setting.substr(colon + 1));
      }
      const Dataset ds = load_or_generate(row, seed);
      const auto outcome = run_training(row, ds, seed);
      evals.push_back(outcome.eval);
      csv << setting << ',' << mgce::detail::fmt_double(outcome.eval.map) << ','
          << mgce::detail::fmt_double(outcome.eval.cmc1) << ','
          << mgce::detail::fmt_double(outcome.eval.cmc5) << ','
          << mgce::detail::fmt_double(outcome.eval.cmc10) << ',' << seed << '\n';
    }
    if (seeds.size() > 1) {
      auto stat = [&](auto get) {
        double mean = 0;
        for (const auto& e : evals) mean += get(e);
        mean /= static_cast<double>(evals.size());
        double var = 0;
        for (const auto& e : evals) var += (get(e) - mean) * (get(e) - mean);
        var /= static_cast<double>(evals.size() - 1);
        return std::pair{mean, std::sqrt(var)};
      };
      const auto [m_map, s_map] = stat([](const auto& e) { return e.map; });
      const auto [m_c1, s_c1] = stat([](const auto& e) { return e.cmc1; });
      const auto [m_c5, s_c5] = stat([](const auto& e) { return e.cmc5; });
      const auto [m_c10, s_c10] = stat([](const auto& e) { return e.cmc10; });
      using mgce::detail::fmt_double;
      csv << setting << ',' << fmt_double(m_map) << ',' << fmt_double(m_c1) << ','
          << fmt_double(m_c5) << ',' << fmt_double(m_c10) << ",mean\n";
      csv << setting << ',' << fmt_double(s_map) << ',' << fmt_double(s_c1) << ','
          << fmt_double(s_c5) << ',' << fmt_double(s_c10) << ",stddev\n";
      std::cout << axis << "=" << setting << ": map " << m_map << " +/- " << s_map << "\n";
    } else {
      std::cout << axis << "=" << setting << ": map " << evals.front().map << "\n";
    }
  }
  std::ofstream f(out / "sweep.csv", std::ios::trunc);
  f << csv.str();
  std::cout << "wrote " << (out / "sweep.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid contrastive learning with a multi-granularity DBSCAN cluster ensemble"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  RunConfig cfg;
  cfg.output_dir = default_output_root();
  std::string config_path, ladder_arg, encoder_arg, loss_arg, preset_arg;
  std::string axis, values_arg, seeds_arg;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (flags override it)");
    sub->add_option("--out", cfg.output_dir, "output directory");
    sub->add_flag("--force", cfg.force, "overwrite existing outputs");
  };
  const auto add_data = [&](CLI::App* sub) {
    sub->add_option("--preset", preset_arg, "synthetic preset: easy|medium|hard");
    sub->add_option("--features", cfg.features_path, "FEATv1 or CSV feature file");
    sub->add_option("--split", cfg.split_path, "split manifest JSON (with --features)");
    sub->add_option("--num-ids", cfg.synth.num_ids);
    sub->add_option("--samples-per-id", cfg.synth.samples_per_id);
    sub->add_option("--dim", cfg.synth.dim);
    sub->add_option("--num-cams", cfg.synth.num_cams);
    sub->add_option("--intra-sigma", cfg.synth.intra_sigma);
    sub->add_option("--cam-sigma", cfg.synth.cam_sigma);
  };
  const auto add_train = [&](CLI::App* sub) {
    sub->add_option("--loss", loss_arg, "cluster_nce|hcl|pc");
    sub->add_option("--d", cfg.train.single_d, "DBSCAN radius for single-granularity losses");
    sub->add_option("--ladder", ladder_arg, "pc granularity ladder lo:hi:delta");
    sub->add_option("--min-pts", cfg.train.min_pts);
    sub->add_option("--epochs", cfg.train.epochs);
    sub->add_option("--p", cfg.train.p_identities);
    sub->add_option("--k", cfg.train.k_instances);
    sub->add_option("--iters-per-epoch", cfg.train.iters_per_epoch);
    sub->add_option("--gamma", cfg.train.gamma);
    sub->add_option("--tau", cfg.train.tau);
    sub->add_option("--jitter-sigma", cfg.train.jitter_sigma);
    sub->add_option("--seed", cfg.train.seed);
    sub->add_option("--encoder", encoder_arg, "layer sizes, e.g. 32,64,32");
    sub->add_flag("--identity", cfg.encoder.identity_mode, "identity encoder (loss-only runs)");
    sub->add_option("--lr", cfg.adam.lr);
    sub->add_option("--weight-decay", cfg.adam.weight_decay);
    sub->add_option("--beta1", cfg.adam.beta1);
    sub->add_option("--beta2", cfg.adam.beta2);
    sub->add_option("--adam-eps", cfg.adam.eps);
  };

  auto* gen = app.add_subcommand("generate", "write a synthetic FEATv1 dataset + split manifest");
  add_common(gen);
  add_data(gen);
  gen->add_option("--seed", cfg.synth.seed);

  auto* clu = app.add_subcommand("cluster", "DBSCAN over a feature file");
  add_common(clu);
  clu->add_option("--features", cfg.features_path, "FEATv1 or CSV feature file");
  clu->add_option("--d", cfg.dbscan.eps, "neighborhood radius (cosine distance)");
  clu->add_option("--min-pts", cfg.dbscan.min_pts);

  auto* tr = app.add_subcommand("train", "train the encoder and evaluate retrieval");
  add_common(tr);
  add_data(tr);
  add_train(tr);

  auto* sw = app.add_subcommand("sweep", "ablation sweep over one axis");
  add_common(sw);
  add_data(sw);
  add_train(sw);
  sw->add_option("--axis", axis, "d | ladder_range | delta | gamma")->required();
  sw->add_option("--values", values_arg, "comma list of settings (ranges as lo:hi)");
  sw->add_option("--seeds", seeds_arg, "comma list of seeds (averaged when > 1)");

  try {
    // config file first, then flags override on reparse
    app.parse(argc, argv);
    if (!config_path.empty()) {
      apply_config_file(cfg, config_path);
      app.clear();
      app.parse(argc, argv);
    }
    if (!preset_arg.empty()) {
      const auto base = mgce::synth_preset(preset_arg);
      mgce::SynthConfig resolved = base;
      // keep explicit flag overrides on top of the preset
      CLI::App* sub = app.get_subcommands().front();
      auto keep = [&](const char* flag, auto member, auto value) {
        if (sub->count(flag) > 0) resolved.*member = value;
      };
      keep("--num-ids", &mgce::SynthConfig::num_ids, cfg.synth.num_ids);
      keep("--samples-per-id", &mgce::SynthConfig::samples_per_id, cfg.synth.samples_per_id);
      keep("--dim", &mgce::SynthConfig::dim, cfg.synth.dim);
      keep("--num-cams", &mgce::SynthConfig::num_cams, cfg.synth.num_cams);
      keep("--intra-sigma", &mgce::SynthConfig::intra_sigma, cfg.synth.intra_sigma);
      keep("--cam-sigma", &mgce::SynthConfig::cam_sigma, cfg.synth.cam_sigma);
      cfg.synth = resolved;
      cfg.preset = preset_arg;
    }
    if (!loss_arg.empty()) cfg.train.loss_kind = mgce::loss_kind_from_string(loss_arg);
    if (!ladder_arg.empty()) cfg.train.ladder = parse_ladder(ladder_arg);
    if (!encoder_arg.empty()) cfg.encoder.layer_sizes = parse_layer_sizes(encoder_arg);

    if (gen->parsed()) return cmd_generate(cfg);
    if (clu->parsed()) return cmd_cluster(cfg);
    if (tr->parsed()) return cmd_train(cfg);
    if (sw->parsed()) return cmd_sweep(cfg, axis, values_arg, seeds_arg);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << std::flush;
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return 2;
  } catch (const mgce::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal_error: " << e.what() << "\n";
    return 3;
  }
}
