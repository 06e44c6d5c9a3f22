// nocd: train overlapping community detectors, score covers, generate
// planted graphs, and run the convergence and inductive experiments.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage or parse error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nocd/nocd.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Bad flag combinations detected after CLI11 parsing.
struct UsageError : nocd::Error {
  using nocd::Error::Error;
};

struct CommonArgs {
  std::string graph, features, truth, out_dir;
  std::string variant = "nocd-g";
  long communities = 0;
  std::optional<double> lr;
  nocd::TrainConfig cfg;
};

void add_training_flags(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--hidden", a.cfg.hidden_size, "Hidden layer width")->capture_default_str();
  cmd->add_option("--lr", a.lr, "Learning rate (default 1e-3, or 5e-2 for the free-variable model)");
  cmd->add_option("--weight-decay", a.cfg.weight_decay, "L2 penalty on both weight matrices")->capture_default_str();
  cmd->add_option("--dropout-keep", a.cfg.dropout_keep, "Dropout keep probability")->capture_default_str();
  cmd->add_option("--batch-size", a.cfg.batch_size, "Edges and non-edges sampled per epoch")->capture_default_str();
  cmd->add_option("--max-epochs", a.cfg.max_epochs, "Epoch limit")->capture_default_str();
  cmd->add_option("--eval-every", a.cfg.eval_every, "Epochs between full-loss evaluations")->capture_default_str();
  cmd->add_option("--patience", a.cfg.patience_evals, "Evaluations without improvement before stopping")
      ->capture_default_str();
  cmd->add_option("--threshold", a.cfg.threshold, "Membership threshold rho")->capture_default_str();
  cmd->add_option("--seed", a.cfg.seed, "Random seed")->capture_default_str();
}

nocd::TrainConfig resolve_config(const CommonArgs& a, nocd::ModelVariant v) {
  nocd::TrainConfig cfg = a.cfg;
  cfg.learning_rate = a.lr.value_or(nocd::default_config(v).learning_rate);
  try {
    cfg.validate();
  } catch (const nocd::Error& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

nocd::ModelVariant parse_variant(const std::string& name) {
  try {
    return nocd::ModelVariant::parse(name);
  } catch (const nocd::Error& e) {
    throw UsageError(e.what());
  }
}

json config_json(const nocd::TrainConfig& c) {
  return {{"hidden", c.hidden_size},         {"lr", c.learning_rate},
          {"weight_decay", c.weight_decay},  {"dropout_keep", c.dropout_keep},
          {"batch_size", c.batch_size},      {"max_epochs", c.max_epochs},
          {"eval_every", c.eval_every},      {"patience", c.patience_evals},
          {"threshold", c.threshold},        {"seed", c.seed}};
}

void write_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw nocd::Error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw nocd::Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

template <class Writer>
void write_file(const fs::path& path, Writer&& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw nocd::Error("cannot write " + path.string());
  w(out);
  if (!out.flush()) throw nocd::Error("write failed: " + path.string());
}

/// Collects run metadata and writes manifest.json at the end of a command.
class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv)
      : start_(std::chrono::steady_clock::now()), doc_{{"command", std::move(command)}} {
    doc_["argv"] = std::vector<std::string>(argv, argv + argc);
    doc_["tool_version"] = NOCD_VERSION;
  }
  json& operator[](const char* key) { return doc_[key]; }
  void add_output(const fs::path& p) { outputs_.push_back(p.filename().string()); }

  void write(const fs::path& dir) {
    doc_["outputs"] = outputs_;
    doc_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_atomically(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  std::chrono::steady_clock::time_point start_;
  json doc_;
  std::vector<std::string> outputs_;
};

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

nocd::SparseGraph load_graph(const std::string& path) {
  nocd::io::EdgeListStats stats;
  nocd::SparseGraph g = nocd::io::load_edge_list(path, &stats);
  if (stats.self_loops) std::cerr << "warning: dropped " << stats.self_loops << " self-loop(s)\n";
  return g;
}

std::optional<nocd::FeatureMatrix> load_attributes(const std::string& path, nocd::ModelVariant v,
                                                   const nocd::SparseGraph& g) {
  if (v.input() != nocd::InputKind::attributes) {
    if (!path.empty()) std::cerr << "note: --features is ignored by " << v.name() << "\n";
    return std::nullopt;
  }
  if (path.empty()) throw UsageError(v.name() + " requires --features");
  return nocd::io::load_features(path, g.num_nodes());
}

const nocd::FeatureMatrix* ptr(const std::optional<nocd::FeatureMatrix>& x) { return x ? &*x : nullptr; }

long require_communities(long c) {
  if (c < 1) throw UsageError("--communities must be at least 1");
  return c;
}

// ---------------------------------------------------------------------------

int cmd_train(const CommonArgs& a, bool full_batch, int argc, char** argv) {
  const nocd::ModelVariant v = parse_variant(a.variant);
  const nocd::TrainConfig cfg = resolve_config(a, v);
  const auto c = require_communities(a.communities);
  const nocd::SparseGraph g = load_graph(a.graph);
  const auto x = load_attributes(a.features, v, g);
  const fs::path out = prepare_out_dir(a.out_dir);
  Manifest manifest("train", argc, argv);

  const nocd::TrainResult r = full_batch ? nocd::train_full_batch(v, g, ptr(x), c, cfg)
                                         : nocd::train(v, g, ptr(x), c, cfg);

  if (v.is_neural()) {
    write_file(out / "checkpoint.txt", [&](std::ostream& o) { nocd::write_checkpoint(o, r.parameters()); });
    manifest.add_output(out / "checkpoint.txt");
  }
  write_file(out / "affiliations.txt",
             [&](std::ostream& o) { nocd::io::write_affiliations(o, r.affiliations.values(), cfg.threshold); });
  const nocd::CommunityAssignment assignment = nocd::assign_communities(r.affiliations, cfg.threshold);
  write_file(out / "communities.txt", [&](std::ostream& o) { nocd::io::write_cover(o, assignment.cover); });
  write_file(out / "trace.csv", [&](std::ostream& o) { nocd::write_trace_csv(o, r.trace); });
  for (const char* f : {"affiliations.txt", "communities.txt", "trace.csv"}) manifest.add_output(out / f);

  std::cout << "variant=" << v.name() << "\n"
            << "best_epoch=" << r.trace.best_epoch << "\n"
            << "best_loss=" << nocd::io::format_fixed(r.trace.best_loss) << "\n"
            << "stopped=" << nocd::to_string(r.trace.stopped_reason) << "\n"
            << "communities_nonempty=" << assignment.cover.num_nonempty() << "\n";

  if (!a.truth.empty()) {
    const auto truth = nocd::io::load_cover(a.truth, g.num_nodes()).cover;
    const auto nmi = nocd::nmi_from_affiliations(r.affiliations, truth, cfg.threshold);
    std::cout << "nmi=" << (nmi ? nocd::io::format_fixed(*nmi, 6) : std::string("undefined")) << "\n";
    if (nmi) manifest["nmi"] = *nmi;
  }

  manifest["variant"] = v.name();
  manifest["full_batch"] = full_batch;
  manifest["communities"] = c;
  manifest["config"] = config_json(cfg);
  manifest["inputs"] = {{"graph", a.graph}, {"features", a.features}, {"truth", a.truth}};
  manifest["seed"] = cfg.seed;
  manifest["out_dir"] = a.out_dir;
  manifest["best_loss"] = r.trace.best_loss;
  manifest["best_epoch"] = r.trace.best_epoch;
  manifest["stopped_reason"] = nocd::to_string(r.trace.stopped_reason);
  manifest.write(out);
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& truth_path, std::optional<unsigned> nodes) {
  const nocd::io::CoverFile truth = nocd::io::load_cover(truth_path, nodes);
  const nocd::io::CoverFile pred = nocd::io::load_cover(pred_path, truth.cover.num_nodes());
  const nocd::CoverPair pair = nocd::CoverPair::make(truth.cover, pred.cover);
  if (pair.dropped_predicted)
    std::cerr << "note: dropped " << pair.dropped_predicted << " empty predicted communities\n";
  if (pair.truth.num_communities() == 0 || pair.predicted.num_communities() == 0)
    throw nocd::Error("a cover has no non-empty community; scores are undefined");
  std::cout << "nmi=" << nocd::io::format_fixed(nocd::overlapping_nmi(pair), 6) << "\n"
            << "f1=" << nocd::io::format_fixed(nocd::symmetric_agreement(pair, nocd::SetSimilarity::f1), 6) << "\n"
            << "jaccard="
            << nocd::io::format_fixed(nocd::symmetric_agreement(pair, nocd::SetSimilarity::jaccard), 6) << "\n";
  return 0;
}

int cmd_generate(nocd::PlantedConfig pc, bool write_features, const std::string& out_dir, int argc, char** argv) {
  try {
    pc.validate();
  } catch (const nocd::Error& e) {
    throw UsageError(e.what());
  }
  const fs::path out = prepare_out_dir(out_dir);
  Manifest manifest("generate", argc, argv);
  const nocd::PlantedInstance inst = nocd::generate_planted(pc);
  if (inst.graph.num_edges() == 0) std::cerr << "warning: generated graph has no edges\n";

  write_file(out / "graph.tsv", [&](std::ostream& o) { nocd::io::write_edge_list(o, inst.graph); });
  write_file(out / "truth.txt", [&](std::ostream& o) { nocd::io::write_cover(o, inst.truth); });
  write_file(out / "generating_affiliations.txt",
             [&](std::ostream& o) { nocd::io::write_affiliations(o, inst.f.values(), 0.5); });
  for (const char* f : {"graph.tsv", "truth.txt", "generating_affiliations.txt"}) manifest.add_output(out / f);
  if (write_features) {
    write_file(out / "features.txt", [&](std::ostream& o) { nocd::io::write_features(o, inst.attributes); });
    manifest.add_output(out / "features.txt");
  }

  std::cout << "nodes=" << inst.graph.num_nodes() << "\nedges=" << inst.graph.num_edges() << "\n";
  manifest["planted"] = {{"nodes", pc.num_nodes},
                         {"communities", pc.num_communities},
                         {"within_dot", pc.within_dot},
                         {"background_dot", pc.background_dot},
                         {"overlap", pc.overlap_prob},
                         {"informative_attributes", pc.informative_attributes},
                         {"flip_rate", pc.flip_rate},
                         {"noise_columns", pc.noise_columns},
                         {"noise_density", pc.noise_density}};
  manifest["seed"] = pc.seed;
  manifest["out_dir"] = out_dir;
  manifest.write(out);
  return 0;
}

int cmd_convergence(const CommonArgs& a, const std::vector<std::size_t>& batch_sizes, int argc, char** argv) {
  const nocd::ModelVariant v = parse_variant(a.variant);
  const nocd::TrainConfig cfg = resolve_config(a, v);
  const auto c = require_communities(a.communities);
  for (std::size_t s : batch_sizes)
    if (s == 0) throw UsageError("--batch-sizes must be positive");
  const nocd::SparseGraph g = load_graph(a.graph);
  const auto x = load_attributes(a.features, v, g);
  for (std::size_t s : batch_sizes)
    if (s > g.num_edges() || s > g.num_non_edges())
      std::cerr << "warning: batch size " << s << " exceeds the edge or non-edge count; sampling is with replacement\n";
  const fs::path out = prepare_out_dir(a.out_dir);
  Manifest manifest("convergence", argc, argv);

  const auto series = nocd::convergence_experiment(v, g, ptr(x), c, batch_sizes, cfg);
  write_file(out / "convergence.csv", [&](std::ostream& o) {
    o << "series,batch_size,epoch,entries_accessed,full_loss\n";
    for (const auto& s : series) {
      const std::string name = s.batch_size ? "S" + std::to_string(*s.batch_size) : "full";
      const std::string size = s.batch_size ? std::to_string(*s.batch_size) : "";
      for (const auto& e : s.trace.evaluations)
        o << name << ',' << size << ',' << e.epoch << ',' << e.entries_accessed << ','
          << nocd::io::format_fixed(e.full_loss) << '\n';
    }
  });
  manifest.add_output(out / "convergence.csv");
  for (const auto& s : series) {
    const std::string file = s.batch_size ? "trace_S" + std::to_string(*s.batch_size) + ".csv" : "trace_full.csv";
    write_file(out / file, [&](std::ostream& o) { nocd::write_trace_csv(o, s.trace); });
    manifest.add_output(out / file);
    std::cout << (s.batch_size ? "S=" + std::to_string(*s.batch_size) : std::string("full"))
              << " final_loss=" << nocd::io::format_fixed(s.trace.evaluations.back().full_loss) << "\n";
  }

  manifest["variant"] = v.name();
  manifest["communities"] = c;
  manifest["batch_sizes"] = batch_sizes;
  manifest["config"] = config_json(cfg);
  manifest["inputs"] = {{"graph", a.graph}, {"features", a.features}};
  manifest["seed"] = cfg.seed;
  manifest["out_dir"] = a.out_dir;
  manifest.write(out);
  return 0;
}

int cmd_inductive(const CommonArgs& a, const std::vector<std::string>& variant_names,
                  const std::vector<double>& fractions, const std::vector<std::uint64_t>& seeds, int argc,
                  char** argv) {
  if (a.truth.empty()) throw UsageError("inductive requires --truth");
  std::vector<nocd::ModelVariant> variants;
  for (const auto& n : variant_names) {
    variants.push_back(parse_variant(n));
    if (!variants.back().is_neural()) throw UsageError("inductive evaluation needs a neural variant");
  }
  for (double t : fractions)
    if (!(t > 0.0 && t < 1.0)) throw UsageError("--fractions must lie in (0, 1)");
  const nocd::SparseGraph g = load_graph(a.graph);
  std::optional<nocd::FeatureMatrix> x;
  for (const auto& v : variants)
    if (v.input() == nocd::InputKind::attributes && !x) x = load_attributes(a.features, v, g);
  const nocd::GroundTruth truth = nocd::io::load_cover(a.truth, g.num_nodes()).cover;
  const nocd::TrainConfig base = resolve_config(a, variants.front());
  const fs::path out = prepare_out_dir(a.out_dir);
  Manifest manifest("inductive", argc, argv);

  struct Job {
    double t;
    std::uint64_t seed;
    nocd::ModelVariant variant;
    double nmi = 0.0;
    std::size_t test_nodes = 0;
  };
  std::vector<Job> jobs;
  for (double t : fractions)
    for (std::uint64_t s : seeds)
      for (const auto& v : variants) jobs.push_back({t, s, v});
  nocd::parallel_for(jobs.size(), [&](std::size_t i) {
    Job& job = jobs[i];
    nocd::TrainConfig cfg = base;
    cfg.seed = job.seed;
    const auto r = nocd::inductive_evaluate(job.variant, g, ptr(x), truth, job.t, cfg);
    job.nmi = r.test_nmi;
    job.test_nodes = r.split.test_nodes.size();
  });

  write_file(out / "inductive.csv", [&](std::ostream& o) {
    o << "test_fraction,seed,variant,test_nodes,test_nmi\n";
    for (const auto& j : jobs)
      o << nocd::io::format_fixed(j.t, 4) << ',' << j.seed << ',' << j.variant.name() << ',' << j.test_nodes << ','
        << nocd::io::format_fixed(j.nmi) << '\n';
  });
  manifest.add_output(out / "inductive.csv");
  std::cout << "rows=" << jobs.size() << "\n";

  manifest["variants"] = variant_names;
  manifest["fractions"] = fractions;
  manifest["seeds"] = seeds;
  manifest["config"] = config_json(base);
  manifest["inputs"] = {{"graph", a.graph}, {"features", a.features}, {"truth", a.truth}};
  manifest["out_dir"] = a.out_dir;
  manifest.write(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Overlapping community detection with graph neural networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NOCD_VERSION);

  CommonArgs train_args;
  bool full_batch = false;
  auto* train = app.add_subcommand("train", "Train a model and write F, the cover, the trace and a checkpoint");
  train->add_option("--graph", train_args.graph, "Edge list")->required()->check(CLI::ExistingFile);
  train->add_option("--features", train_args.features, "Node attributes")->check(CLI::ExistingFile);
  train->add_option("--truth", train_args.truth, "Ground-truth cover to score against")->check(CLI::ExistingFile);
  train->add_option("--variant", train_args.variant, "nocd-x | nocd-g | mlp-x | mlp-g | free")->capture_default_str();
  train->add_option("--communities", train_args.communities, "Number of communities C")->required();
  train->add_option("--out-dir", train_args.out_dir, "Output directory")->required();
  train->add_flag("--full-batch", full_batch, "Use the exact full-graph gradient each epoch");
  add_training_flags(train, train_args);

  std::string pred_path, truth_path;
  std::optional<unsigned> eval_nodes;
  auto* eval = app.add_subcommand("eval", "Score a predicted cover against ground truth");
  eval->add_option("--pred", pred_path, "Predicted cover")->required()->check(CLI::ExistingFile);
  eval->add_option("--truth", truth_path, "Ground-truth cover")->required()->check(CLI::ExistingFile);
  eval->add_option("--nodes", eval_nodes, "Node count when the truth file has no N= header");

  nocd::PlantedConfig pc;
  bool noise_only = false, no_features = false;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Sample a planted overlapping-community graph");
  gen->add_option("--nodes", pc.num_nodes, "Number of nodes")->capture_default_str();
  gen->add_option("--communities", pc.num_communities, "Number of communities")->capture_default_str();
  gen->add_option("--within-dot", pc.within_dot, "<F_u, F_v> inside a community")->capture_default_str();
  gen->add_option("--background-dot", pc.background_dot, "<F_u, F_v> shared by all pairs")->capture_default_str();
  gen->add_option("--overlap", pc.overlap_prob, "Probability of a second membership")->capture_default_str();
  gen->add_option("--flip-rate", pc.flip_rate, "Attribute bit-flip rate")->capture_default_str();
  gen->add_option("--noise-columns", pc.noise_columns, "Extra random attribute columns")->capture_default_str();
  gen->add_option("--noise-density", pc.noise_density, "Density of the random columns")->capture_default_str();
  gen->add_flag("--noise-only", noise_only, "Attributes carry no membership information");
  gen->add_flag("--no-features", no_features, "Do not write an attribute file");
  gen->add_option("--seed", pc.seed, "Random seed")->capture_default_str();
  gen->add_option("--out-dir", gen_out, "Output directory")->required();

  CommonArgs conv_args;
  std::vector<std::size_t> batch_sizes{1000, 2500, 5000, 10000, 20000};
  auto* conv = app.add_subcommand("convergence", "Training curves for several batch sizes and full-batch");
  conv->add_option("--graph", conv_args.graph, "Edge list")->required()->check(CLI::ExistingFile);
  conv->add_option("--features", conv_args.features, "Node attributes")->check(CLI::ExistingFile);
  conv->add_option("--variant", conv_args.variant, "Model variant")->capture_default_str();
  conv->add_option("--communities", conv_args.communities, "Number of communities C")->required();
  conv->add_option("--batch-sizes", batch_sizes, "Comma-separated batch sizes")->delimiter(',')->capture_default_str();
  conv->add_option("--out-dir", conv_args.out_dir, "Output directory")->required();
  add_training_flags(conv, conv_args);

  CommonArgs ind_args;
  std::vector<std::string> ind_variants{"nocd-x", "nocd-g"};
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::uint64_t> seeds{0};
  auto* ind = app.add_subcommand("inductive", "Test-set NMI for held-out nodes");
  ind->add_option("--graph", ind_args.graph, "Edge list")->required()->check(CLI::ExistingFile);
  ind->add_option("--features", ind_args.features, "Node attributes")->check(CLI::ExistingFile);
  ind->add_option("--truth", ind_args.truth, "Ground-truth cover")->required()->check(CLI::ExistingFile);
  ind->add_option("--variants", ind_variants, "Comma-separated neural variants")->delimiter(',')->capture_default_str();
  ind->add_option("--fractions", fractions, "Comma-separated test fractions")->delimiter(',')->capture_default_str();
  ind->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',')->capture_default_str();
  ind->add_option("--out-dir", ind_args.out_dir, "Output directory")->required();
  add_training_flags(ind, ind_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(train_args, full_batch, argc, argv);
    if (*eval) return cmd_eval(pred_path, truth_path, eval_nodes);
    if (*gen) {
      pc.informative_attributes = !noise_only;
      return cmd_generate(pc, !no_features, gen_out, argc, argv);
    }
    if (*conv) return cmd_convergence(conv_args, batch_sizes, argc, argv);
    if (*ind) return cmd_inductive(ind_args, ind_variants, fractions, seeds, argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const nocd::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
