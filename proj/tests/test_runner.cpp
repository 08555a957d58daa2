#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "bpl/runner.hpp"

namespace fs = std::filesystem;

namespace {

// A micro run that exercises the whole pipeline in a couple of seconds.
bpl::ConfigMap micro_map(const std::string& method, const std::string& out) {
  return {{"system", "convection"}, {"method", method},          {"seed", "5"},
          {"out", out},             {"iterations", "2"},         {"n_samples", "4"},
          {"n_burnin", "4"},        {"n_leapfrog", "4"},         {"n_chains", "2"},
          {"ic_points", "24"},      {"bc_points", "6"},          {"pde_points", "40"},
          {"pretrain_epochs", "30"}, {"vanilla_epochs", "60"},   {"ensemble_size", "2"},
          {"ensemble_epochs", "20"}, {"eval_points", "300"},     {"grid_nx", "12"},
          {"grid_nt", "6"},          {"var_consensus", "1"},     {"eps_anchor", "1"},
          {"sigma_ic", "0.05"},      {"sigma_pl", "0.1"},        {"sigma_bc", "0.05"},
          {"sigma_pde", "0.1"},      {"trace", "1"}};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("bayes run writes all artifacts and reproduces from its echo", "[runner][slow]") {
  const std::string out = (fs::temp_directory_path() / "bpl_run_bayes").string();
  fs::remove_all(out);
  const bpl::RunConfig cfg = bpl::resolve_config(micro_map("bayes-pl", out));
  const bpl::RunResult r = bpl::run(cfg);

  CHECK(r.rel_l2 > 0.0);
  CHECK(r.iterations_run == 2);
  for (const char* f : {"summary.txt", "history.csv", "fields.csv", "checkpoint.bin",
                        "effective_config.txt", "bundle.csv", "trace.csv"})
    CHECK(fs::exists(fs::path(out) / f));
  CHECK(fs::exists(fs::path(out) / "checkpoints/iter_0000.bin"));

  const std::string summary = slurp(out + "/summary.txt");
  CHECK(summary.find("method = bayes-pl") != std::string::npos);
  CHECK(summary.find("relative_l2 = ") != std::string::npos);
  CHECK(summary.find("seconds_sampling") != std::string::npos);

  // Re-running the echoed config bit-reproduces the headline number.
  const std::string out2 = (fs::temp_directory_path() / "bpl_run_bayes2").string();
  fs::remove_all(out2);
  bpl::ConfigMap echoed = bpl::parse_config_file(out + "/effective_config.txt");
  echoed["out"] = out2;
  const bpl::RunResult r2 = bpl::run(bpl::resolve_config(echoed));
  CHECK(r2.rel_l2 == r.rel_l2);

  // And so does simply re-running the same config.
  fs::remove_all(out2);
  echoed["out"] = "";
  const bpl::RunResult r3 = bpl::run(bpl::resolve_config(echoed));
  CHECK(r3.rel_l2 == r.rel_l2);

  // The per-iteration history has one row per iteration with growing labels.
  const std::string history = slurp(out + "/history.csv");
  CHECK(history.find("iteration,pl_size") == 0);

  fs::remove_all(out);
  fs::remove_all(out2);
}

TEST_CASE("vanilla and ensemble runs produce their artifacts", "[runner][slow]") {
  const std::string out = (fs::temp_directory_path() / "bpl_run_van").string();
  fs::remove_all(out);
  const bpl::RunResult rv = bpl::run(bpl::resolve_config(micro_map("vanilla", out)));
  CHECK(rv.rel_l2 > 0.0);
  CHECK(fs::exists(fs::path(out) / "loss.csv"));
  CHECK(!fs::exists(fs::path(out) / "history.csv")); // no outer loop
  fs::remove_all(out);

  const std::string out2 = (fs::temp_directory_path() / "bpl_run_ens").string();
  fs::remove_all(out2);
  const bpl::RunResult re = bpl::run(bpl::resolve_config(micro_map("ensemble-pl", out2)));
  CHECK(re.rel_l2 > 0.0);
  CHECK(fs::exists(fs::path(out2) / "member_00.bin"));
  CHECK(fs::exists(fs::path(out2) / "member_01.bin"));
  CHECK(fs::exists(fs::path(out2) / "history.csv"));
  fs::remove_all(out2);
}

TEST_CASE("bayes-nopl differs from bayes-pl only through the posterior", "[runner][slow]") {
  const bpl::RunConfig pl = bpl::resolve_config(micro_map("bayes-pl", ""));
  bpl::RunConfig nopl = pl;
  nopl.method = bpl::Method::bayes_nopl;
  const bpl::RunResult r1 = bpl::run(pl);
  const bpl::RunResult r2 = bpl::run(nopl);
  CHECK(r1.rel_l2 > 0.0);
  CHECK(r2.rel_l2 > 0.0);
}

TEST_CASE("suite runs every row and records failures", "[runner][slow]") {
  const std::string dir = (fs::temp_directory_path() / "bpl_suite_run").string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string suite_path = dir + "/suite.cfg";
  {
    std::ofstream out(suite_path);
    out << "run = convection 30 bayes-pl\n"
        << "run = convection 30 vanilla\n"
        << "seed = 5\niterations = 1\nn_samples = 3\nn_burnin = 3\nn_leapfrog = 3\n"
        << "sigma_ic = 0.05\nsigma_bc = 0.05\nsigma_pde = 0.1\n"
        << "ic_points = 16\nbc_points = 4\npde_points = 30\npretrain_epochs = 20\n"
        << "vanilla_epochs = 40\neval_points = 200\ngrid_nx = 8\ngrid_nt = 4\n";
  }
  const auto results = bpl::run_suite(bpl::parse_suite_file(suite_path), dir);
  CHECK(results.size() == 2);
  const std::string table = slurp(dir + "/results.csv");
  CHECK(table.find("system,param,method") == 0);
  CHECK(table.find("convection,30,bayes-pl") != std::string::npos);
  CHECK(table.find("convection,30,vanilla") != std::string::npos);
  CHECK(fs::exists(fs::path(dir) / "convection_30_bayes-pl/summary.txt"));
  fs::remove_all(dir);
}
