#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "otcr/error.hpp"
#include "otcr/experiment.hpp"

namespace {

using nlohmann::json;

int fail(const char* kind, const std::string& message, const std::string& field = "") {
  json err = {{"kind", kind}, {"message", message}};
  err["field"] = field.empty() ? json(nullptr) : json(field);
  std::cout << json{{"error", err}}.dump(2) << std::endl;
  return std::string(kind) == "config" || std::string(kind) == "usage" ? 2 : 1;
}

json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw otcr::ConfigError("config", "cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw otcr::ConfigError("config", path + " is not valid JSON");
  return j;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw otcr::ConfigError("seeds", "bad seed '" + item + "' in --seed-list");
    }
  }
  if (out.empty()) throw otcr::ConfigError("seeds", "--seed-list is empty");
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw otcr::DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual regression with optimal-transport balancing"};
  app.require_subcommand(1);
  std::string config_path, out_dir, seed_list;
  std::vector<std::string> overrides;
  for (const char* name : {"train", "eval", "ablate", "sweep", "bench"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory for reports, CSVs and checkpoints");
    sub->add_option("--seed-list", seed_list, "comma-separated seeds, replaces the config list");
    sub->add_option("--set", overrides, "key=value override of a top-level setting");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    otcr::RunConfig cfg = otcr::RunConfig::from_json(read_config(config_path));
    for (const auto& o : overrides) cfg.set(o);
    if (!seed_list.empty()) cfg.seeds = parse_seed_list(seed_list);
    cfg.validate();
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    const std::filesystem::path out(out_dir);

    json report;
    if (command == "train") {
      report = otcr::cmd_train(cfg, out_dir.empty() ? "" : (out / "checkpoints").string());
    } else if (command == "eval") {
      report = otcr::cmd_eval(cfg);
    } else if (command == "ablate") {
      report = otcr::cmd_ablate(cfg, out_dir.empty() ? "" : (out / "checkpoints").string());
    } else if (command == "sweep") {
      auto res = otcr::cmd_sweep(cfg);
      report = std::move(res.report);
      if (!out_dir.empty()) write_file(out / "sweep.csv", res.csv);
    } else {
      auto res = otcr::cmd_bench(cfg);
      report = std::move(res.report);
      if (!out_dir.empty()) write_file(out / "bench.csv", res.csv);
    }
    const std::string text = report.dump(2);
    if (!out_dir.empty()) write_file(out / (command + "_report.json"), text + "\n");
    std::cout << text << std::endl;
    return 0;
  } catch (const otcr::ConfigError& e) {
    return fail(e.kind(), e.what(), e.field());
  } catch (const otcr::ParseError& e) {
    return fail(e.kind(), e.what(), e.column());
  } catch (const otcr::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
