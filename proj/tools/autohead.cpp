// Command-line front end: gen-data, train-cnns, fuse, search-head, report, bench.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "autohead/error.hpp"
#include "autohead/pipeline.hpp"

namespace fs = std::filesystem;
using autohead::pipeline::RunConfig;

namespace {

const char* kind_name(autohead::ErrorKind k) {
  switch (k) {
    case autohead::ErrorKind::kUsage:
      return "usage";
    case autohead::ErrorKind::kData:
      return "data";
    case autohead::ErrorKind::kTraining:
      return "training";
    case autohead::ErrorKind::kSearch:
      return "search";
  }
  return "usage";
}

// One line, quotes and newlines escaped, so the message can be parsed mechanically.
int fail(const std::string& command, const char* kind, int code, const std::string& message) {
  std::string escaped;
  for (char c : message) {
    if (c == '"' || c == '\\') escaped += '\\';
    escaped += (c == '\n' || c == '\r') ? ' ' : c;
  }
  std::cerr << "error: kind=" << kind << " code=" << code << " command=" << (command.empty() ? "-" : command)
            << " message=\"" << escaped << "\"\n";
  return code;
}

void apply_config_file(RunConfig& config, const std::string& path, bool& out_from_file) {
  for (const auto& item : CLI::ConfigINI().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    std::string value;
    for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
    const auto key = item.fullname();
    config.apply_setting(key, value);
    if (key == "out") out_from_file = true;
  }
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surface defect classifiers: CNN pool, CNN-Fusion and Auto-Classifier"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  std::string config_path;
  std::map<std::string, std::string> flags;  // setting key -> value, applied after the config file
  std::vector<std::string> sets;
  auto flag = [&](CLI::App* on, const std::string& name, const std::string& key, const std::string& help) {
    on->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
  };

  app.add_option("--config", config_path, "Key-value config file ([section] key = value)")->check(CLI::ExistingFile);
  flag(&app, "--seed", "seed", "Master seed");
  flag(&app, "--workers", "workers", "Worker threads");
  flag(&app, "--out", "out", "Run directory (falls back to $AUTOHEAD_OUT, then ./run)");
  app.add_option("--set", sets, "Override any setting: --set train.epochs=30 (repeatable)");

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic suite (or index --data-root), splits and manifest");
  flag(gen, "--data-root", "data.root", "Existing <problem>/{defect,no_defect}/*.png tree");
  flag(gen, "--contrast", "data.contrast", "Defect contrast");
  flag(gen, "--noise", "data.noise", "Texture noise stddev");
  flag(gen, "--problems", "data.problems", "Number of synthetic problems (1-6)");
  flag(gen, "--image-size", "data.image_size", "Image side in pixels");

  auto* train = app.add_subcommand("train-cnns", "Train every listed architecture on every problem");
  flag(train, "--architectures", "train.architectures", "Comma-separated architecture names");
  flag(train, "--epochs", "train.epochs", "Training epochs");

  auto* fuse = app.add_subcommand("fuse", "Validation-AUC weighted fusion of the trained networks");
  flag(fuse, "--architectures", "train.architectures", "Networks to fuse");

  auto* search = app.add_subcommand("search-head", "Budgeted classifier-head search on truncated features");
  flag(search, "--architectures", "train.architectures", "Candidate extractor networks");
  flag(search, "--max-candidates", "search.max_candidates", "Candidate budget (or none)");
  flag(search, "--max-seconds", "search.max_seconds", "Wall-clock budget (or none)");

  app.add_subcommand("report", "Render Table-1/Table-2 style summaries from stored reports");
  auto* bench = app.add_subcommand("bench", "Single-image inference timings");
  flag(bench, "--architectures", "train.architectures", "Networks to time");
  flag(bench, "--runs", "bench.runs", "Timed calls per model");
  flag(bench, "--warmup", "bench.warmup", "Untimed warm-up calls");

  std::string command;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("", "usage", 1, e.what());
  }
  command = app.get_subcommands().front()->get_name();

  try {
    RunConfig config;
    bool out_set = false;
    if (!config_path.empty()) apply_config_file(config, config_path, out_set);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw autohead::ConfigError("--set expects key=value, got '" + s + "'");
      config.apply_setting(s.substr(0, eq), s.substr(eq + 1));
      out_set = out_set || s.substr(0, eq) == "out";
    }
    for (const auto& [key, value] : flags) config.apply_setting(key, value);
    out_set = out_set || flags.count("out") > 0;
    if (!out_set) {
      if (const char* env = std::getenv("AUTOHEAD_OUT"); env != nullptr && *env != '\0') config.out = env;
    }

    if (command == "gen-data") {
      const auto manifest = autohead::pipeline::cmd_gen_data(config);
      for (const auto& p : manifest.at("problems")) {
        std::cout << p.at("name").get<std::string>() << " defect=" << p.at("counts").at("defect")
                  << " no_defect=" << p.at("counts").at("no_defect") << "\n";
      }
    } else if (command == "train-cnns") {
      for (const auto& r : autohead::pipeline::cmd_train_cnns(config)) {
        std::cout << r.problem << " " << r.architecture << " val_auc=" << pct(r.validation_auc)
                  << " epoch=" << r.selected_epoch << " test_acc=" << pct(r.test.accuracy)
                  << " test_auc=" << (r.test.auc ? pct(*r.test.auc) : "-") << "\n";
      }
    } else if (command == "fuse") {
      for (const auto& r : autohead::pipeline::cmd_fuse(config)) {
        std::cout << r.problem << " fusion test_acc=" << pct(r.result.report.accuracy)
                  << " test_auc=" << (r.result.report.auc ? pct(*r.result.report.auc) : "-")
                  << " f_time_serial=" << r.timing.f_time_serial << " f_time_parallel=" << r.timing.f_time_parallel
                  << "\n";
      }
    } else if (command == "search-head") {
      for (const auto& r : autohead::pipeline::cmd_search_head(config)) {
        const auto& top = r.board.entries.front();
        std::cout << r.problem << " network=" << r.network << " head=" << top.spec.id() << " ("
                  << autohead::search::family_tag(top.spec.family) << ") val_auc=" << pct(r.validation_auc)
                  << " test_acc=" << pct(r.evaluation.report.accuracy)
                  << " test_auc=" << (r.evaluation.report.auc ? pct(*r.evaluation.report.auc) : "-") << "\n";
      }
    } else if (command == "report") {
      const auto r = autohead::pipeline::cmd_report(config.out);
      std::cout << autohead::report::table1_markdown(r) << "\n" << autohead::report::table2_markdown(r);
    } else if (command == "bench") {
      std::cout << autohead::pipeline::cmd_bench(config).dump(2) << "\n";
    }
  } catch (const autohead::Error& e) {
    return fail(command, kind_name(e.kind()), static_cast<int>(e.kind()), e.what());
  } catch (const CLI::Error& e) {
    return fail(command, "usage", 1, e.what());
  } catch (const std::exception& e) {
    return fail(command, "usage", 1, e.what());
  }
  return 0;
}
