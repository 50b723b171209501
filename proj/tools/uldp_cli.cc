// Copyright 2026 The ULDP-FL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end over the C interface. Every subcommand builds a JSON
// request (config file first, flags on top), writes the returned artifacts to
// the output directory and echoes the main one to stdout.
//
// Output directory: --output-dir, else $ULDP_OUTPUT_DIR, else the config's
// "output_dir", else the working directory.
// Exit codes: 0 success, 2 config error, 3 correctness precondition failure,
// 1 anything else.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uldp/uldp.h"

namespace {

using json = nlohmann::json;

constexpr int kExitConfig = 2;

using Entry = uldp_status (*)(const char*, uldp_output**);

struct Command {
  Entry entry = nullptr;
  std::string config_path;  // optional base request
  json request = json::object();
  std::string primary;  // artifact echoed to stdout
};

// Binds --name to the JSON pointer `path` of the request.
template <typename T>
void Bind(CLI::App* app, Command& cmd, const std::string& name,
          const std::string& path, const std::string& help) {
  app->add_option_function<T>(
      name, [&cmd, path](const T& v) { cmd.request[json::json_pointer(path)] = v; },
      help);
}

void BindFlag(CLI::App* app, Command& cmd, const std::string& name,
              const std::string& path, const std::string& help) {
  app->add_flag_function(
      name,
      [&cmd, path](int64_t count) { cmd.request[json::json_pointer(path)] = count > 0; },
      help);
}

void AddExperimentFlags(CLI::App* app, Command& cmd) {
  app->add_option("--config", cmd.config_path, "JSON experiment config")
      ->check(CLI::ExistingFile);
  Bind<std::string>(app, cmd, "--algo", "/algorithm",
                    "default, naive, group, sgd, avg, avg-w or avg-sub");
  Bind<int64_t>(app, cmd, "--k", "/train/group_k", "group size for group");
  Bind<double>(app, cmd, "--sigma", "/train/sigma", "noise multiplier");
  app->add_option_function<std::string>(
      "--clip",
      [&cmd](const std::string& v) {
        if (v == "inf" || v == "infinity") {
          cmd.request["train"]["clip"] = "inf";
        } else {
          try {
            cmd.request["train"]["clip"] = std::stod(v);
          } catch (const std::exception&) {
            throw CLI::ValidationError("--clip", "expected a number or inf");
          }
        }
      },
      "clipping bound, or inf");
  Bind<int32_t>(app, cmd, "--rounds", "/train/rounds", "training rounds");
  Bind<int32_t>(app, cmd, "--epochs", "/train/local_epochs", "local epochs per round");
  Bind<double>(app, cmd, "--eta-l", "/train/eta_l", "local learning rate");
  Bind<double>(app, cmd, "--eta-g", "/train/eta_g", "global learning rate");
  Bind<double>(app, cmd, "--q-user", "/train/user_rate", "user sampling rate (avg-sub)");
  Bind<double>(app, cmd, "--q-record", "/train/record_rate", "record sampling rate (group)");
  Bind<std::string>(app, cmd, "--dist", "/distribution/kind",
                    "uniform, zipf or fixed-zipf");
  Bind<double>(app, cmd, "--alpha-users", "/distribution/alpha_users",
               "zipf exponent of user record counts");
  Bind<int64_t>(app, cmd, "--records", "/num_records", "total records incl. test split");
  Bind<int32_t>(app, cmd, "--users", "/num_users", "number of users");
  Bind<int32_t>(app, cmd, "--silos", "/num_silos", "number of silos");
  Bind<int32_t>(app, cmd, "--dim", "/dataset/dim", "feature dimension");
  Bind<std::string>(app, cmd, "--model", "/model/kind", "logreg or mlp");
  Bind<double>(app, cmd, "--delta", "/delta", "target delta");
  Bind<int32_t>(app, cmd, "--repetitions", "/repetitions", "independent runs");
  BindFlag(app, cmd, "--optimal-weights", "/optimal_weights",
           "count-proportional weights for avg-sub");
  BindFlag(app, cmd, "--secure", "/secure", "weight through the secure protocol");
  Bind<int32_t>(app, cmd, "--key-bits", "/key_bits", "Paillier modulus size");
  Bind<int64_t>(app, cmd, "--n-max", "/n_max", "upper bound on records per user");
  Bind<uint64_t>(app, cmd, "--seed", "/seed", "master seed");
}

std::string ReadFile(const std::string& path, bool& ok) {
  std::ifstream in(path);
  ok = static_cast<bool>(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Base request from the config file with the flag values merged on top.
bool BuildRequest(Command& cmd, std::string& text, std::string& error) {
  json base = json::object();
  if (!cmd.config_path.empty()) {
    bool ok = false;
    const std::string raw = ReadFile(cmd.config_path, ok);
    if (!ok) {
      error = "cannot read " + cmd.config_path;
      return false;
    }
    try {
      base = json::parse(raw);
    } catch (const json::exception& e) {
      error = cmd.config_path + ": " + e.what();
      return false;
    }
    if (!base.is_object()) {
      error = cmd.config_path + ": expected a JSON object";
      return false;
    }
  }
  base.merge_patch(cmd.request);
  text = base.dump();
  return true;
}

std::filesystem::path OutputDir(const std::string& flag, const std::string& request) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("ULDP_OUTPUT_DIR"); env != nullptr && *env) {
    return env;
  }
  const json j = json::parse(request, nullptr, false);
  if (j.is_object() && j.contains("output_dir") && j["output_dir"].is_string() &&
      !j["output_dir"].get<std::string>().empty()) {
    return j["output_dir"].get<std::string>();
  }
  return ".";
}

int Execute(Command& cmd, const std::string& output_flag) {
  std::string request, error;
  if (!BuildRequest(cmd, request, error)) {
    std::cerr << "error: " << error << "\n";
    return kExitConfig;
  }
  uldp_output* out = nullptr;
  const uldp_status status = cmd.entry(request.c_str(), &out);
  if (status != ULDP_OK) {
    std::cerr << "error (" << uldp_status_name(status) << "): " << uldp_output_error(out)
              << "\n";
    uldp_output_free(out);
    return status == ULDP_ERROR_CONFIG || status == ULDP_ERROR_PRECONDITION
               ? static_cast<int>(status)
               : 1;
  }
  const std::filesystem::path dir = OutputDir(output_flag, request);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  int code = 0;
  for (size_t i = 0; i < uldp_output_count(out); ++i) {
    size_t length = 0;
    const char* text = uldp_output_text(out, i, &length);
    const std::filesystem::path path = dir / uldp_output_name(out, i);
    std::ofstream file(path, std::ios::binary);
    file.write(text, static_cast<std::streamsize>(length));
    if (!file) {
      std::cerr << "error: cannot write " << path << "\n";
      code = 1;
    }
  }
  if (const char* primary = uldp_output_find(out, cmd.primary.c_str())) {
    std::cout << primary;
  }
  uldp_output_free(out);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"User-level differentially private cross-silo federated learning"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(uldp_version()));
  std::string output_dir;
  app.add_option("--output-dir", output_dir,
                 "artifact directory (default: $ULDP_OUTPUT_DIR or .)");

  Command simulate{uldp_simulate, "", json::object(), "summary.csv"};
  AddExperimentFlags(app.add_subcommand("simulate", "train and evaluate"), simulate);

  Command compare{uldp_compare_weighting, "", json::object(), "weighting.csv"};
  AddExperimentFlags(
      app.add_subcommand("compare-weighting", "uniform vs count-proportional weights"),
      compare);

  Command account{uldp_account, "", json::object(), "account.jsonl"};
  {
    CLI::App* sub = app.add_subcommand("account", "privacy budget of a mechanism");
    Bind<std::string>(sub, account, "--mechanism", "/mechanism",
                      "naive-avg, group or raw-curve");
    Bind<double>(sub, account, "--sigma", "/sigma", "noise multiplier");
    Bind<double>(sub, account, "--q", "/q", "sampling rate per step");
    Bind<int64_t>(sub, account, "--steps", "/steps", "number of steps");
    Bind<int64_t>(sub, account, "--k", "/k", "group size (group)");
    Bind<double>(sub, account, "--delta", "/delta", "target delta");
    Bind<std::vector<double>>(sub, account, "--orders", "/orders", "RDP order grid");
    Bind<std::vector<int64_t>>(sub, account, "--k-list", "/k_list",
                               "also write a group-size sweep CSV");
  }

  Command allocate{uldp_allocate, "", json::object(), "histogram.json"};
  {
    CLI::App* sub = app.add_subcommand("allocate", "assign records to users and silos");
    sub->add_option("--config", allocate.config_path, "JSON request")
        ->check(CLI::ExistingFile);
    Bind<std::string>(sub, allocate, "--dist", "/distribution/kind",
                      "uniform, zipf or fixed-zipf");
    Bind<double>(sub, allocate, "--alpha-users", "/distribution/alpha_users",
                 "zipf exponent of user record counts");
    Bind<double>(sub, allocate, "--alpha-silos", "/distribution/alpha_silos",
                 "zipf exponent of each user's silo split");
    Bind<double>(sub, allocate, "--primary-fraction", "/distribution/primary_fraction",
                 "share in the primary silo (fixed-zipf)");
    Bind<int64_t>(sub, allocate, "--min-per-pair", "/distribution/min_records_per_pair",
                  "minimum records per non-empty pair (fixed-zipf)");
    Bind<int64_t>(sub, allocate, "--records", "/num_records", "number of records");
    Bind<int32_t>(sub, allocate, "--users", "/num_users", "number of users");
    Bind<int32_t>(sub, allocate, "--silos", "/num_silos", "number of silos");
    Bind<uint64_t>(sub, allocate, "--seed", "/seed", "seed");
    BindFlag(sub, allocate, "--features", "/features",
             "append synthetic features and the label");
    Bind<int32_t>(sub, allocate, "--dim", "/dataset/dim", "feature dimension");
    Bind<int32_t>(sub, allocate, "--classes", "/dataset/num_classes", "label classes");
  }

  Command bench{uldp_protocol_bench, "", json::object(), "correctness.json"};
  {
    CLI::App* sub =
        app.add_subcommand("protocol-bench", "time the private weighting protocol");
    Bind<int32_t>(sub, bench, "--silos", "/silos", "number of silos");
    Bind<int32_t>(sub, bench, "--users", "/users", "number of users");
    Bind<int32_t>(sub, bench, "--dim", "/dim", "feature dimension");
    Bind<int32_t>(sub, bench, "--rounds", "/rounds", "aggregation rounds");
    Bind<int32_t>(sub, bench, "--key-bits", "/key_bits", "Paillier modulus size");
    Bind<double>(sub, bench, "--precision", "/precision", "fixed-point precision");
    Bind<int64_t>(sub, bench, "--n-max", "/n_max", "upper bound on records per user");
    Bind<int32_t>(sub, bench, "--records-per-pair", "/records_per_pair",
                  "records per (silo, user)");
    Bind<uint64_t>(sub, bench, "--seed", "/seed", "seed");
  }

  Command sweep{uldp_sweep_gdp, "", json::object(), "group_sweep.csv"};
  {
    CLI::App* sub = app.add_subcommand(
        "sweep-gdp", "group-privacy epsilon over group sizes, both conversions");
    Bind<double>(sub, sweep, "--sigma", "/sigma", "noise multiplier");
    Bind<double>(sub, sweep, "--q", "/q", "sampling rate per step");
    Bind<int64_t>(sub, sweep, "--steps", "/steps", "number of steps");
    Bind<double>(sub, sweep, "--delta", "/delta", "target delta");
    Bind<std::vector<int64_t>>(sub, sweep, "--k-list", "/k_list", "group sizes");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  Command* cmd = name == "simulate"            ? &simulate
                 : name == "compare-weighting" ? &compare
                 : name == "account"           ? &account
                 : name == "allocate"          ? &allocate
                 : name == "protocol-bench"    ? &bench
                                               : &sweep;
  return Execute(*cmd, output_dir);
}
