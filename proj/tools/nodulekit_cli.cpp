// nodulekit command-line front end. Talks to the library only through the C API.

#include <nodulekit/nodulekit.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

constexpr int kUsageExit = 1;

struct Owned {
  char* p = nullptr;
  ~Owned() { nk_string_free(p); }
};

struct Flag {
  std::string key;
  std::string type;
  std::string value;
  CLI::Option* option = nullptr;
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::string config_file;
  std::vector<std::unique_ptr<Flag>> flags;
};

std::string kebab(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

void print_error(const std::string& name, const std::string& message, int exit_code) {
  json err = {{"error", name}, {"message", message}, {"exit_code", exit_code}};
  std::cerr << err.dump() << "\n";
}

[[noreturn]] void usage_error(const std::string& message) {
  print_error("InvalidArgument", message, kUsageExit);
  std::exit(kUsageExit);
}

json convert(const Flag& f) {
  const std::string& v = f.value;
  if (f.type == "string") return v;
  if (f.type == "boolean") {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    usage_error("--" + kebab(f.key) + " expects true or false, got '" + v + "'");
  }
  if (f.type == "integer") {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      usage_error("--" + kebab(f.key) + " expects an integer, got '" + v + "'");
    }
    return out;
  }
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    usage_error("--" + kebab(f.key) + " expects a number, got '" + v + "'");
  }
  return out;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) usage_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    auto j = json::parse(ss.str());
    if (!j.is_object()) usage_error("config file " + path + " must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    usage_error("config file " + path + " is not valid JSON: " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  Owned schema_text;
  if (nk_config_schema(&schema_text.p) != NK_OK) {
    print_error("Internal", nk_last_error_message(), 3);
    return 3;
  }
  const json schema = json::parse(schema_text.p);

  CLI::App app{"nodulekit: lung nodule detection and classification on CT with ViT features"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nk_version()));

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"preprocess", "extract 2D patches from CT scans and split them by scan"},
      {"featurize", "run the encoder over every patch (CLS and GAP features)"},
      {"train-heads", "train the classification and detection heads"},
      {"train-classifier", "train a decision tree, random forest or KNN on features"},
      {"evaluate", "write metrics, ROC CSV and ROC SVG for a model on a partition"},
      {"predict", "classify one candidate location and print label, probability and box"},
      {"archive-inspect", "print the tensors and metadata of a tensor archive"},
      {"init-encoder", "write a randomly initialized encoder archive"},
      {"synth", "write a synthetic CT corpus (scans and CSVs)"},
  };

  std::vector<std::unique_ptr<Command>> cmds;
  for (const auto& [name, help] : commands) {
    auto cmd = std::make_unique<Command>();
    cmd->name = name;
    cmd->app = app.add_subcommand(name, help);
    cmd->app->add_option("--config", cmd->config_file, "JSON file with configuration keys (flags override it)");
    for (const auto& key : schema.at("keys")) {
      const auto& used_by = key.at("commands");
      const bool everywhere = used_by.empty();
      if (!everywhere && std::find(used_by.begin(), used_by.end(), name) == used_by.end()) continue;
      auto flag = std::make_unique<Flag>();
      flag->key = key.at("name").get<std::string>();
      flag->type = key.at("type").get<std::string>();
      std::string desc = key.at("help").get<std::string>() + " (default " + key.at("default").dump() + ")";
      flag->option = cmd->app->add_option("--" + kebab(flag->key), flag->value, desc)
                         ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      cmd->flags.push_back(std::move(flag));
    }
    cmds.push_back(std::move(cmd));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    print_error("InvalidArgument", e.what(), kUsageExit);
    return kUsageExit;
  }

  const Command* chosen = nullptr;
  for (const auto& c : cmds) {
    if (c->app->parsed()) chosen = c.get();
  }
  if (chosen == nullptr) usage_error("no subcommand given");

  json config = chosen->config_file.empty() ? json::object() : load_config_file(chosen->config_file);
  for (const auto& f : chosen->flags) {
    if (f->option->count() > 0) config[f->key] = convert(*f);
  }

  Owned out;
  const nk_status status = nk_run(chosen->name.c_str(), config.dump().c_str(), &out.p, nullptr);
  if (status != NK_OK) {
    const int code = nk_status_exit_code(status);
    print_error(nk_status_name(status), nk_last_error_message(), code);
    return code;
  }
  if (out.p != nullptr && out.p[0] != '\0') std::fputs(out.p, stdout);
  return 0;
}
