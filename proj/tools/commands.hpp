#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace infokoop::cli {

using json = nlohmann::json;

enum class Kind { Int, Real, Text, Bool, RealList, IntList, TextList };

struct Setting {
  std::string key;
  Kind kind;
  json fallback;  // null = no default
  std::string help;
  std::string flags;  // CLI11 option names; derived from key when empty
};

// One subcommand: its settings, the raw flag text, and the handler that runs
// on the resolved configuration.
class Command {
 public:
  using Handler = std::function<void(const json& resolved)>;

  Command(CLI::App& parent, std::string name, std::string description,
          std::vector<Setting> settings, Handler handler);

  // Layering: defaults, then an optional preset, then --config, then flags.
  json resolve() const;
  void run() const { handler_(resolve()); }
  CLI::App* app() const { return app_; }
  void add_positional(const std::string& key);
  void set_presets(std::map<std::string, json> presets) { presets_ = std::move(presets); }

 private:
  CLI::App* app_;
  std::string name_;
  std::vector<Setting> settings_;
  Handler handler_;
  std::map<std::string, std::string> raw_;
  std::map<std::string, bool> flag_seen_;
  std::string config_path_;
  std::map<std::string, json> presets_;
};

void register_commands(CLI::App& app, std::vector<std::unique_ptr<Command>>& commands);

}  // namespace infokoop::cli
