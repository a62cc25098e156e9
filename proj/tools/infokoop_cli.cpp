#include <iostream>

#include "commands.hpp"
#include "infokoop/errors.hpp"

int main(int argc, char** argv) {
  using namespace infokoop;
  CLI::App app{"Information-theoretic Koopman autoencoders"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<cli::Command>> commands;
  cli::register_commands(app, commands);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    for (const auto& command : commands)
      if (command->app()->parsed()) command->run();
    return 0;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
