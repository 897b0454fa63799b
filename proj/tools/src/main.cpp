#include <iostream>

#include "common.hpp"

int main(int argc, char** argv) {
  using namespace trendbal::cli;
  CLI::App app("Balancing weights for synthetic-control style panel estimates", "trendbal");
  app.require_subcommand(1);
  const std::vector<Command> commands{register_fit(app), register_factors(app),
                                      register_simulate(app), register_compare(app),
                                      register_diagnose(app)};
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  try {
    for (const auto& c : commands) {
      if (c.app->parsed()) return c.run();
    }
  } catch (const std::exception& e) {
    std::cerr << "trendbal: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
