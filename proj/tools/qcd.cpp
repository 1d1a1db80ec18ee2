#include <qcd/app.hpp>

int main(int argc, char** argv) {
  return qcd::run_app(std::vector<std::string>(argv + 1, argv + argc));
}
