// Writes synthetic challenge-layout events for smoke runs.
#include "toy_events.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"synthetic challenge-format events", "make_toy_events"};
    std::size_t n = 2000;
    std::uint64_t seed = 1;
    std::string out;
    app.add_option("-n,--events", n, "event count");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--out", out, "CSV path")->required();
    CLI11_PARSE(app, argc, argv);
    std::ofstream file(out);
    if (!file) {
        std::cerr << "cannot write " << out << '\n';
        return 3;
    }
    defe::data::write_events(file, defe::toy::make_events(n, seed));
    return 0;
}
