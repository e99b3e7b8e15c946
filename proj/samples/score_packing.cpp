// Scores a serialized circle packing from a file (or a built-in demo
// packing) and prints the diagnostics an optimizer would see.

#include <fstream>
#include <iostream>
#include <sstream>

#include <textevo/textevo.hpp>

using namespace textevo;

int main(int argc, char** argv) {
    std::string text;
    if (argc > 1) {
        std::ifstream in(argv[1], std::ios::binary);
        if (!in) {
            std::cerr << "cannot read " << argv[1] << "\n";
            return 1;
        }
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    } else {
        text = "n=2\n0.25 0.25 0.25\n0.75 0.75 0.25\n";
    }

    std::size_t n = 0;  // accept whatever count the file declares
    try {
        auto [score, si] = domains::score_packing(text, n);
        std::cout << "score: " << score << "\n";
        for (const auto& [name, value] : si.entries()) {
            if (std::holds_alternative<ImageRef>(value)) {
                std::cout << name << ": [" << std::get<ImageRef>(value).data.size() << " byte png]\n";
            } else {
                std::cout << name << ": " << SideInfo::value_to_json(value).dump() << "\n";
            }
        }
    } catch (const EvaluatorFailure& e) {
        std::cerr << "invalid packing: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
