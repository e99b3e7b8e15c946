// Minimal evaluator speaking the line-delimited protocol, used by the
// subprocess tests and the CLI integration tests. The first argument picks a
// behavior:
//   const <score>       reply with a fixed score
//   prefix              prefix-match score against example payload {"target"}
//   debug <score>       print a debug line before the reply
//   crash               exit 1 without replying
//   noreply             print a non-protocol line and exit 0
//   hang <ms>           sleep without replying
//   stderrout <score>   write to stderr, then reply

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

#include <json.hpp>

using json = nlohmann::json;

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: proto_eval_helper <mode> [args]\n";
        return 2;
    }
    const std::string mode = argv[1];

    std::string line;
    if (!std::getline(std::cin, line)) {
        std::cerr << "no request on stdin\n";
        return 2;
    }
    const json request = json::parse(line, nullptr, false);
    if (request.is_discarded()) {
        std::cerr << "request is not JSON\n";
        return 2;
    }

    if (mode == "crash") return 1;
    if (mode == "noreply") {
        std::cout << "hello\n";
        return 0;
    }
    if (mode == "hang") {
        const int ms = argc > 2 ? std::stoi(argv[2]) : 10000;
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
        return 0;
    }

    json reply;
    if (mode == "const") {
        reply["score"] = argc > 2 ? std::stod(argv[2]) : 1.0;
        reply["side_info"] = {{"note", "const"}};
    } else if (mode == "debug") {
        std::cout << "debug\n";
        reply["score"] = argc > 2 ? std::stod(argv[2]) : 1.0;
    } else if (mode == "stderrout") {
        std::cerr << "warn\n";
        reply["score"] = argc > 2 ? std::stod(argv[2]) : 1.0;
    } else if (mode == "prefix") {
        const std::string candidate = request.at("candidate_text").get<std::string>();
        const json example = request.at("example");
        if (example.is_null()) {
            std::cerr << "prefix mode needs an example\n";
            return 1;
        }
        const std::string target = example.at("payload").at("target").get<std::string>();
        std::size_t match = 0;
        while (match < candidate.size() && match < target.size() && candidate[match] == target[match])
            ++match;
        const bool exact = candidate == target;
        reply["score"] = static_cast<double>(match) / static_cast<double>(target.size());
        json si;
        si["first_mismatch"] = exact ? -1.0 : static_cast<double>(match);
        si["expected"] = (!exact && match < target.size()) ? std::string(1, target[match]) : std::string();
        si["match_len"] = static_cast<double>(match);
        reply["side_info"] = si;
    } else {
        std::cerr << "unknown mode '" << mode << "'\n";
        return 2;
    }

    std::cout << reply.dump() << "\n";
    return 0;
}
