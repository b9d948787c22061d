// Writes a deterministic synthetic digit corpus as an IDX image/label pair.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "routekit/digits.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic digit corpus generator (IDX output)"};
    std::string classes_arg = "0,1,2,3";
    std::size_t per_class = 2000;
    std::uint64_t seed = 1;
    std::string images_path, labels_path;
    app.add_option("--classes", classes_arg, "comma-separated digits to render")
        ->capture_default_str();
    app.add_option("--per-class", per_class, "images per class")->capture_default_str();
    app.add_option("--seed", seed, "generator seed")->capture_default_str();
    app.add_option("--images", images_path, "output IDX image file")->required();
    app.add_option("--labels", labels_path, "output IDX label file")->required();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        std::vector<int> classes;
        std::size_t start = 0;
        while (start <= classes_arg.size()) {
            const std::size_t comma = classes_arg.find(',', start);
            const std::string tok = classes_arg.substr(
                start, comma == std::string::npos ? std::string::npos : comma - start);
            if (!tok.empty()) classes.push_back(std::stoi(tok));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        const routekit::Dataset data = routekit::make_digit_dataset(classes, per_class, seed);
        routekit::save_idx(data, images_path, labels_path);
        std::cout << "wrote " << data.size() << " images to " << images_path << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
