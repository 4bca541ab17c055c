#pragma once

// Plain-text key=value run configuration. Unknown keys are rejected so typos
// surface early. '#' starts a comment.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "relight/attention.hpp"
#include "relight/errors.hpp"

namespace relight {

struct Config {
    int resolution = 64;      // training/sampling image side; divisible by 4
    int d = 32;               // denoiser base channel width
    int n_q = 4;              // light queries per direction
    double sigma = 5.0;       // spectral filter cutoff, frequency bins
    int T = 200;              // diffusion steps in the schedule
    int steps = 20;           // sampling steps
    double guidance = 2.0;    // classifier-free guidance scale
    double lr = 1e-3;         // Adam learning rate
    uint64_t seed = 0;
    MaskApply mask_mode = MaskApply::post_softmax;
    int heads = 1;            // attention heads per injection site
    bool composite = true;    // hard background compositing in image mode
};

inline Config parse_config_text(std::istream& in) {
    Config cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParameterError("config line " + std::to_string(line_no) + ": expected key=value");
        auto trim = [](std::string s) {
            auto a = s.find_first_not_of(" \t\r");
            auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        try {
            if (key == "resolution") cfg.resolution = std::stoi(value);
            else if (key == "d") cfg.d = std::stoi(value);
            else if (key == "n_q") cfg.n_q = std::stoi(value);
            else if (key == "sigma") cfg.sigma = std::stod(value);
            else if (key == "T") cfg.T = std::stoi(value);
            else if (key == "steps") cfg.steps = std::stoi(value);
            else if (key == "guidance") cfg.guidance = std::stod(value);
            else if (key == "lr") cfg.lr = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "heads") cfg.heads = std::stoi(value);
            else if (key == "composite") cfg.composite = std::stoi(value) != 0;
            else if (key == "mask_mode") {
                if (value == "post_softmax") cfg.mask_mode = MaskApply::post_softmax;
                else if (value == "logit_bias") cfg.mask_mode = MaskApply::logit_bias;
                else throw ParameterError("config: mask_mode must be post_softmax or logit_bias");
            } else throw ParameterError("config: unknown key '" + key + "'");
        } catch (const ParameterError&) {
            throw;
        } catch (const std::invalid_argument&) {
            throw ParameterError("config: bad value for key '" + key + "'");
        }
    }
    if (cfg.resolution < 4 || cfg.resolution % 4 != 0)
        throw ParameterError("config: resolution must be a positive multiple of 4");
    if (cfg.n_q < 1) throw ParameterError("config: n_q must be >= 1");
    if (!(cfg.sigma > 0)) throw ParameterError("config: sigma must be > 0");
    if (cfg.T < 2) throw ParameterError("config: T must be >= 2");
    return cfg;
}

inline Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_config: cannot open " + path);
    return parse_config_text(f);
}

} // namespace relight
