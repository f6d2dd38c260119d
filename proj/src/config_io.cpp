#include "deg/config_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "deg/io.hpp"

namespace deg {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const int i = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const std::uint64_t i = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

RawConfig parse_config_text(const std::string& text) {
    RawConfig raw;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: line " + std::to_string(line_no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            raw[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config: line " + std::to_string(line_no) + ": empty key");
        if (section.empty())
            throw std::invalid_argument("config: line " + std::to_string(line_no) + ": key outside any [section]");
        raw[section][key] = value;
    }
    return raw;
}

RawConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

FitConfig fit_config_from(const RawConfig& raw) {
    FitConfig cfg;
    for (const auto& [section, entries] : raw) {
        if (section == "model") {
            for (const auto& [key, v] : entries) {
                if (key == "levels") cfg.levels = to_int(key, v);
                else if (key == "expansion") cfg.expansion = to_int(key, v);
                else if (key == "fourier_bands") cfg.fourier_bands = to_int(key, v);
                else if (key == "hidden") cfg.hidden = to_int(key, v);
                else if (key == "offset_scale") cfg.offset_scale = to_double(key, v);
                else if (key == "log_scale_bias") cfg.log_scale_bias = to_double(key, v);
                else throw std::invalid_argument("config: unknown key '" + key + "' in [model]");
            }
        } else if (section == "train") {
            for (const auto& [key, v] : entries) {
                if (key == "lambda_struct") cfg.lambda_struct = to_double(key, v);
                else if (key == "lambda_render") cfg.lambda_render = to_double(key, v);
                else if (key == "lambda_reg") cfg.lambda_reg = to_double(key, v);
                else if (key == "lambda_ssim") cfg.lambda_ssim = to_double(key, v);
                else if (key == "lambda_lpips") cfg.lambda_lpips = to_double(key, v);
                else if (key == "lambda_kl") cfg.lambda_kl = to_double(key, v);
                else if (key == "lambda1") cfg.lambda1 = to_double(key, v);
                else if (key == "lambda2") cfg.lambda2 = to_double(key, v);
                else if (key == "lambda_offset") cfg.lambda_offset = to_double(key, v);
                else if (key == "gamma") cfg.gamma = to_double(key, v);
                else if (key == "anchors_min") cfg.anchors_min = to_int(key, v);
                else if (key == "anchors_max") cfg.anchors_max = to_int(key, v);
                else if (key == "anchors_stage2") cfg.anchors_stage2 = to_int(key, v);
                else if (key == "stage1_iters") cfg.stage1_iters = to_int(key, v);
                else if (key == "stage2_iters") cfg.stage2_iters = to_int(key, v);
                else if (key == "stage3_iters") cfg.stage3_iters = to_int(key, v);
                else if (key == "lr_decoder") cfg.lr_decoder = to_double(key, v);
                else if (key == "lr_logits") cfg.lr_logits = to_double(key, v);
                else if (key == "render_gradient") cfg.render_gradient_enabled = to_bool(key, v);
                else if (key == "normalize_rewards") cfg.normalize_rewards = to_bool(key, v);
                else if (key == "seed") cfg.seed = to_u64(key, v);
                else if (key == "image_size") cfg.image_size = to_int(key, v);
                else if (key == "camera_count") cfg.camera_count = to_int(key, v);
                else throw std::invalid_argument("config: unknown key '" + key + "' in [train]");
            }
        } else if (section == "render") {
            for (const auto& [key, v] : entries) {
                if (key == "alpha_cutoff") cfg.render.alpha_cutoff = to_double(key, v);
                else if (key == "transmittance_stop") cfg.render.transmittance_stop = to_double(key, v);
                else if (key == "early_stop") cfg.render.early_stop = to_bool(key, v);
                else if (key == "precision") {
                    if (v == "high") cfg.render.precision = Precision::kHigh;
                    else if (v == "low") cfg.render.precision = Precision::kLow;
                    else throw std::invalid_argument("config: key 'precision' expects high or low, got '" + v + "'");
                } else {
                    throw std::invalid_argument("config: unknown key '" + key + "' in [render]");
                }
            }
        } else {
            throw std::invalid_argument("config: unknown section '" + section + "'");
        }
    }
    cfg.validate();
    return cfg;
}

std::string fit_config_to_text(const FitConfig& cfg) {
    std::ostringstream out;
    out << "[model]\n";
    out << "levels = " << cfg.levels << "\n";
    out << "expansion = " << cfg.expansion << "\n";
    out << "fourier_bands = " << cfg.fourier_bands << "\n";
    out << "hidden = " << cfg.hidden << "\n";
    out << "offset_scale = " << format_double(cfg.offset_scale) << "\n";
    out << "log_scale_bias = " << format_double(cfg.log_scale_bias) << "\n";
    out << "[train]\n";
    out << "lambda_struct = " << format_double(cfg.lambda_struct) << "\n";
    out << "lambda_render = " << format_double(cfg.lambda_render) << "\n";
    out << "lambda_reg = " << format_double(cfg.lambda_reg) << "\n";
    out << "lambda_ssim = " << format_double(cfg.lambda_ssim) << "\n";
    out << "lambda_lpips = " << format_double(cfg.lambda_lpips) << "\n";
    out << "lambda_kl = " << format_double(cfg.lambda_kl) << "\n";
    out << "lambda1 = " << format_double(cfg.lambda1) << "\n";
    out << "lambda2 = " << format_double(cfg.lambda2) << "\n";
    out << "lambda_offset = " << format_double(cfg.lambda_offset) << "\n";
    out << "gamma = " << format_double(cfg.gamma) << "\n";
    out << "anchors_min = " << cfg.anchors_min << "\n";
    out << "anchors_max = " << cfg.anchors_max << "\n";
    out << "anchors_stage2 = " << cfg.anchors_stage2 << "\n";
    out << "stage1_iters = " << cfg.stage1_iters << "\n";
    out << "stage2_iters = " << cfg.stage2_iters << "\n";
    out << "stage3_iters = " << cfg.stage3_iters << "\n";
    out << "lr_decoder = " << format_double(cfg.lr_decoder) << "\n";
    out << "lr_logits = " << format_double(cfg.lr_logits) << "\n";
    out << "render_gradient = " << (cfg.render_gradient_enabled ? "true" : "false") << "\n";
    out << "normalize_rewards = " << (cfg.normalize_rewards ? "true" : "false") << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "image_size = " << cfg.image_size << "\n";
    out << "camera_count = " << cfg.camera_count << "\n";
    out << "[render]\n";
    out << "alpha_cutoff = " << format_double(cfg.render.alpha_cutoff) << "\n";
    out << "transmittance_stop = " << format_double(cfg.render.transmittance_stop) << "\n";
    out << "early_stop = " << (cfg.render.early_stop ? "true" : "false") << "\n";
    out << "precision = " << (cfg.render.precision == Precision::kHigh ? "high" : "low") << "\n";
    return out.str();
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    nlohmann::json j;
    j["command"] = manifest.command;
    j["version"] = manifest.version;
    j["seed"] = manifest.seed;
    j["config"] = manifest.config_text;
    j["input_hashes"] = manifest.input_hashes;
    j["outputs"] = manifest.outputs;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
    out << j.dump(2) << "\n";
}

}  // namespace deg
