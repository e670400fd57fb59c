#include "clrkit/config.hpp"

#include <map>
#include <sstream>

namespace clrkit {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// section.key -> value
std::map<std::string, std::string> parse_ini(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line, section;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("bad section header: " + line);
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value: " + line);
        kv[section + "." + trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Reader {
    const std::map<std::string, std::string>& kv;
    template <typename T, typename Fn>
    void get(const std::string& key, T& field, Fn&& convert) const {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        try {
            field = convert(it->second);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("cannot parse " + key + " = '" + it->second + "': " + e.what());
        }
    }
    void num(const std::string& key, double& f) const {
        get(key, f, [](const std::string& v) { return std::stod(v); });
    }
    void num(const std::string& key, std::int64_t& f) const {
        get(key, f, [](const std::string& v) { return std::stoll(v); });
    }
    void num(const std::string& key, std::uint64_t& f) const {
        get(key, f, [](const std::string& v) { return std::stoull(v); });
    }
    void num(const std::string& key, int& f) const {
        get(key, f, [](const std::string& v) { return std::stoi(v); });
    }
    void str(const std::string& key, std::string& f) const {
        get(key, f, [](const std::string& v) { return v; });
    }
    void boolean(const std::string& key, bool& f) const {
        get(key, f, [&](const std::string& v) { return parse_bool(v, key); });
    }
};

}  // namespace

RunConfig RunConfig::from_text(const std::string& ini) {
    RunConfig c;
    const auto kv = parse_ini(ini);
    Reader r{kv};

    r.num("run.resolution", c.resolution);
    r.num("run.seed", c.seed);
    r.str("run.output_dir", c.output_dir);

    r.num("model.levels", c.levels);
    r.num("model.couplings_per_level", c.couplings_per_level);
    r.num("model.base_channels", c.base_channels);
    r.num("model.clamp", c.clamp);
    r.boolean("model.spectral_norm", c.spectral_norm);

    r.num("loss.alpha", c.weights.alpha);
    r.num("loss.beta", c.weights.beta);
    r.num("loss.gamma", c.weights.gamma);
    r.num("loss.epsilon", c.weights.epsilon);
    r.num("loss.eta", c.weights.eta);
    r.boolean("loss.corner_loss", c.corner_loss);

    if (auto it = kv.find("attacks.roster"); it != kv.end()) {
        c.roster.clear();
        for (const auto& item : split(it->second, ','))
            try {
                c.roster.push_back(AttackSpec::parse(item));
            } catch (const std::exception& e) {
                throw ConfigError("bad attack spec '" + item + "': " + e.what());
            }
    }
    r.num("attacks.crop_rate_min", c.crop_rate_min);
    r.num("attacks.crop_rate_max", c.crop_rate_max);
    r.num("attacks.aspect_min", c.aspect_min);
    r.num("attacks.aspect_max", c.aspect_max);
    r.boolean("attacks.quantize", c.quantize);

    r.num("augment.r_aug", c.r_aug);
    r.num("augment.max_strokes", c.max_strokes);

    r.num("train.batch_size", c.batch_size);
    r.num("train.total_steps", c.total_steps);
    r.num("train.lr", c.lr);
    r.num("train.warmup_cap_fraction", c.warmup_cap_fraction);
    r.num("train.threshold", c.stage_threshold);
    r.num("train.ema_decay", c.ema_decay);
    r.num("train.false_alarm_every", c.false_alarm_every);
    r.num("train.checkpoint_every", c.checkpoint_every);

    r.num("fgjpeg.predictor_steps", c.fgjpeg_predictor_steps);
    r.num("fgjpeg.generator_steps", c.fgjpeg_generator_steps);
    r.num("fgjpeg.batch", c.fgjpeg_batch);
    r.num("fgjpeg.lr_predictor", c.fgjpeg_lr_predictor);
    r.num("fgjpeg.lr_generator", c.fgjpeg_lr_generator);
    r.num("fgjpeg.awgn_sigma", c.fgjpeg_awgn_sigma);
    r.num("fgjpeg.awgn_prob", c.fgjpeg_awgn_prob);

    if (auto it = kv.find("eval.buckets"); it != kv.end()) {
        c.eval_buckets.clear();
        for (const auto& item : split(it->second, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ConfigError("bad bucket (want lo:hi): " + item);
            c.eval_buckets.emplace_back(std::stod(item.substr(0, colon)),
                                        std::stod(item.substr(colon + 1)));
        }
    }
    r.str("eval.save_format", c.save_format);
    r.num("eval.max_images", c.eval_max_images);

    r.str("data.train_dir", c.train_dir);
    r.str("data.val_dir", c.val_dir);

    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    try {
        return from_text(read_file(path));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
}

std::string RunConfig::to_text() const {
    std::ostringstream o;
    o.precision(12);
    o << "[run]\n";
    o << "resolution = " << resolution << "\n";
    o << "seed = " << seed << "\n";
    o << "output_dir = " << output_dir << "\n";
    o << "\n[model]\n";
    o << "levels = " << levels << "\n";
    o << "couplings_per_level = " << couplings_per_level << "\n";
    o << "base_channels = " << base_channels << "\n";
    o << "clamp = " << clamp << "\n";
    o << "spectral_norm = " << (spectral_norm ? "true" : "false") << "\n";
    o << "\n[loss]\n";
    o << "alpha = " << weights.alpha << "\n";
    o << "beta = " << weights.beta << "\n";
    o << "gamma = " << weights.gamma << "\n";
    o << "epsilon = " << weights.epsilon << "\n";
    o << "eta = " << weights.eta << "\n";
    o << "corner_loss = " << (corner_loss ? "true" : "false") << "\n";
    o << "\n[attacks]\n";
    o << "roster = ";
    for (std::size_t i = 0; i < roster.size(); ++i) o << (i ? "," : "") << roster[i].to_string();
    o << "\n";
    o << "crop_rate_min = " << crop_rate_min << "\n";
    o << "crop_rate_max = " << crop_rate_max << "\n";
    o << "aspect_min = " << aspect_min << "\n";
    o << "aspect_max = " << aspect_max << "\n";
    o << "quantize = " << (quantize ? "true" : "false") << "\n";
    o << "\n[augment]\n";
    o << "r_aug = " << r_aug << "\n";
    o << "max_strokes = " << max_strokes << "\n";
    o << "\n[train]\n";
    o << "batch_size = " << batch_size << "\n";
    o << "total_steps = " << total_steps << "\n";
    o << "lr = " << lr << "\n";
    o << "warmup_cap_fraction = " << warmup_cap_fraction << "\n";
    o << "threshold = " << stage_threshold << "\n";
    o << "ema_decay = " << ema_decay << "\n";
    o << "false_alarm_every = " << false_alarm_every << "\n";
    o << "checkpoint_every = " << checkpoint_every << "\n";
    o << "\n[fgjpeg]\n";
    o << "predictor_steps = " << fgjpeg_predictor_steps << "\n";
    o << "generator_steps = " << fgjpeg_generator_steps << "\n";
    o << "batch = " << fgjpeg_batch << "\n";
    o << "lr_predictor = " << fgjpeg_lr_predictor << "\n";
    o << "lr_generator = " << fgjpeg_lr_generator << "\n";
    o << "awgn_sigma = " << fgjpeg_awgn_sigma << "\n";
    o << "awgn_prob = " << fgjpeg_awgn_prob << "\n";
    o << "\n[eval]\n";
    o << "buckets = ";
    for (std::size_t i = 0; i < eval_buckets.size(); ++i)
        o << (i ? "," : "") << eval_buckets[i].first << ":" << eval_buckets[i].second;
    o << "\n";
    o << "save_format = " << save_format << "\n";
    o << "max_images = " << eval_max_images << "\n";
    o << "\n[data]\n";
    o << "train_dir = " << train_dir << "\n";
    o << "val_dir = " << val_dir << "\n";
    return o.str();
}

void RunConfig::validate() const {
    const bool res_ok = resolution == 64 || resolution == 128 || resolution == 256 ||
                        resolution == 512;
    if (!res_ok) throw ConfigError("resolution must be one of 64/128/256/512");
    if (levels < 1 || resolution % (std::int64_t{1} << levels) != 0)
        throw ConfigError("resolution must be divisible by 2^levels");
    if (roster.empty()) throw ConfigError("attack roster must be non-empty");
    if (crop_rate_min < 0.4 || crop_rate_max > 1.0 || crop_rate_min > crop_rate_max)
        throw ConfigError("crop rate range must lie in [0.4,1]");
    if (r_aug < 0.0 || r_aug > 1.0) throw ConfigError("r_aug must be in [0,1]");
    if (batch_size < 1 || total_steps < 1) throw ConfigError("batch_size/total_steps must be >= 1");
    if (warmup_cap_fraction <= 0.0 || warmup_cap_fraction > 1.0)
        throw ConfigError("warmup_cap_fraction must be in (0,1]");
    if (save_format != "png" && save_format != "bmp" && save_format != "jpeg" &&
        save_format != "jpg")
        throw ConfigError("save_format must be png, bmp or jpeg");
    if (eval_buckets.empty()) throw ConfigError("eval buckets must be non-empty");
    for (const auto& [lo, hi] : eval_buckets)
        if (lo < 0.4 || hi > 1.0 || lo >= hi) throw ConfigError("bad eval bucket range");
}

}  // namespace clrkit
