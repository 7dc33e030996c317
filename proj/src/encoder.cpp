#include "tome/encoder.hpp"

#include <map>

#include "json.hpp"
#include "tome/binio.hpp"

namespace tome {

using nlohmann::json;

void EncoderConfig::validate() const {
    require(vocab_size > 0, ErrorCode::invalid_input, "vocab_size must be positive");
    require(max_length > 0, ErrorCode::invalid_input, "max_length must be positive");
    require(hidden_dim > 0 && num_heads > 0 && ff_dim > 0, ErrorCode::invalid_input,
            "hidden_dim, num_heads and ff_dim must be positive");
    require(hidden_dim % num_heads == 0, ErrorCode::invalid_input,
            "hidden_dim must be divisible by num_heads");
    require(initial_layers >= 0, ErrorCode::invalid_input, "initial_layers must be non-negative");
    for (int b : block_layers)
        require(b >= 0, ErrorCode::invalid_input, "block layer counts must be non-negative");
    require(key_dim >= 1 && value_dim >= 1 && coref_dim >= 1, ErrorCode::invalid_input,
            "key_dim, value_dim and coref_dim must be at least 1");
}

std::string EncoderConfig::to_json() const {
    json j;  // std::map storage, so keys serialize sorted: the dump is canonical
    j["vocab_size"] = vocab_size;
    j["max_length"] = max_length;
    j["hidden_dim"] = hidden_dim;
    j["num_heads"] = num_heads;
    j["ff_dim"] = ff_dim;
    j["initial_layers"] = initial_layers;
    j["block_layers"] = block_layers;
    j["key_dim"] = key_dim;
    j["value_dim"] = value_dim;
    j["coref_dim"] = coref_dim;
    j["seed"] = seed;
    return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& text) {
    EncoderConfig cfg;
    try {
        json j = json::parse(text);
        cfg.vocab_size = j.at("vocab_size").get<int>();
        cfg.max_length = j.at("max_length").get<int>();
        cfg.hidden_dim = j.at("hidden_dim").get<int>();
        cfg.num_heads = j.at("num_heads").get<int>();
        cfg.ff_dim = j.at("ff_dim").get<int>();
        cfg.initial_layers = j.at("initial_layers").get<int>();
        cfg.block_layers = j.at("block_layers").get<std::vector<int>>();
        cfg.key_dim = j.at("key_dim").get<int>();
        cfg.value_dim = j.at("value_dim").get<int>();
        cfg.coref_dim = j.at("coref_dim").get<int>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        fail(ErrorCode::invalid_input, std::string("bad encoder config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::uint64_t EncoderConfig::digest() const {
    const std::string text = to_json();
    return fnv1a64(text.data(), text.size());
}

EncoderConfig EncoderConfig::toy(int vocab_size) {
    EncoderConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.max_length = 128;
    cfg.hidden_dim = 64;
    cfg.num_heads = 4;
    cfg.ff_dim = 256;
    cfg.initial_layers = 4;
    cfg.block_layers = {4};
    cfg.key_dim = 64;
    cfg.value_dim = 64;
    cfg.coref_dim = 64;
    return cfg;
}

EncoderConfig EncoderConfig::bert_base(int vocab_size) {
    EncoderConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.max_length = 256;
    cfg.hidden_dim = 768;
    cfg.num_heads = 12;
    cfg.ff_dim = 3072;
    cfg.initial_layers = 4;
    cfg.block_layers = {8};
    cfg.key_dim = 128;
    cfg.value_dim = 512;
    cfg.coref_dim = 512;
    return cfg;
}

namespace {
constexpr char kParamsMagic[9] = "TOMEPARM";
constexpr std::uint32_t kParamsVersion = 1;
}  // namespace

void save_params(const std::string& path, const EncoderConfig& cfg, const EncoderParams<float>& params) {
    cfg.validate();
    const std::string config_text = cfg.to_json();
    BinWriter w(path);
    w.magic(kParamsMagic);
    w.pod<std::uint32_t>(kParamsVersion);
    w.pod<std::uint64_t>(fnv1a64(config_text.data(), config_text.size()));
    w.str(config_text);
    std::uint32_t count = 0;
    visit_params(params, [&count](const std::string&, const Mat<float>&, bool) { ++count; });
    w.pod<std::uint32_t>(count);
    visit_params(params, [&w](const std::string& name, const Mat<float>& m, bool) {
        require(m.finite(), ErrorCode::non_finite, "tensor " + name + " has non-finite values");
        require(name.size() <= 0xffff, ErrorCode::internal, "tensor name too long");
        w.pod<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.pod<std::uint8_t>(2);  // rank
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.rows));
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.cols));
        w.array(m.a.data(), m.a.size());
    });
    w.close();
}

std::pair<EncoderConfig, EncoderParams<float>> load_params(const std::string& path) {
    BinReader r(path);
    r.magic(kParamsMagic);
    auto version = r.pod<std::uint32_t>();
    require(version == kParamsVersion, ErrorCode::bad_version,
            path + ": unsupported checkpoint version " + std::to_string(version));
    auto digest = r.pod<std::uint64_t>();
    const std::string config_text = r.str();
    require(digest == fnv1a64(config_text.data(), config_text.size()), ErrorCode::invalid_input,
            path + ": config digest mismatch");
    EncoderConfig cfg = EncoderConfig::from_json(config_text);

    EncoderParams<float> params = init_params<float>(cfg);
    std::map<std::string, Mat<float>*> slots;
    visit_params(params, [&slots](const std::string& name, Mat<float>& m, bool) { slots[name] = &m; });

    auto count = r.pod<std::uint32_t>();
    require(count == slots.size(), ErrorCode::dimension_mismatch,
            path + ": tensor count " + std::to_string(count) + " does not match config (" +
                std::to_string(slots.size()) + ")");
    std::map<std::string, bool> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name_len = r.pod<std::uint16_t>();
        std::string name(name_len, '\0');
        if (name_len) r.bytes(name.data(), name_len);
        auto rank = r.pod<std::uint8_t>();
        require(rank == 2, ErrorCode::invalid_input, path + ": tensor " + name + " has rank " +
                                                         std::to_string(int(rank)) + ", expected 2");
        auto rows = r.pod<std::uint32_t>();
        auto cols = r.pod<std::uint32_t>();
        auto it = slots.find(name);
        require(it != slots.end(), ErrorCode::invalid_input, path + ": unknown tensor " + name);
        require(!seen[name], ErrorCode::invalid_input, path + ": duplicate tensor " + name);
        seen[name] = true;
        Mat<float>& m = *it->second;
        require(static_cast<int>(rows) == m.rows && static_cast<int>(cols) == m.cols,
                ErrorCode::dimension_mismatch,
                path + ": tensor " + name + " has shape " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", expected " + std::to_string(m.rows) + "x" +
                    std::to_string(m.cols));
        r.array(m.a.data(), m.a.size());
        require(m.finite(), ErrorCode::non_finite, path + ": tensor " + name + " has non-finite values");
    }
    r.expect_eof();
    return {cfg, std::move(params)};
}

}  // namespace tome
