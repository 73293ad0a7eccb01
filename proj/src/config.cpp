#include "fsbnet/config.hpp"

#include <json.hpp>

namespace fsbnet {

namespace {
using nlohmann::json;

json stft_to_json(const StftConfig& s) {
  return json{{"sample_rate", s.sample_rate},
              {"iws", s.iws},
              {"hs", s.hs},
              {"ows", s.ows},
              {"dft_size", s.dft_size}};
}

StftConfig stft_from_json(const json& j) {
  StftConfig s;
  s.sample_rate = j.at("sample_rate").get<int>();
  s.iws = j.at("iws").get<int>();
  s.hs = j.at("hs").get<int>();
  s.ows = j.at("ows").get<int>();
  s.dft_size = j.at("dft_size").get<int>();
  return s;
}
}  // namespace

std::string config_to_json(const ModelConfig& c) {
  json j{{"variant", c.variant == Variant::FSB ? "fsb" : "fb"},
         {"B", c.B},
         {"fb_layers", c.fb_layers},
         {"D", c.D},
         {"E", c.E},
         {"I", c.I},
         {"J", c.J},
         {"H", c.H},
         {"Ep", c.Ep},
         {"Ip", c.Ip},
         {"Jp", c.Jp},
         {"Hp", c.Hp},
         {"P", c.P},
         {"stft", stft_to_json(c.stft)}};
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: JSON parse failed: ") + e.what());
  }
  ModelConfig c;
  try {
    const std::string v = j.at("variant").get<std::string>();
    if (v == "fsb") c.variant = Variant::FSB;
    else if (v == "fb") c.variant = Variant::FB;
    else throw std::invalid_argument("config: variant must be \"fsb\" or \"fb\"");
    if (j.contains("B")) c.B = j.at("B").get<int>();
    if (j.contains("fb_layers")) c.fb_layers = j.at("fb_layers").get<int>();
    c.D = j.at("D").get<int>();
    c.E = j.at("E").get<int>();
    c.I = j.at("I").get<int>();
    c.J = j.at("J").get<int>();
    c.H = j.at("H").get<int>();
    c.Ep = j.at("Ep").get<int>();
    c.Ip = j.at("Ip").get<int>();
    c.Jp = j.at("Jp").get<int>();
    c.Hp = j.at("Hp").get<int>();
    c.P = j.at("P").get<int>();
    if (j.contains("stft")) c.stft = stft_from_json(j.at("stft"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: missing or bad field: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig preset_config(const std::string& name) {
  ModelConfig c;
  if (name == "fsb-6ch") {
    c.P = 6;
  } else if (name == "fsb-2ch") {
    c.P = 2;
  } else if (name == "fsb-1ch") {
    c.P = 1;
  } else if (name == "fb6-6ch") {
    c.variant = Variant::FB;
    c.fb_layers = 6;
    c.P = 6;
  } else if (name == "fb9-6ch") {
    c.variant = Variant::FB;
    c.fb_layers = 9;
    c.P = 6;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  c.validate();
  return c;
}

std::vector<std::string> preset_names() {
  return {"fsb-6ch", "fsb-2ch", "fsb-1ch", "fb6-6ch", "fb9-6ch"};
}

void set_hop_ms(ModelConfig& cfg, int hop_ms) {
  if (hop_ms < 1) throw std::invalid_argument("hop must be >= 1 ms");
  const long long hs = static_cast<long long>(cfg.stft.sample_rate) * hop_ms / 1000;
  if (hs * 1000 != static_cast<long long>(cfg.stft.sample_rate) * hop_ms)
    throw std::invalid_argument("hop in ms must map to an integer sample count");
  cfg.stft.hs = static_cast<int>(hs);
  cfg.stft.ows = 2 * cfg.stft.hs;
  cfg.stft.validate();
}

}  // namespace fsbnet
