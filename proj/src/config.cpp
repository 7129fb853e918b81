#include "panostitch/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace panostitch::config {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw DomainError("config: key '" + key + "' expects a number, got '" + text + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += format_double(values[i]);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text,
                                                                  std::string_view origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw DomainError(std::string(origin) + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty())
      throw DomainError(std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

const std::vector<KeySpec>& Config::schema() {
  static const std::vector<KeySpec> keys = {
      {"rig.input_yaws", "0,120,240", "yaw angles (deg) of the input fisheye cameras"},
      {"rig.supervision_yaws", "60,180,300", "yaw angles (deg) of the supervision cameras"},
      {"rig.fov_deg", "185", "full field of view of every fisheye lens (deg)"},
      {"rig.fisheye_size", "256", "square fisheye sensor size (px); image circle fills it"},
      {"rig.erp_size", "256x128", "output panorama size WxH (W = 2H)"},
      {"color.reference_yaw", "180", "supervision camera used as the color reference"},
      {"color.patch_radius", "2", "half size of the correspondence patches (px)"},
      {"color.grid_stride", "4", "spacing of the correspondence grid (px)"},
      {"loss.alpha", "0.3", "weight of the local adjustment in U = G + alpha L"},
      {"loss.lambda", "0.4", "SSIM share of the objective: (1-l) Lp + l Lssim"},
      {"loss.training_levels", "3,4,5", "pyramid levels of the perceptual loss"},
      {"loss.metric_levels", "1,2,3,4,5", "pyramid levels of the perceptual distance"},
      {"loss.ssim.window", "11", "SSIM Gaussian window size (odd)"},
      {"loss.ssim.sigma", "1.5", "SSIM Gaussian sigma (px)"},
      {"loss.ssim.k1", "0.01", "SSIM luminance constant"},
      {"loss.ssim.k2", "0.03", "SSIM contrast constant"},
      {"optim.lr", "0.0004", "Adam learning rate"},
      {"optim.iters", "2000", "optimization iterations"},
      {"optim.beta1", "0.9", "Adam first-moment decay"},
      {"optim.beta2", "0.999", "Adam second-moment decay"},
      {"optim.epsilon", "1e-08", "Adam stabilizer"},
      {"optim.log_every", "100", "progress logging interval (iterations)"},
      {"optim.seed", "0", "seed for randomized steps"},
      {"optim.control_divisor", "8", "parameter maps live at 1/divisor resolution"},
      {"optim.freeze", "", "comma-separated groups kept at their initial value"},
      {"optim.scale.pre_color", format_double(optimizer::OptimConfig::default_group_scales().at(
                                    pipeline::ParamGroup::kPreColor)),
       "step multiplier for pre-color maps"},
      {"optim.scale.affine", format_double(optimizer::OptimConfig::default_group_scales().at(
                                 pipeline::ParamGroup::kAffine)),
       "step multiplier for affine matrices"},
      {"optim.scale.local", format_double(optimizer::OptimConfig::default_group_scales().at(
                                pipeline::ParamGroup::kLocalAdjust)),
       "step multiplier for local adjustment grids"},
      {"optim.scale.weights", format_double(optimizer::OptimConfig::default_group_scales().at(
                                  pipeline::ParamGroup::kWeightLogits)),
       "step multiplier for blend-weight logits"},
      {"optim.scale.post_color", format_double(optimizer::OptimConfig::default_group_scales().at(
                                     pipeline::ParamGroup::kPostColor)),
       "step multiplier for the post-color map"},
      {"io.write_wssf", "false", "also write float (WSSF1) copies of stitched panoramas"},
  };
  return keys;
}

Config::Config() {
  for (const auto& k : schema()) values_[k.key] = k.default_value;
}

Config Config::parse(std::string_view text, std::string_view origin) {
  Config c;
  for (const auto& [k, v] : parse_key_values(text, origin)) c.set(k, v);
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void Config::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw DomainError("config: unknown key '" + key + "'");
  it->second = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw DomainError("config: unknown key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const { return parse_double(key, get(key)); }

int Config::get_int(const std::string& key) const {
  const double v = get_double(key);
  if (v != static_cast<int>(v))
    throw DomainError("config: key '" + key + "' expects an integer");
  return static_cast<int>(v);
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DomainError("config: key '" + key + "' expects true or false");
}

std::vector<double> Config::get_list(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(parse_double(key, t));
  }
  return out;
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& k : schema()) out += k.key + " = " + values_.at(k.key) + "\n";
  return out;
}

std::string Config::describe() {
  std::string out;
  for (const auto& k : schema())
    out += "  " + k.key + " = " + k.default_value + "    # " + k.help + "\n";
  return out;
}

geometry::RigConfig Config::rig() const {
  geometry::RigConfig rig;
  rig.input_yaws_deg = get_list("rig.input_yaws");
  rig.supervision_yaws_deg = get_list("rig.supervision_yaws");
  const int size = get_int("rig.fisheye_size");
  rig.camera_template = geometry::FisheyeCamera::centered(size, get_double("rig.fov_deg"), 0.0);
  const std::string& erp = get("rig.erp_size");
  const auto x = erp.find('x');
  if (x == std::string::npos) throw DomainError("config: rig.erp_size expects WxH");
  rig.erp_width = static_cast<int>(parse_double("rig.erp_size", trim(erp.substr(0, x))));
  rig.erp_height = static_cast<int>(parse_double("rig.erp_size", trim(erp.substr(x + 1))));
  rig.validate();
  return rig;
}

void Config::set_rig(const geometry::RigConfig& rig) {
  set("rig.input_yaws", format_list(rig.input_yaws_deg));
  set("rig.supervision_yaws", format_list(rig.supervision_yaws_deg));
  set("rig.fov_deg", format_double(rig.camera_template.fov_deg));
  set("rig.fisheye_size", std::to_string(rig.camera_template.width));
  set("rig.erp_size", std::to_string(rig.erp_width) + "x" + std::to_string(rig.erp_height));
}

losses::LossConfig Config::loss() const {
  losses::LossConfig c;
  c.lambda = get_double("loss.lambda");
  auto levels = [&](const std::string& key) {
    std::set<int> s;
    for (double v : get_list(key)) s.insert(static_cast<int>(v));
    return s;
  };
  c.training_levels = levels("loss.training_levels");
  c.metric_levels = levels("loss.metric_levels");
  c.ssim_window = get_int("loss.ssim.window");
  c.ssim_sigma = get_double("loss.ssim.sigma");
  c.ssim_k1 = get_double("loss.ssim.k1");
  c.ssim_k2 = get_double("loss.ssim.k2");
  c.validate();
  return c;
}

optimizer::OptimConfig Config::optim() const {
  optimizer::OptimConfig c;
  c.learning_rate = get_double("optim.lr");
  c.iterations = get_int("optim.iters");
  c.beta1 = get_double("optim.beta1");
  c.beta2 = get_double("optim.beta2");
  c.epsilon = get_double("optim.epsilon");
  c.log_every = get_int("optim.log_every");
  c.seed = static_cast<std::uint64_t>(get_int("optim.seed"));
  std::stringstream ss(get("optim.freeze"));
  std::string item;
  while (std::getline(ss, item, ','))
    if (const std::string t = trim(item); !t.empty()) c.frozen.insert(pipeline::parse_group(t));
  for (pipeline::ParamGroup g : pipeline::kAllGroups)
    c.group_scale[g] = get_double("optim.scale." + std::string(pipeline::group_name(g)));
  c.validate();
  return c;
}

color::ConsistencyOptions Config::consistency() const {
  color::ConsistencyOptions o;
  o.reference_yaw_deg = get_double("color.reference_yaw");
  o.patch_radius = get_int("color.patch_radius");
  o.grid_stride = get_int("color.grid_stride");
  return o;
}

double Config::alpha() const { return get_double("loss.alpha"); }
int Config::control_divisor() const { return get_int("optim.control_divisor"); }

}  // namespace panostitch::config
