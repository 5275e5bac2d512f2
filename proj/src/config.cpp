/**
 * \file config.cpp
 * \brief Strict JSON (de)serialisation of RunConfig.
 */
#include "hero/config.hpp"

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "hero/error.hpp"

namespace hero {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    const json* v = find(key);
    if (!v) return;
    try {
      out = v->get<T>();
    } catch (const json::exception&) {
      throw ValidationError(field(key), "wrong type");
    }
  }

  void get_twist(const char* key, Twist& out) {
    std::vector<double> v;
    get(key, v);
    if (!find(key)) return;
    if (v.size() != 6) throw ValidationError(field(key), "expected 6 numbers");
    for (int i = 0; i < 6; ++i) out(i) = v[i];
  }

  void get_weight_model(const char* key, WeightModel& out) {
    std::string s;
    get(key, s);
    if (!find(key)) return;
    if (s == "ldl")
      out = WeightModel::kLdl;
    else if (s == "scalar")
      out = WeightModel::kScalar;
    else
      throw ValidationError(field(key), "expected \"ldl\" or \"scalar\"");
  }

  Section sub(const char* key) { return Section(find(key), field(key)); }

  void finish() const {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.count(it.key())) throw ValidationError(field(it.key().c_str()), "unknown key");
  }

 private:
  const json* find(const char* key) {
    if (!j_) return nullptr;
    seen_.insert(key);
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }
  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<double> twist_vec(const Twist& t) { return {t.data(), t.data() + 6}; }

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ValidationError(field, what);
}

}  // namespace

void RunConfig::validate() const {
  require(!model.encoder_channels.empty(), "model.encoder_channels", "must be non-empty");
  for (int c : model.encoder_channels) require(c > 0, "model.encoder_channels", "must be positive");
  require(model.in_channels == 1, "model.in_channels", "must be 1");
  require(model.cell_size > 0, "model.cell_size", "must be positive");
  require(model.temperature > 0.0, "model.temperature", "must be positive");
  require(model.bn_momentum > 0.0 && model.bn_momentum <= 1.0, "model.bn_momentum", "must be in (0, 1]");
  require(model.bn_eps > 0.0, "model.bn_eps", "must be positive");

  const FrontendConfig& f = pipeline.frontend;
  require(f.image_size > 0 && f.image_size % model.size_divisor() == 0 && f.image_size % model.cell_size == 0,
          "frontend.image_size", "must be a positive multiple of the cell size and 2^blocks");
  require(f.resolution > 0.0, "frontend.resolution", "must be positive");
  require(f.beta > 0.0, "frontend.beta", "must be positive");
  require(f.min_valid_ratio >= 0.0 && f.min_valid_ratio <= 1.0, "frontend.min_valid_ratio", "must be in [0, 1]");
  require(f.weight_c > 0.0, "frontend.weight_c", "must be positive");

  require((pipeline.prior.qc_diag.array() > 0.0).all(), "prior.qc_diag", "must be positive");
  require(pipeline.solver.max_iterations >= 1, "solver.max_iterations", "must be at least 1");
  require(pipeline.solver.tolerance > 0.0, "solver.tolerance", "must be positive");
  require(pipeline.solver.max_halvings >= 0, "solver.max_halvings", "must be non-negative");
  require(pipeline.solver.max_increases >= 1, "solver.max_increases", "must be at least 1");
  pipeline.train.validate();

  require(sim.landmarks >= 4, "sim.landmarks", "must be at least 4");
  require(sim.margin >= 0.0, "sim.margin", "must be non-negative");
  require(sim.frames >= 2, "sim.frames", "must be at least 2");
  require(sim.dt > 0.0, "sim.dt", "must be positive");
  require((sim.trajectory_qc.array() > 0.0).all(), "sim.trajectory_qc", "must be positive");
  require(sim.sensor.azimuths > 0 && sim.sensor.bins > 1, "sim.sensor", "needs azimuths > 0 and bins > 1");
  require(sim.sensor.range_resolution > 0.0, "sim.sensor.range_resolution", "must be positive");
  require(sim.sensor.speckle >= 0.0, "sim.sensor.speckle", "must be non-negative");
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  RunConfig c;
  Section root(&j, "");
  {
    Section s = root.sub("model");
    s.get("in_channels", c.model.in_channels);
    s.get("encoder_channels", c.model.encoder_channels);
    s.get("cell_size", c.model.cell_size);
    s.get("temperature", c.model.temperature);
    s.get("bn_momentum", c.model.bn_momentum);
    s.get("bn_eps", c.model.bn_eps);
    s.finish();
  }
  {
    FrontendConfig& f = c.pipeline.frontend;
    Section s = root.sub("frontend");
    s.get("image_size", f.image_size);
    s.get("resolution", f.resolution);
    s.get("beta", f.beta);
    s.get("min_valid_ratio", f.min_valid_ratio);
    s.get("weight_c", f.weight_c);
    s.get_weight_model("weight_model", f.weight_model);
    s.get("normalize_descriptors", f.normalize_descriptors);
    s.get("use_mask", f.use_mask);
    s.finish();
  }
  {
    Section s = root.sub("prior");
    s.get_twist("qc_diag", c.pipeline.prior.qc_diag);
    s.finish();
  }
  {
    SolverOptions& o = c.pipeline.solver;
    Section s = root.sub("solver");
    s.get("max_iterations", o.max_iterations);
    s.get("tolerance", o.tolerance);
    s.get("max_halvings", o.max_halvings);
    s.get("max_increases", o.max_increases);
    s.get("robust", o.robust);
    s.finish();
  }
  {
    TrainConfig& t = c.pipeline.train;
    Section s = root.sub("train");
    s.get("window_size", t.window_size);
    s.get("learning_rate", t.learning_rate);
    s.get("max_iterations", t.max_iterations);
    s.get("alpha", t.alpha);
    s.get("eta", t.eta);
    s.get("eta_filter", t.eta_filter);
    s.get("aug_max_angle", t.aug_max_angle);
    s.get("seed", t.seed);
    s.get("checkpoint_every", t.checkpoint_every);
    Section a = s.sub("ablation");
    a.get("scalar_weight", t.ablation.scalar_weight);
    a.get("no_mah_gate", t.ablation.no_mah_gate);
    a.get("no_masking", t.ablation.no_masking);
    a.get("no_augmentation", t.ablation.no_augmentation);
    a.finish();
    s.finish();
  }
  {
    SimConfig& m = c.sim;
    Section s = root.sub("sim");
    s.get("world_seed", m.world_seed);
    s.get("trajectory_seed", m.trajectory_seed);
    s.get("noise_seed", m.noise_seed);
    s.get("landmarks", m.landmarks);
    s.get("margin", m.margin);
    s.get("frames", m.frames);
    s.get("dt", m.dt);
    s.get("speed", m.speed);
    s.get("yaw_rate", m.yaw_rate);
    s.get_twist("trajectory_qc", m.trajectory_qc);
    Section r = s.sub("sensor");
    r.get("azimuths", m.sensor.azimuths);
    r.get("bins", m.sensor.bins);
    r.get("range_resolution", m.sensor.range_resolution);
    r.get("sigma_range_bins", m.sensor.sigma_range_bins);
    r.get("sigma_azimuth_steps", m.sensor.sigma_azimuth_steps);
    r.get("speckle", m.sensor.speckle);
    r.get("peak", m.sensor.peak);
    r.finish();
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_config(ss.str());
  if (const char* env = std::getenv("HERO_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (!*env || *end) throw ValidationError("HERO_SEED", "must be a non-negative integer");
    c.pipeline.train.seed = v;
  }
  return c;
}

std::string config_to_json(const RunConfig& c) {
  const auto& f = c.pipeline.frontend;
  const auto& o = c.pipeline.solver;
  const auto& t = c.pipeline.train;
  const auto& m = c.sim;
  nlohmann::ordered_json j;
  j["model"] = {{"in_channels", c.model.in_channels},     {"encoder_channels", c.model.encoder_channels},
                {"cell_size", c.model.cell_size},         {"temperature", c.model.temperature},
                {"bn_momentum", c.model.bn_momentum},     {"bn_eps", c.model.bn_eps}};
  j["frontend"] = {{"image_size", f.image_size},
                   {"resolution", f.resolution},
                   {"beta", f.beta},
                   {"min_valid_ratio", f.min_valid_ratio},
                   {"weight_c", f.weight_c},
                   {"weight_model", f.weight_model == WeightModel::kLdl ? "ldl" : "scalar"},
                   {"normalize_descriptors", f.normalize_descriptors},
                   {"use_mask", f.use_mask}};
  j["prior"] = {{"qc_diag", twist_vec(c.pipeline.prior.qc_diag)}};
  j["solver"] = {{"max_iterations", o.max_iterations},
                 {"tolerance", o.tolerance},
                 {"max_halvings", o.max_halvings},
                 {"max_increases", o.max_increases},
                 {"robust", o.robust}};
  j["train"] = {{"window_size", t.window_size},
                {"learning_rate", t.learning_rate},
                {"max_iterations", t.max_iterations},
                {"alpha", t.alpha},
                {"eta", t.eta},
                {"eta_filter", t.eta_filter},
                {"aug_max_angle", t.aug_max_angle},
                {"seed", t.seed},
                {"checkpoint_every", t.checkpoint_every},
                {"ablation",
                 {{"scalar_weight", t.ablation.scalar_weight},
                  {"no_mah_gate", t.ablation.no_mah_gate},
                  {"no_masking", t.ablation.no_masking},
                  {"no_augmentation", t.ablation.no_augmentation}}}};
  j["sim"] = {{"world_seed", m.world_seed},
              {"trajectory_seed", m.trajectory_seed},
              {"noise_seed", m.noise_seed},
              {"landmarks", m.landmarks},
              {"margin", m.margin},
              {"frames", m.frames},
              {"dt", m.dt},
              {"speed", m.speed},
              {"yaw_rate", m.yaw_rate},
              {"trajectory_qc", twist_vec(m.trajectory_qc)},
              {"sensor",
               {{"azimuths", m.sensor.azimuths},
                {"bins", m.sensor.bins},
                {"range_resolution", m.sensor.range_resolution},
                {"sigma_range_bins", m.sensor.sigma_range_bins},
                {"sigma_azimuth_steps", m.sensor.sigma_azimuth_steps},
                {"speckle", m.sensor.speckle},
                {"peak", m.sensor.peak}}}};
  return j.dump(2);
}

void write_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << config_to_json(cfg) << "\n";
}

}  // namespace hero
