#include "rsbm/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

#include "rsbm/errors.hpp"

namespace rsbm {

namespace {

std::string exact(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("checkpoint: bad number '" + s + "'");
  }
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("checkpoint: bad integer '" + s + "'");
  }
  return v;
}

struct Container {
  std::map<std::string, std::vector<std::string>> fields;
  std::vector<double> params;

  const std::vector<std::string>& get(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end() || it->second.empty()) {
      throw FormatError("checkpoint: missing field '" + key + "'");
    }
    return it->second;
  }
  const std::string& one(const std::string& key) const { return get(key).front(); }
};

Container read_container(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw FormatError("checkpoint: missing RSBM1 header");
  }
  Container c;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key.empty()) continue;
    if (key == "params") {
      std::string count;
      ss >> count;
      const int n = parse_int(count);
      c.params.reserve(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw FormatError("checkpoint: truncated parameter block");
        c.params.push_back(parse_double(line));
      }
      if (!std::getline(in, line) || line != "end") throw FormatError("checkpoint: missing end marker");
      return c;
    }
    std::string value;
    while (ss >> value) c.fields[key].push_back(value);
  }
  throw FormatError("checkpoint: missing parameter block");
}

void write_params(std::ostream& out, std::span<const double> params) {
  out << "params " << params.size() << '\n';
  for (double v : params) out << exact(v) << '\n';
  out << "end\n";
}

void write_bridge(std::ostream& out, const BridgeConfig& cfg) {
  out << "sigma_max " << exact(cfg.sigma_max) << '\n';
  out << "sigma_min " << exact(cfg.sigma_min) << '\n';
  out << "epsilon " << exact(cfg.epsilon) << '\n';
}

BridgeConfig read_bridge(const Container& c) {
  BridgeConfig cfg;
  cfg.sigma_max = parse_double(c.one("sigma_max"));
  cfg.sigma_min = parse_double(c.one("sigma_min"));
  cfg.epsilon = parse_double(c.one("epsilon"));
  cfg.validate();
  return cfg;
}

template <class F>
void with_file(const std::string& path, std::ios::openmode mode, F&& fn) {
  std::fstream f(path, mode);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  fn(f);
  if ((mode & std::ios::out) && !f) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace

void save_velocity_model(std::ostream& out, const VelocityModel& model) {
  const VelocityArch& arch = model.arch();
  out << kCheckpointMagic << '\n';
  out << "kind velocity\n";
  out << "horizon " << arch.horizon << '\n';
  out << "context_dim " << arch.context_dim << '\n';
  out << "hidden";
  for (int w : arch.hidden) out << ' ' << w;
  out << '\n';
  out << "time_embed_dim " << arch.time_embed_dim << '\n';
  out << "target " << to_string(model.target()) << '\n';
  write_bridge(out, model.bridge());
  write_params(out, model.params());
}

VelocityModel load_velocity_model(std::istream& in) {
  const Container c = read_container(in);
  if (c.one("kind") != "velocity") throw FormatError("checkpoint: not a velocity model");
  VelocityArch arch;
  arch.horizon = parse_int(c.one("horizon"));
  arch.context_dim = parse_int(c.one("context_dim"));
  arch.hidden.clear();
  for (const auto& w : c.get("hidden")) arch.hidden.push_back(parse_int(w));
  arch.time_embed_dim = parse_int(c.one("time_embed_dim"));
  VelocityModel model(arch, parse_target_kind(c.one("target")), read_bridge(c));
  if (c.params.size() != model.num_params()) {
    throw FormatError("checkpoint: parameter count does not match architecture");
  }
  std::copy(c.params.begin(), c.params.end(), model.params().begin());
  return model;
}

void save_prior(std::ostream& out, const Prior& prior) {
  const PriorKind& kind = prior.kind();
  out << kCheckpointMagic << '\n';
  out << "kind prior\n";
  out << "variant " << to_string(kind.variant) << '\n';
  out << "gaussian_scale " << exact(kind.gaussian_scale) << '\n';
  out << "perturbation_scale " << exact(kind.perturbation_scale) << '\n';
  if (const auto& learned = prior.learned()) {
    out << "horizon " << learned->horizon() << '\n';
    out << "context_dim " << learned->context_dim() << '\n';
    out << "hidden " << learned->hidden() << '\n';
    out << "latent " << learned->latent_dim() << '\n';
    write_params(out, learned->params());
  } else {
    write_params(out, {});
  }
}

Prior load_prior(std::istream& in) {
  const Container c = read_container(in);
  if (c.one("kind") != "prior") throw FormatError("checkpoint: not a prior");
  PriorKind kind;
  kind.variant = parse_prior_variant(c.one("variant"));
  kind.gaussian_scale = parse_double(c.one("gaussian_scale"));
  kind.perturbation_scale = parse_double(c.one("perturbation_scale"));
  if (kind.variant != PriorVariant::learned) return Prior(kind);

  LearnedPrior learned(parse_int(c.one("horizon")), parse_int(c.one("context_dim")),
                       parse_int(c.one("hidden")), parse_int(c.one("latent")));
  if (c.params.size() != learned.params().size()) {
    throw FormatError("checkpoint: prior parameter count does not match architecture");
  }
  std::copy(c.params.begin(), c.params.end(), learned.params().begin());
  return Prior(kind, std::move(learned));
}

void save_velocity_model(const std::string& path, const VelocityModel& model) {
  with_file(path, std::ios::out | std::ios::trunc, [&](std::ostream& f) { save_velocity_model(f, model); });
}

VelocityModel load_velocity_model(const std::string& path) {
  VelocityModel model;
  with_file(path, std::ios::in, [&](std::istream& f) { model = load_velocity_model(f); });
  return model;
}

void save_prior(const std::string& path, const Prior& prior) {
  with_file(path, std::ios::out | std::ios::trunc, [&](std::ostream& f) { save_prior(f, prior); });
}

Prior load_prior(const std::string& path) {
  Prior prior;
  with_file(path, std::ios::in, [&](std::istream& f) { prior = load_prior(f); });
  return prior;
}

}  // namespace rsbm
