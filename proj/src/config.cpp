#include "lenssim/config.hpp"

#include <set>
#include <sstream>

#include <toml.hpp>

#include "lenssim/error.hpp"

namespace lenssim {

namespace {

/// Reads typed keys from one table and remembers which keys were consumed,
/// so leftovers can be reported as unknown.
class Section {
 public:
  Section(const toml::table* table, std::string prefix, std::vector<std::string>& unknown)
      : table_(table), prefix_(std::move(prefix)), unknown_(unknown) {}

  ~Section() {
    if (!table_) return;
    for (const auto& [key, node] : *table_)
      if (!seen_.count(std::string(key.str()))) unknown_.push_back(prefix_ + std::string(key.str()));
  }

  Section sub(const std::string& name) {
    seen_.insert(name);
    const toml::table* t = nullptr;
    if (table_) {
      if (const auto* node = table_->get(name)) {
        t = node->as_table();
        require(t != nullptr, ErrorKind::config, prefix_ + name + ": expected a table");
      }
    }
    return Section(t, prefix_ + name + ".", unknown_);
  }

  void read(const std::string& key, double& out) {
    if (const auto* n = find(key)) {
      auto v = n->value<double>();
      require(v.has_value(), ErrorKind::config, prefix_ + key + ": expected a number");
      out = *v;
    }
  }

  void read(const std::string& key, int& out) {
    if (const auto* n = find(key)) {
      auto v = n->value_exact<std::int64_t>();
      require(v.has_value(), ErrorKind::config, prefix_ + key + ": expected an integer");
      require(*v >= std::numeric_limits<int>::min() && *v <= std::numeric_limits<int>::max(),
              ErrorKind::config, prefix_ + key + ": integer out of range");
      out = static_cast<int>(*v);
    }
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const auto* n = find(key)) {
      auto v = n->value_exact<std::int64_t>();
      require(v.has_value() && *v >= 0, ErrorKind::config, prefix_ + key + ": expected a nonnegative integer");
      out = static_cast<std::uint64_t>(*v);
    }
  }

  void read(const std::string& key, bool& out) {
    if (const auto* n = find(key)) {
      auto v = n->value_exact<bool>();
      require(v.has_value(), ErrorKind::config, prefix_ + key + ": expected a boolean");
      out = *v;
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const auto* n = find(key)) {
      auto v = n->value_exact<std::string>();
      require(v.has_value(), ErrorKind::config, prefix_ + key + ": expected a string");
      out = *v;
    }
  }

  void read(const std::string& key, std::vector<double>& out) {
    if (const auto* n = find(key)) {
      const auto* arr = n->as_array();
      require(arr != nullptr, ErrorKind::config, prefix_ + key + ": expected an array of numbers");
      out.clear();
      for (const auto& e : *arr) {
        auto v = e.value<double>();
        require(v.has_value(), ErrorKind::config, prefix_ + key + ": expected an array of numbers");
        out.push_back(*v);
      }
    }
  }

  void read(const std::string& key, std::vector<ZernikeTerm>& out) {
    if (const auto* n = find(key)) {
      const auto* arr = n->as_array();
      require(arr != nullptr, ErrorKind::config, prefix_ + key + ": expected [[noll, waves], ...]");
      out.clear();
      for (const auto& e : *arr) {
        const auto* pair = e.as_array();
        require(pair && pair->size() == 2, ErrorKind::config, prefix_ + key + ": expected [[noll, waves], ...]");
        auto j = (*pair)[0].value_exact<std::int64_t>();
        auto c = (*pair)[1].value<double>();
        require(j.has_value() && c.has_value(), ErrorKind::config, prefix_ + key + ": expected [[noll, waves], ...]");
        out.push_back({static_cast<int>(*j), *c});
      }
    }
  }

 private:
  const toml::node* find(const std::string& key) {
    seen_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }

  const toml::table* table_;
  std::string prefix_;
  std::vector<std::string>& unknown_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& field, const std::string& bound) {
  require(ok, ErrorKind::config, field + ": must be " + bound);
}

toml::array to_array(const std::vector<double>& v) {
  toml::array a;
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

void PipelineConfig::validate() const {
  const auto& o = optics;
  check(o.pupil.grid_size >= 32 && o.pupil.grid_size % 2 == 0, "optics.grid_size", "even and >= 32");
  check(o.pupil.aperture_diameter > 0, "optics.aperture_diameter", "> 0");
  check(o.pupil.focal_length > 0, "optics.focal_length", "> 0");
  check(o.pupil.obstruction_ratio >= 0 && o.pupil.obstruction_ratio < 1, "optics.obstruction_ratio", "in [0, 1)");
  check(o.pupil.pad_factor >= 1, "optics.pad_factor", ">= 1");
  check(o.rows >= 1, "optics.rows", ">= 1");
  check(o.cols >= 1, "optics.cols", ">= 1");
  check(!o.wavelengths_um.empty(), "optics.wavelengths_um", "nonempty");
  for (double l : o.wavelengths_um) check(l > 0, "optics.wavelengths_um", "> 0");
  check(o.spectral_weights.empty() || o.spectral_weights.size() == o.wavelengths_um.size(),
        "optics.spectral_weights", "empty or the same length as wavelengths_um");
  for (double w : o.spectral_weights) check(w >= 0, "optics.spectral_weights", ">= 0");
  check(o.detector_pitch > 0, "optics.detector_pitch", "> 0");
  check(o.psf_size >= 1 && o.psf_size % 2 == 1, "optics.psf_size", "odd and >= 1");
  check(o.reference_wavelength_um > 0, "optics.reference_wavelength_um", "> 0");
  for (const auto& t : o.zernike) check(t.noll >= 1, "optics.zernike", "Noll indices >= 1");

  const auto& d = degrade;
  check(d.patch_size >= 1, "patch_size", ">= 1");
  check(d.overlap >= 0 && d.overlap < d.patch_size, "overlap", "in [0, patch_size)");
  check(d.q >= 0, "q", ">= 0");
  check(d.q_full > 0, "q_full", "> 0");
  check(d.sigma >= 0, "sigma", ">= 0");

  check(blurmap.height >= 1, "blurmap.height", ">= 1");
  check(blurmap.width >= 1, "blurmap.width", ">= 1");

  check(gates.alpha_s >= 0, "alpha_s", ">= 0");
  check(gates.alpha_l >= 0, "alpha_l", ">= 0");
  check(gates.alpha_lambda >= 0, "alpha_lambda", ">= 0");
  check(gates.eta >= 0 && gates.eta < 1, "eta", "in [0, 1)");

  check(bridge.channels >= 1, "bridge.channels", ">= 1");
  check(bridge.groups >= 1 && bridge.channels % bridge.groups == 0, "bridge.groups", "a divisor of channels");
  check(bridge.se_ratio >= 1, "bridge.se_ratio", ">= 1");
  check(bridge.large_kernel >= 1 && bridge.large_kernel % 2 == 1, "bridge.large_kernel", "odd and >= 1");

  check(dataset.width >= 1 && dataset.width % d.patch_size == 0, "dataset.width", "a positive multiple of patch_size");
  check(dataset.height >= 1 && dataset.height % d.patch_size == 0, "dataset.height", "a positive multiple of patch_size");
}

PipelineConfig parse_config_string(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error: " << e.description() << " at line " << e.source().begin.line;
    fail(ErrorKind::config, msg.str());
  }

  PipelineConfig c;
  std::vector<std::string> unknown;
  {
    Section top(&root, "", unknown);
    {
      Section s = top.sub("optics");
      s.read("grid_size", c.optics.pupil.grid_size);
      s.read("aperture_diameter", c.optics.pupil.aperture_diameter);
      s.read("focal_length", c.optics.pupil.focal_length);
      s.read("obstruction_ratio", c.optics.pupil.obstruction_ratio);
      s.read("pad_factor", c.optics.pupil.pad_factor);
      s.read("rows", c.optics.rows);
      s.read("cols", c.optics.cols);
      s.read("wavelengths_um", c.optics.wavelengths_um);
      s.read("spectral_weights", c.optics.spectral_weights);
      s.read("detector_pitch", c.optics.detector_pitch);
      s.read("psf_size", c.optics.psf_size);
      s.read("reference_wavelength_um", c.optics.reference_wavelength_um);
      s.read("remove_piston_tilt", c.optics.remove_piston_tilt);
      s.read("zernike", c.optics.zernike);
      Section seidel = s.sub("seidel");
      seidel.read("spherical", c.optics.seidel.spherical);
      seidel.read("coma", c.optics.seidel.coma);
      seidel.read("astigmatism", c.optics.seidel.astigmatism);
      seidel.read("field_curvature", c.optics.seidel.field_curvature);
      seidel.read("distortion", c.optics.seidel.distortion);
    }
    {
      Section s = top.sub("degrade");
      s.read("patch_size", c.degrade.patch_size);
      s.read("overlap", c.degrade.overlap);
      s.read("q", c.degrade.q);
      s.read("q_full", c.degrade.q_full);
      std::string quant = "scaled";
      s.read("quantization", quant);
      require(quant == "scaled" || quant == "literal", ErrorKind::config,
              "degrade.quantization: must be \"scaled\" or \"literal\"");
      c.degrade.quantization = quant == "literal" ? DegradationConfig::Quantization::literal
                                                  : DegradationConfig::Quantization::scaled;
      s.read("sigma", c.degrade.sigma);
      s.read("seed", c.degrade.seed);
      std::string method = "fft";
      s.read("method", method);
      require(method == "fft" || method == "direct", ErrorKind::config,
              "degrade.method: must be \"fft\" or \"direct\"");
      c.degrade.method = method == "direct" ? DegradationConfig::Convolution::direct
                                            : DegradationConfig::Convolution::fft;
    }
    {
      Section s = top.sub("blurmap");
      s.read("height", c.blurmap.height);
      s.read("width", c.blurmap.width);
    }
    {
      Section s = top.sub("gates");
      s.read("theta_s", c.gates.theta_s);
      s.read("theta_l", c.gates.theta_l);
      s.read("theta_lambda", c.gates.theta_lambda);
      s.read("alpha_s", c.gates.alpha_s);
      s.read("alpha_l", c.gates.alpha_l);
      s.read("alpha_lambda", c.gates.alpha_lambda);
      s.read("eta", c.gates.eta);
    }
    {
      Section s = top.sub("bridge");
      s.read("weights", c.bridge.weights);
      s.read("channels", c.bridge.channels);
      s.read("groups", c.bridge.groups);
      s.read("se_ratio", c.bridge.se_ratio);
      s.read("large_kernel", c.bridge.large_kernel);
    }
    {
      Section s = top.sub("dataset");
      s.read("manifest", c.dataset.manifest);
      s.read("output_dir", c.dataset.output_dir);
      s.read("psf_grid", c.dataset.psf_grid);
      s.read("width", c.dataset.width);
      s.read("height", c.dataset.height);
      s.read("write_raw", c.dataset.write_raw);
    }
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    fail(ErrorKind::config, "unknown config keys: " + list);
  }
  c.validate();
  return c;
}

PipelineConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  PipelineConfig c = parse_config_string(ss.str());
  const auto base = path.parent_path();
  for (std::string* p : {&c.dataset.manifest, &c.dataset.output_dir, &c.dataset.psf_grid, &c.bridge.weights})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  return c;
}

std::string to_toml(const PipelineConfig& c) {
  toml::array zernike;
  for (const auto& t : c.optics.zernike) zernike.push_back(toml::array{t.noll, t.coefficient});

  toml::table root{
      {"optics",
       toml::table{
           {"grid_size", c.optics.pupil.grid_size},
           {"aperture_diameter", c.optics.pupil.aperture_diameter},
           {"focal_length", c.optics.pupil.focal_length},
           {"obstruction_ratio", c.optics.pupil.obstruction_ratio},
           {"pad_factor", c.optics.pupil.pad_factor},
           {"rows", c.optics.rows},
           {"cols", c.optics.cols},
           {"wavelengths_um", to_array(c.optics.wavelengths_um)},
           {"spectral_weights", to_array(c.optics.spectral_weights)},
           {"detector_pitch", c.optics.detector_pitch},
           {"psf_size", c.optics.psf_size},
           {"reference_wavelength_um", c.optics.reference_wavelength_um},
           {"remove_piston_tilt", c.optics.remove_piston_tilt},
           {"zernike", std::move(zernike)},
           {"seidel",
            toml::table{
                {"spherical", c.optics.seidel.spherical},
                {"coma", c.optics.seidel.coma},
                {"astigmatism", c.optics.seidel.astigmatism},
                {"field_curvature", c.optics.seidel.field_curvature},
                {"distortion", c.optics.seidel.distortion},
            }},
       }},
      {"degrade",
       toml::table{
           {"patch_size", c.degrade.patch_size},
           {"overlap", c.degrade.overlap},
           {"q", c.degrade.q},
           {"q_full", c.degrade.q_full},
           {"quantization",
            c.degrade.quantization == DegradationConfig::Quantization::literal ? "literal" : "scaled"},
           {"sigma", c.degrade.sigma},
           {"seed", static_cast<std::int64_t>(c.degrade.seed)},
           {"method", c.degrade.method == DegradationConfig::Convolution::direct ? "direct" : "fft"},
       }},
      {"blurmap", toml::table{{"height", c.blurmap.height}, {"width", c.blurmap.width}}},
      {"gates",
       toml::table{
           {"theta_s", c.gates.theta_s},
           {"theta_l", c.gates.theta_l},
           {"theta_lambda", c.gates.theta_lambda},
           {"alpha_s", c.gates.alpha_s},
           {"alpha_l", c.gates.alpha_l},
           {"alpha_lambda", c.gates.alpha_lambda},
           {"eta", c.gates.eta},
       }},
      {"bridge",
       toml::table{
           {"weights", c.bridge.weights},
           {"channels", c.bridge.channels},
           {"groups", c.bridge.groups},
           {"se_ratio", c.bridge.se_ratio},
           {"large_kernel", c.bridge.large_kernel},
       }},
      {"dataset",
       toml::table{
           {"manifest", c.dataset.manifest},
           {"output_dir", c.dataset.output_dir},
           {"psf_grid", c.dataset.psf_grid},
           {"width", c.dataset.width},
           {"height", c.dataset.height},
           {"write_raw", c.dataset.write_raw},
       }},
  };
  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

std::vector<WavefrontField> make_fields(const OpticsConfig& optics) {
  std::vector<WavefrontField> fields;
  for (const auto& [fx, fy] : field_grid_positions(optics.rows, optics.cols))
    fields.push_back(seidel_field(optics.pupil, optics.seidel, optics.zernike, fx, fy));
  return fields;
}

}  // namespace lenssim
