// coded-event: PSF stacks, mask optimization, CRB curves, tracking and
// ablation sweeps from the command line.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "codedevent/baselines.hpp"
#include "codedevent/grid_io.hpp"
#include "codedevent/objective.hpp"
#include "codedevent/optimize.hpp"
#include "codedevent/param.hpp"
#include "codedevent/tracking.hpp"
#include "codedevent/zernike.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace codedevent;

namespace {

constexpr const char* kVersion = "0.1.0";

/// Options that can also come from the --config JSON document. Explicit
/// flags win over file values; the resolved set is echoed to config.json.
class Settings {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& section, const std::string& key, T& var,
                   const std::string& help) {
    CLI::Option* opt = app->add_option("--" + key, var, help)->capture_default_str();
    entries_.push_back({section, key, opt, [&var](const json& j) { var = j.get<T>(); }, [&var] { return json(var); }});
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& section, const std::string& key, bool& var,
                    const std::string& help) {
    CLI::Option* opt = app->add_flag("--" + key, var, help);
    entries_.push_back({section, key, opt, [&var](const json& j) { var = j.get<bool>(); }, [&var] { return json(var); }});
    return opt;
  }

  void apply_file(const json& file, const std::string& command) {
    for (auto& e : entries_) {
      if (e.opt->count() > 0) continue;
      const json* scope = e.section.empty() ? &file : (file.contains(e.section) ? &file[e.section] : nullptr);
      if (e.section == command || e.section.empty()) {
        if (scope != nullptr && scope->is_object() && scope->contains(e.key)) {
          try {
            e.load((*scope)[e.key]);
          } catch (const json::exception& ex) {
            throw ConfigError("config file: bad value for '" + e.key + "': " + ex.what());
          }
        }
      }
    }
  }

  json resolved(const std::string& command) const {
    json out;
    out["command"] = command;
    out["version"] = kVersion;
    for (const auto& e : entries_)
      if (e.section.empty()) out[e.key] = e.dump();
    json sub = json::object();
    for (const auto& e : entries_)
      if (e.section == command) sub[e.key] = e.dump();
    out[command] = sub;
    return out;
  }

 private:
  struct Entry {
    std::string section;
    std::string key;
    CLI::Option* opt;
    std::function<void(const json&)> load;
    std::function<json()> dump;
  };
  std::vector<Entry> entries_;
};

struct Global {
  std::uint64_t seed = 0;
  int workers = 1;
  bool deterministic = false;
  std::string out = "run";
  OpticalConfig optics;
};

std::vector<double> parse_values(const std::string& spec) {
  std::vector<double> v;
  if (spec.find(':') != std::string::npos) {
    double lo = 0, hi = 0;
    int n = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(spec);
    if (!(is >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1)
      throw ConfigError("range '" + spec + "' must look like lo:hi:count");
    return linspace(lo, hi, n);
  }
  std::istringstream is(spec);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse number '" + tok + "'");
    }
  }
  if (v.empty()) throw ConfigError("empty value list");
  return v;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

std::string mask_label(const std::string& name) {
  if (name == "open" || name == "fisher" || name == "levin") return name;
  return fs::path(name).stem().string();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_config(const fs::path& dir, const json& cfg) {
  fs::create_directories(dir);
  std::ofstream os(dir / "config.json");
  os << cfg.dump(2) << '\n';
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os.precision(10);
  return os;
}

// ---------------------------------------------------------------- psf

struct PsfArgs {
  std::string mask = "open";
  std::string z = "-1.5e-6:1.5e-6:7";
  double x = 0.0;
  double y = 0.0;
  double blur = 0.0;
};

void cmd_psf(const Global& g, const PsfArgs& a) {
  const PsfModel model(g.optics);
  const Mask mask = load_mask(a.mask, model.pupil());
  const auto depths = parse_values(a.z);
  const Field pupil = pupil_field(mask, model.pupil());
  const EmitterBlur blur(g.optics, a.blur);
  const fs::path dir(g.out);
  auto csv = open_csv(dir / "psf_summary.csv");
  csv << "index,z_m,total_photons,peak_photons,file\n";
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const Image h = blur.apply(model.evaluate(pupil, Eigen::Vector3d(a.x, a.y, depths[i]), false).h);
    char name[64];
    std::snprintf(name, sizeof name, "psf_%03zu.ceo1", i);
    write_ceo1(dir / name, h);
    write_metadata(dir / name, {{"z_m", fmt(depths[i])}, {"x_m", fmt(a.x)}, {"y_m", fmt(a.y)},
                                {"mask", a.mask}, {"units", "photons"}});
    csv << i << ',' << depths[i] << ',' << h.sum() << ',' << h.maxCoeff() << ',' << name << '\n';
  }
  std::cout << "wrote " << depths.size() << " PSF images to " << dir << '\n';
}

// ---------------------------------------------------------------- optimize

struct OptArgs {
  std::string parameterization = "neural";
  std::string kind = "phase";
  int n_coeffs = 55;
  int epochs = 500;
  double lr = 1e-3;
  double beta1 = 0.99;
  double beta2 = 0.999;
  int planes = 11;
  double depth_range = 1.5e-6;
  double speed_mean = 100e-9;
  double speed_sd = 20e-9;
  double fixed_speed = 0.0;
  int val_motions = 100;
  int val_every = 10;
  std::string model = "event";
};

InformationModel parse_model(const std::string& s) {
  if (s == "event") return InformationModel::Event;
  if (s == "flashing") return InformationModel::Flashing;
  throw ConfigError("unknown information model '" + s + "' (event, flashing)");
}

void cmd_optimize(const Global& g, const OptArgs& a) {
  OptimizeConfig cfg;
  cfg.epochs = a.epochs;
  cfg.lr = a.lr;
  cfg.beta1 = a.beta1;
  cfg.beta2 = a.beta2;
  cfg.depth_planes = a.planes;
  cfg.depth_range = a.depth_range;
  cfg.speed_mean = a.speed_mean;
  cfg.speed_sd = a.speed_sd;
  cfg.fixed_speed = a.fixed_speed;
  cfg.validation_motions = a.val_motions;
  cfg.val_every = a.val_every;
  cfg.parameterization = parse_param_kind(a.parameterization);
  cfg.mask_kind = parse_mask_kind(a.kind);
  cfg.zernike_terms = a.n_coeffs;
  cfg.model = parse_model(a.model);
  cfg.seed = g.seed;
  cfg.workers = g.workers;
  cfg.validate();

  const PsfModel model(g.optics);
  const fs::path dir(g.out);
  auto loss = open_csv(dir / "loss.csv");
  loss << "epoch,train_loss,val_loss\n";
  const auto res = optimize_mask(model, cfg, [&](const LossRecord& r) {
    // Losses are reported in nanometres.
    loss << r.epoch << ',' << r.train_loss * 1e9 << ',';
    if (std::isfinite(r.val_loss)) loss << r.val_loss * 1e9;
    loss << '\n';
    if (std::isfinite(r.val_loss))
      std::cerr << "epoch " << r.epoch << " train " << r.train_loss * 1e9 << " nm val " << r.val_loss * 1e9 << " nm\n";
  });
  const Mask mask = render_mask(*res.best);
  write_mask(dir / "mask.ceo1", mask);
  if (mask.kind == MaskKind::Amplitude) write_mask(dir / "mask_binary.ceo1", binarize(mask));
  write_parameters(dir / "params.ceo1", *res.best);
  if (cfg.parameterization == ParamKind::Zernike) write_zernike_csv(dir / "zernike.csv", res.best->parameters());
  const Field pupil = pupil_field(mask, model.pupil());
  for (double z : {-cfg.depth_range, 0.0, cfg.depth_range}) {
    const std::string name = "psf_z" + fmt(z * 1e6) + ".ceo1";
    write_ceo1(dir / name, model.evaluate(pupil, Eigen::Vector3d(0, 0, z), false).h);
    write_metadata(dir / name, {{"z_m", fmt(z)}, {"units", "photons"}});
  }
  std::cout << "best validation loss " << res.best_val_loss * 1e9 << " nm at epoch " << res.best_epoch << '\n';
}

// ---------------------------------------------------------------- crb

struct CrbArgs {
  std::string mask = "open";
  int planes = 30;
  double depth_range = 1.5e-6;
  int motions = 1000;
  double speed_mean = 100e-9;
  double speed_sd = 20e-9;
  double fixed_speed = 0.0;
  std::string model = "event";
};

double mean_crb(const CrbObjective& obj, const Field& pupil, std::span<const Eigen::Vector3d> motions,
                std::vector<CrbResult>* curve = nullptr) {
  const auto c = obj.curve(pupil, motions);
  double total = 0.0;
  Eigen::Index count = 0;
  for (const auto& r : c) {
    total += r.per_parameter.sum();
    count += r.per_parameter.size();
  }
  if (curve != nullptr) *curve = c;
  return total / static_cast<double>(count);
}

void cmd_crb(const Global& g, const CrbArgs& a) {
  const PsfModel model(g.optics);
  const Mask mask = load_mask(a.mask, model.pupil());
  ObjectiveSpec spec;
  spec.depths = linspace(-a.depth_range, a.depth_range, a.planes);
  spec.model = parse_model(a.model);
  spec.workers = g.workers;
  if (a.motions < 1) throw ConfigError("--motions must be >= 1");
  const CrbObjective obj(model, spec);
  const auto motions = sample_motions(g.seed, a.motions, a.speed_mean, a.speed_sd, a.fixed_speed);
  std::vector<CrbResult> curve;
  const double mean = mean_crb(obj, pupil_field(mask, model.pupil()), motions, &curve);
  const fs::path dir(g.out);
  auto csv = open_csv(dir / "crb.csv");
  if (spec.model == InformationModel::Event)
    csv << "z_nm,crb_xp_nm,crb_yp_nm,crb_zp_nm,crb_xt_nm,crb_yt_nm,crb_zt_nm,mean_nm\n";
  else
    csv << "z_nm,crb_x_nm,crb_y_nm,crb_z_nm,mean_nm\n";
  for (const auto& r : curve) {
    csv << r.depth * 1e9;
    for (double v : r.per_parameter) csv << ',' << v * 1e9;
    csv << ',' << r.mean() * 1e9 << '\n';
  }
  auto sum = open_csv(dir / "crb_summary.csv");
  sum << "mask,mean_crb_nm,planes,motions\n" << mask_label(a.mask) << ',' << mean * 1e9 << ',' << a.planes << ','
      << a.motions << '\n';
  std::cout << mask_label(a.mask) << " mean CRB " << mean * 1e9 << " nm\n";
}

// ---------------------------------------------------------------- track

struct TrackArgs {
  std::string masks = "open,fisher,levin";
  int trajectories = 5;
  int bins = 200;
  std::string noise = "on";
  double noise_fraction = 0.01;
  double blur = 300e-9;
  int subframes = 16;
  double threshold = 0.1;
};

void cmd_track(const Global& g, const TrackArgs& a) {
  if (a.bins < 1) throw ConfigError("--bins must be >= 1 (zero-length trajectory)");
  if (a.trajectories < 1) throw ConfigError("--trajectories must be >= 1");
  if (a.noise != "on" && a.noise != "off") throw ConfigError("--noise must be on or off");
  TrackingConfig tc;
  tc.subframes = a.subframes;
  tc.emitter_diameter = a.blur;
  tc.noise_fraction = a.noise_fraction;
  tc.threshold = a.threshold;
  tc.workers = g.workers;
  tc.validate();
  const PsfModel model(g.optics);
  const auto names = split(a.masks);
  if (names.empty()) throw ConfigError("--masks is empty");
  std::vector<Mask> masks;
  for (const auto& n : names) masks.push_back(load_mask(n, model.pupil()));

  std::vector<Trajectory> trajs;
  const fs::path dir(g.out);
  for (int t = 0; t < a.trajectories; ++t) {
    trajs.push_back(brownian_trajectory(a.bins + 1, g.seed + static_cast<std::uint64_t>(t)));
    write_positions_csv(dir / ("truth_t" + std::to_string(t) + ".csv"), trajs.back().positions);
  }
  auto summary = open_csv(dir / "summary.csv");
  summary << "mask,rmse3d_nm,l1z_nm\n";
  auto detail = open_csv(dir / "track_detail.csv");
  detail << "mask,trajectory,rmse3d_nm,l1z_nm,no_information_bins\n";
  for (std::size_t m = 0; m < masks.size(); ++m) {
    const std::string label = mask_label(names[m]);
    std::vector<Eigen::Vector3d> all_truth, all_est;
    for (int t = 0; t < a.trajectories; ++t) {
      tc.seed = g.seed * 1000003ULL + static_cast<std::uint64_t>(t);
      TrackingConfig run = tc;
      if (a.noise == "off") {
        // Same log floor as the noisy run so on/off differ only in the noise.
        run.log_floor = TrackingSetup(model, masks[m], tc).log_floor();
        run.noise_fraction = 0.0;
      }
      const TrackingSetup setup(model, masks[m], run);
      const auto& traj = trajs[static_cast<std::size_t>(t)];
      const auto frames = render_coded_event_video(setup, traj);
      int empty = 0;
      const auto est = track(setup, traj, frames, &empty);
      const std::vector<Eigen::Vector3d> truth(traj.positions.begin() + 1, traj.positions.end());
      const TrackResult r = score(truth, est);
      write_positions_csv(dir / ("est_" + label + "_t" + std::to_string(t) + ".csv"), est);
      detail << label << ',' << t << ',' << r.rmse_3d * 1e9 << ',' << r.l1_z * 1e9 << ',' << empty << '\n';
      all_truth.insert(all_truth.end(), truth.begin(), truth.end());
      all_est.insert(all_est.end(), est.begin(), est.end());
    }
    const TrackResult r = score(all_truth, all_est);
    summary << label << ',' << r.rmse_3d * 1e9 << ',' << r.l1_z * 1e9 << '\n';
    std::cout << label << " rmse3d " << r.rmse_3d * 1e9 << " nm, l1z " << r.l1_z * 1e9 << " nm\n";
  }
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string mask = "open";
  std::string sweep = "all";
  std::string photons = "1000,2000,5000,10000,20000";
  std::string background = "0.001,0.01,0.02,0.05,0.1";
  std::string speed = "1e-9,10e-9,50e-9,100e-9,500e-9,1000e-9";
  int planes = 30;
  double depth_range = 1.5e-6;
  int motions = 100;
};

void cmd_ablate(const Global& g, const AblateArgs& a) {
  if (a.sweep != "all" && a.sweep != "photons" && a.sweep != "background" && a.sweep != "speed")
    throw ConfigError("--sweep must be photons, background, speed or all");
  if (a.motions < 1) throw ConfigError("--motions must be >= 1");
  const fs::path dir(g.out);
  auto csv = open_csv(dir / "ablate.csv");
  csv << "sweep,value,mean_crb_nm\n";
  const auto depths = linspace(-a.depth_range, a.depth_range, a.planes);
  auto run = [&](const std::string& name, const std::string& list, auto&& configure) {
    if (a.sweep != "all" && a.sweep != name) return;
    for (double v : parse_values(list)) {
      OpticalConfig oc = g.optics;
      double speed = 0.0;
      configure(oc, speed, v);
      oc.validate();
      const PsfModel model(oc);
      const Mask mask = load_mask(a.mask, model.pupil());
      ObjectiveSpec spec;
      spec.depths = depths;
      spec.workers = g.workers;
      const CrbObjective obj(model, spec);
      const auto motions = sample_motions(g.seed, a.motions, 100e-9, 20e-9, speed);
      const double m = mean_crb(obj, pupil_field(mask, model.pupil()), motions);
      csv << name << ',' << v << ',' << m * 1e9 << '\n';
      std::cout << name << ' ' << v << " -> " << m * 1e9 << " nm\n";
    }
  };
  run("photons", a.photons, [](OpticalConfig& oc, double&, double v) { oc.signal_photons = v; });
  run("background", a.background, [](OpticalConfig& oc, double&, double v) { oc.background_fraction = v; });
  run("speed", a.speed, [](OpticalConfig&, double& s, double v) {
    if (!(v > 0.0)) throw ConfigError("speed values must be > 0");
    s = v;
  });
}

// ---------------------------------------------------------------- make-baselines

struct BaselineArgs {
  std::string data_out;
  int iterations = 400;
  double lr = 0.05;
  int terms = 55;
};

void cmd_make_baselines(const Global& g, const BaselineArgs& a) {
  const fs::path dir = a.data_out.empty() ? data_dir() : fs::path(a.data_out);
  fs::create_directories(dir);
  const PsfModel model(g.optics);
  FisherDesignConfig fc;
  fc.iterations = a.iterations;
  fc.lr = a.lr;
  fc.terms = a.terms;
  fc.seed = g.seed + 1;
  const Eigen::VectorXd coeffs = design_fisher_coefficients(model, fc);
  write_zernike_csv(dir / "fisher_zernike.csv", coeffs);
  write_mask(dir / "fisher.ceo1", zernike_phase_mask(model.pupil(), coeffs));
  const Eigen::ArrayXXd levin = make_levin_pattern();
  write_ceo1(dir / "levin.ceo1", levin);
  write_metadata(dir / "levin.ceo1", {{"kind", "amplitude"}, {"layout", "square pattern over the pupil disk"}});
  std::cout << "wrote baselines to " << dir << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coded-aperture event-camera 3D localization: PSFs, mask design, CRB, tracking"};
  app.require_subcommand(1);
  app.fallthrough();
  Settings settings;
  Global g;
  std::string config_path;
  bool dump_config = false;
  app.set_version_flag("--version", std::string("coded-event ") + kVersion);
  app.add_option("--config", config_path, "JSON file with settings (flags override)")->check(CLI::ExistingFile);
  app.add_flag("--dump-config", dump_config, "Print the resolved configuration and exit");
  settings.add(&app, "", "seed", g.seed, "Random seed");
  settings.add(&app, "", "workers", g.workers, "Worker threads for inner loops");
  settings.flag(&app, "", "deterministic", g.deterministic, "Bit-identical reruns (one worker, fixed FFT plans)");
  settings.add(&app, "", "out", g.out, "Output directory");
  settings.add(&app, "", "na", g.optics.na, "Numerical aperture");
  settings.add(&app, "", "n-medium", g.optics.n_medium, "Immersion refractive index");
  settings.add(&app, "", "wavelength", g.optics.wavelength, "Emission wavelength (m)");
  settings.add(&app, "", "magnification", g.optics.magnification, "System magnification");
  settings.add(&app, "", "focal-length", g.optics.focal_length, "Tube focal length (m)");
  settings.add(&app, "", "pixel-pitch", g.optics.pixel_pitch, "Sensor pixel pitch (m)");
  settings.add(&app, "", "grid", g.optics.grid, "Pupil/image grid size");
  settings.add(&app, "", "photons", g.optics.signal_photons, "Signal photons per frame");
  settings.add(&app, "", "background", g.optics.background_fraction, "Background as a fraction of the signal");

  PsfArgs psf;
  auto* sp = app.add_subcommand("psf", "Write PSF images over depth planes");
  settings.add(sp, "psf", "mask", psf.mask, "open, fisher, levin or a CEO1 mask file");
  settings.add(sp, "psf", "z", psf.z, "Depths as lo:hi:count or a comma list (m)");
  settings.add(sp, "psf", "x", psf.x, "Lateral x (m)");
  settings.add(sp, "psf", "y", psf.y, "Lateral y (m)");
  settings.add(sp, "psf", "blur", psf.blur, "Emitter diameter (m)");

  OptArgs opt;
  auto* so = app.add_subcommand("optimize", "Design a mask by minimizing the CRB loss");
  settings.add(so, "optimize", "parameterization", opt.parameterization, "neural, pixel or zernike");
  settings.add(so, "optimize", "kind", opt.kind, "phase or amplitude");
  settings.add(so, "optimize", "n-coeffs", opt.n_coeffs, "Zernike terms");
  settings.add(so, "optimize", "epochs", opt.epochs, "Adam steps");
  settings.add(so, "optimize", "lr", opt.lr, "Learning rate");
  settings.add(so, "optimize", "beta1", opt.beta1, "Adam beta1");
  settings.add(so, "optimize", "beta2", opt.beta2, "Adam beta2");
  settings.add(so, "optimize", "planes", opt.planes, "Depth planes");
  settings.add(so, "optimize", "depth-range", opt.depth_range, "Planes span +/- this (m)");
  settings.add(so, "optimize", "speed-mean", opt.speed_mean, "Mean motion per step (m)");
  settings.add(so, "optimize", "speed-sd", opt.speed_sd, "Motion magnitude sd (m)");
  settings.add(so, "optimize", "fixed-speed", opt.fixed_speed, "Use this exact step length when > 0 (m)");
  settings.add(so, "optimize", "val-motions", opt.val_motions, "Held-out motions");
  settings.add(so, "optimize", "val-every", opt.val_every, "Validate every N epochs");
  settings.add(so, "optimize", "model", opt.model, "event or flashing");

  CrbArgs crb_args;
  auto* sc = app.add_subcommand("crb", "CRB curve over depth for a mask");
  settings.add(sc, "crb", "mask", crb_args.mask, "open, fisher, levin or a CEO1 mask file");
  settings.add(sc, "crb", "planes", crb_args.planes, "Depth planes");
  settings.add(sc, "crb", "depth-range", crb_args.depth_range, "Planes span +/- this (m)");
  settings.add(sc, "crb", "motions", crb_args.motions, "Random motions averaged per plane");
  settings.add(sc, "crb", "speed-mean", crb_args.speed_mean, "Mean motion per step (m)");
  settings.add(sc, "crb", "speed-sd", crb_args.speed_sd, "Motion magnitude sd (m)");
  settings.add(sc, "crb", "fixed-speed", crb_args.fixed_speed, "Use this exact step length when > 0 (m)");
  settings.add(sc, "crb", "model", crb_args.model, "event or flashing");

  TrackArgs tr;
  auto* st = app.add_subcommand("track", "Simulate coded event video and track emitters");
  settings.add(st, "track", "masks", tr.masks, "Comma list of masks");
  settings.add(st, "track", "trajectories", tr.trajectories, "Number of trajectories");
  settings.add(st, "track", "bins", tr.bins, "Binned frames per trajectory");
  settings.add(st, "track", "noise", tr.noise, "on or off");
  settings.add(st, "track", "noise-fraction", tr.noise_fraction, "Gaussian sigma / in-focus peak");
  settings.add(st, "track", "blur", tr.blur, "Emitter diameter (m)");
  settings.add(st, "track", "subframes", tr.subframes, "Video frames per bin");
  settings.add(st, "track", "threshold", tr.threshold, "Event contrast threshold (log units)");

  AblateArgs ab;
  auto* sa = app.add_subcommand("ablate", "Mean CRB under photon, background and speed sweeps");
  settings.add(sa, "ablate", "mask", ab.mask, "open, fisher, levin or a CEO1 mask file");
  settings.add(sa, "ablate", "sweep", ab.sweep, "photons, background, speed or all");
  settings.add(sa, "ablate", "photons-values", ab.photons, "Signal photon values");
  settings.add(sa, "ablate", "background-values", ab.background, "Background fractions");
  settings.add(sa, "ablate", "speed-values", ab.speed, "Step lengths (m)");
  settings.add(sa, "ablate", "planes", ab.planes, "Depth planes");
  settings.add(sa, "ablate", "depth-range", ab.depth_range, "Planes span +/- this (m)");
  settings.add(sa, "ablate", "motions", ab.motions, "Random motions per plane");

  BaselineArgs bl;
  auto* sb = app.add_subcommand("make-baselines", "Regenerate the Fisher and coded-aperture baseline files");
  settings.add(sb, "make-baselines", "data-out", bl.data_out, "Destination (default: shipped data directory)");
  settings.add(sb, "make-baselines", "iterations", bl.iterations, "Adam steps for the Fisher mask");
  settings.add(sb, "make-baselines", "lr", bl.lr, "Learning rate for the Fisher mask");
  settings.add(sb, "make-baselines", "terms", bl.terms, "Zernike terms for the Fisher mask");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      json file;
      try {
        file = json::parse(is);
      } catch (const json::exception& ex) {
        throw ConfigError("cannot parse " + config_path + ": " + ex.what());
      }
      settings.apply_file(file, command);
    }
    if (g.deterministic) g.workers = 1;
    set_fft_reproducible(g.deterministic);
    if (g.workers < 1) throw ConfigError("--workers must be >= 1");
    g.optics.validate();
    const json resolved = settings.resolved(command);
    if (dump_config) {
      std::cout << resolved.dump(2) << '\n';
      return 0;
    }
    write_config(g.out, resolved);

    if (command == "psf") cmd_psf(g, psf);
    else if (command == "optimize") cmd_optimize(g, opt);
    else if (command == "crb") cmd_crb(g, crb_args);
    else if (command == "track") cmd_track(g, tr);
    else if (command == "ablate") cmd_ablate(g, ab);
    else if (command == "make-baselines") cmd_make_baselines(g, bl);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
