#include "codedevent/baselines.hpp"

#include <cstdlib>
#include <random>

#include "codedevent/grid_io.hpp"
#include "codedevent/optimize.hpp"
#include "codedevent/zernike.hpp"

namespace codedevent {

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("CODEDEVENT_DATA"); env && *env) return env;
  return CODEDEVENT_DATA_DIR;
}

Eigen::ArrayXXd make_levin_pattern(int cells, std::uint64_t seed) {
  if (cells < 1) throw ConfigError("levin pattern: need at least one cell");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution open(0.5);
  Eigen::ArrayXXd p(cells, cells);
  for (int r = 0; r < cells; ++r)
    for (int c = 0; c < cells; ++c) p(r, c) = open(rng) ? 1.0 : 0.0;
  return p;
}

Mask levin_mask(const PupilGrid& grid, const Eigen::ArrayXXd& pattern) {
  const Eigen::Index cells = pattern.rows();
  if (cells < 1 || pattern.cols() != cells) throw ConfigError("levin pattern must be square");
  Eigen::ArrayXXd values = Eigen::ArrayXXd::Zero(grid.n, grid.n);
  for (Eigen::Index k = 0; k < grid.support_count(); ++k) {
    const double u = grid.support_coords(0, k), v = grid.support_coords(1, k);
    const auto cell = [cells](double t) {
      return std::clamp<Eigen::Index>(static_cast<Eigen::Index>((t + 1.0) * 0.5 * static_cast<double>(cells)), 0,
                                      cells - 1);
    };
    values(grid.support_index[static_cast<std::size_t>(k)]) = pattern(cell(v), cell(u));
  }
  return Mask{MaskKind::Amplitude, values};
}

Mask zernike_phase_mask(const PupilGrid& grid, const Eigen::VectorXd& coeffs) {
  const Eigen::MatrixXd basis = zernike_basis(grid, static_cast<int>(coeffs.size()));
  return Mask{MaskKind::Phase, grid.scatter(basis * coeffs)};
}

Eigen::VectorXd design_fisher_coefficients(const PsfModel& model, const FisherDesignConfig& cfg) {
  ObjectiveSpec spec;
  spec.depths = linspace(-cfg.depth_range, cfg.depth_range, cfg.depth_planes);
  spec.model = InformationModel::Flashing;
  const CrbObjective objective(model, spec);
  ZernikeParams param(model.pupil_ptr(), cfg.terms);
  // The open aperture is a stationary point for the odd terms; start slightly off it.
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> jitter(0.0, 0.1);
  Eigen::VectorXd c(cfg.terms);
  for (auto& x : c) x = jitter(rng);
  param.set_parameters(c);
  const std::vector<Eigen::Vector3d> none;
  AdamState state;
  Eigen::VectorXd grad;
  Eigen::VectorXd best = c;
  double best_loss = loss_value(param, objective, none);
  for (int it = 0; it < cfg.iterations; ++it) {
    const double loss = grad_loss(param, objective, none, grad);
    if (loss < best_loss) {
      best_loss = loss;
      best = c;
    }
    adam_step(c, grad, state, cfg.lr, 0.9, 0.999);
    param.set_parameters(c);
  }
  param.set_parameters(c);
  if (loss_value(param, objective, none) < best_loss) best = c;
  return best;
}

Mask load_mask(const std::string& name_or_path, const PupilGrid& grid) {
  if (name_or_path == "open") return open_aperture(grid);
  if (name_or_path == "fisher") {
    const auto path = data_dir() / "fisher_zernike.csv";
    if (!std::filesystem::exists(path)) throw ConfigError("fisher baseline not found at " + path.string());
    return zernike_phase_mask(grid, read_zernike_csv(path));
  }
  if (name_or_path == "levin") {
    const auto path = data_dir() / "levin.ceo1";
    if (!std::filesystem::exists(path)) throw ConfigError("levin baseline not found at " + path.string());
    return levin_mask(grid, read_ceo1(path));
  }
  const std::filesystem::path path(name_or_path);
  if (!std::filesystem::exists(path))
    throw ConfigError("unknown mask '" + name_or_path + "' (open, fisher, levin, or a CEO1 file)");
  Mask m;
  m.values = read_ceo1(path);
  const auto meta = read_metadata(path);
  const auto it = meta.find("kind");
  m.kind = (it != meta.end() && it->second == "amplitude") ? MaskKind::Amplitude : MaskKind::Phase;
  if (m.values.rows() != grid.n || m.values.cols() != grid.n)
    throw ConfigError("mask file " + name_or_path + " does not match the pupil grid size");
  m.values *= grid.support;
  validate_mask(m, grid);
  return m;
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  write_ceo1(path, mask.values);
  write_metadata(path, {{"kind", mask.kind == MaskKind::Phase ? "phase" : "amplitude"},
                        {"units", mask.kind == MaskKind::Phase ? "radians" : "transmittance"}});
}

}  // namespace codedevent
