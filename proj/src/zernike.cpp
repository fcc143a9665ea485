#include "codedevent/zernike.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace codedevent {

namespace {

double factorial(int k) { return std::tgamma(k + 1.0); }

double radial(int n, int m, double rho) {
  m = std::abs(m);
  double r = 0.0;
  for (int k = 0; k <= (n - m) / 2; ++k) {
    const double coef = ((k % 2 == 0) ? 1.0 : -1.0) * factorial(n - k) /
                        (factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k));
    r += coef * std::pow(rho, n - 2 * k);
  }
  return r;
}

}  // namespace

ZernikeIndex noll_to_nm(int j) {
  if (j < 1) throw ConfigError("zernike: Noll index starts at 1");
  int n = 0;
  while ((n + 1) * (n + 2) / 2 < j) ++n;
  const int mprime = j - n * (n + 1) / 2;
  int m = (n % 2 == 0) ? 2 * (mprime / 2) : 1 + 2 * ((mprime - 1) / 2);
  if (j % 2 == 1) m = -m;
  return {n, m};
}

double zernike(int j, double rho, double theta) {
  const auto [n, m] = noll_to_nm(j);
  const double r = radial(n, m, rho);
  if (m == 0) return std::sqrt(n + 1.0) * r;
  const double norm = std::sqrt(2.0 * (n + 1.0));
  return m > 0 ? norm * r * std::cos(m * theta) : norm * r * std::sin(-m * theta);
}

Eigen::MatrixXd zernike_basis(const PupilGrid& grid, int count) {
  if (count < 1) throw ConfigError("zernike: need at least one term");
  Eigen::MatrixXd b(grid.support_count(), count);
  for (Eigen::Index s = 0; s < grid.support_count(); ++s) {
    const double u = grid.support_coords(0, s);
    const double v = grid.support_coords(1, s);
    const double rho = std::hypot(u, v);
    const double theta = std::atan2(v, u);
    for (int j = 1; j <= count; ++j) b(s, j - 1) = zernike(j, rho, theta);
  }
  return b;
}

void write_zernike_csv(const std::filesystem::path& path, const Eigen::VectorXd& coeffs) {
  std::ofstream os(path);
  if (!os) throw ConfigError("zernike: cannot write " + path.string());
  os.precision(17);
  os << "index,coefficient\n";
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) os << (i + 1) << ',' << coeffs(i) << '\n';
}

Eigen::VectorXd read_zernike_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("zernike: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "index,coefficient") throw ConfigError("zernike: bad header");
  std::vector<double> vals;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int idx = 0;
    char comma = 0;
    double v = 0.0;
    if (!(ls >> idx >> comma >> v) || comma != ',' || idx != static_cast<int>(vals.size()) + 1) {
      throw ConfigError("zernike: malformed row: " + line);
    }
    vals.push_back(v);
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace codedevent
