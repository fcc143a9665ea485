#pragma once

#include <Eigen/Dense>

namespace codedevent {

using Image = Eigen::ArrayXXd;
using Field = Eigen::ArrayXXcd;

/// Plans are measured (fastest, but the chosen algorithm and hence the last
/// bits can differ between processes) unless estimate-only planning is
/// selected. Takes effect for sizes not planned yet.
void set_fft_reproducible(bool reproducible);

/// Square 2-D DFT of fixed size backed by FFTW.
///
/// Both directions are unnormalized, so backward() is the exact adjoint of
/// forward(). Plans are shared process-wide and execution is thread-safe.
class Fft2 {
 public:
  explicit Fft2(int n);

  int size() const { return n_; }

  void forward(const Field& in, Field& out) const;
  void backward(const Field& in, Field& out) const;

  Field forward(const Field& in) const {
    Field out(n_, n_);
    forward(in, out);
    return out;
  }
  Field backward(const Field& in) const {
    Field out(n_, n_);
    backward(in, out);
    return out;
  }

 private:
  int n_;
  void* fwd_;
  void* bwd_;
};

}  // namespace codedevent
