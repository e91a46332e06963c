#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctstd/rng.hpp"

namespace ctstd::nn {

/// Named parameter tensor. `offset` locates this tensor's gradient within a
/// model's flat gradient vector (assigned once by assign_offsets).
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    int64_t offset = 0;

    int64_t size() const { return static_cast<int64_t>(value.size()); }
};

/// Assigns flat-gradient offsets in registry order; returns the total count.
int64_t assign_offsets(const std::vector<Param*>& params);

/// CRC-32 over the little-endian f64 bytes of all parameters in order.
uint32_t param_checksum(const std::vector<Param*>& params);

void init_he_normal(Param& p, int fan_in, Rng& rng);

struct Dense {
    int in_dim = 0, out_dim = 0;
    Param weight;  ///< [out_dim, in_dim]
    Param bias;    ///< [out_dim]

    void init(const std::string& name, int in_dim, int out_dim, Rng& rng);
    void init_zero(const std::string& name, int in_dim, int out_dim);
    void forward(const std::vector<double>& in, std::vector<double>& out) const;
    /// Writes dweight/dbias into `grad` at this layer's offsets; din optional.
    void backward(const std::vector<double>& in, const std::vector<double>& dout,
                  std::vector<double>& grad, std::vector<double>* din) const;
};

/// 3x3 convolution, zero padding 1, stride 1 or 2, NCHW single-sample layout.
struct Conv2d {
    int cin = 0, cout = 0, stride = 1;
    Param weight;  ///< [cout, cin, 3, 3]
    Param bias;    ///< [cout]

    void init(const std::string& name, int cin, int cout, int stride, Rng& rng);
    int out_h(int h) const { return (h + 2 - 3) / stride + 1; }
    int out_w(int w) const { return (w + 2 - 3) / stride + 1; }
    void forward(const std::vector<double>& in, int h, int w,
                 std::vector<double>& out) const;
    void backward(const std::vector<double>& in, int h, int w,
                  const std::vector<double>& dout, std::vector<double>& grad,
                  std::vector<double>* din) const;
};

void silu_forward(const std::vector<double>& x, std::vector<double>& out);
/// dx = dout * silu'(x); x is the pre-activation input.
void silu_backward(const std::vector<double>& x, const std::vector<double>& dout,
                   std::vector<double>& dx);

/// Nearest-neighbour 2x upsampling; h, w are the input dimensions.
void upsample2x_forward(const std::vector<double>& in, int c, int h, int w,
                        std::vector<double>& out);
void upsample2x_backward(const std::vector<double>& dout, int c, int h, int w,
                         std::vector<double>& din);

/// Adaptive moment estimation over a fixed parameter registry. step() takes
/// the flat gradient laid out per assign_offsets.
class Adam {
  public:
    Adam(std::vector<Param*> params, double lr, double beta1 = 0.9,
         double beta2 = 0.999, double eps = 1e-8);
    void step(const std::vector<double>& grad);

  private:
    std::vector<Param*> params_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace ctstd::nn
