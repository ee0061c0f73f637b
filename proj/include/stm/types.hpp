#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace stm {

using Scalar = double;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using MatX2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;
using MatX3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;
using MatX4 = Eigen::Matrix<Scalar, Eigen::Dynamic, 4>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateRotationError : Error { using Error::Error; };
struct SingularCovarianceError : Error { using Error::Error; };
struct IncompatibleFieldsError : Error { using Error::Error; };
struct InvalidWeightsError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct DegenerateDepthError : Error { using Error::Error; };
struct ShapeMismatchError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// Row-major H x W x C raster in [0,1] (or unbounded for depth maps).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<Scalar> data;

  Image() = default;
  Image(int w, int h, int c, Scalar fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  Scalar& at(int y, int x, int c = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  Scalar at(int y, int x, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeMismatchError(std::string(what) + ": image shapes differ");
}

}  // namespace stm
