#pragma once

#include "tdgeo/core.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>

namespace tdgeo {

/// A differentiable parametrization theta -> V(theta) in R^n.
/// Implementations are immutable; value and jacobian are pure.
class Approximator {
 public:
  virtual ~Approximator() = default;

  virtual std::string kind() const = 0;
  virtual Index param_dim() const = 0;
  virtual Index state_dim() const = 0;

  virtual Vector value(const Vector& theta) const = 0;
  /// n x d matrix of partial derivatives dV_s / dtheta_j.
  virtual Matrix jacobian(const Vector& theta) const = 0;

  /// Parameters the family was built with (network weights); zeros otherwise.
  virtual Vector initial_theta() const { return Vector::Zero(param_dim()); }

  /// Homogeneity degree D with J(theta) theta = D V(theta), when the family has one.
  virtual std::optional<double> degree() const { return std::nullopt; }

  virtual nlohmann::json to_json() const = 0;

 protected:
  void check_theta(const Vector& theta) const {
    require(theta.size() == param_dim(), ErrorCode::ShapeMismatch,
            kind() + ": expected " + std::to_string(param_dim()) + " parameters, got " +
                std::to_string(theta.size()));
  }
};

using ApproximatorPtr = std::shared_ptr<const Approximator>;

}  // namespace tdgeo
