#include <localdeform/errors.hpp>
#include <localdeform/regularizers.hpp>

#include <algorithm>

namespace localdeform {

Eigen::VectorXd LocalityParams::per_vertex_lambda(const RestMesh& mesh) const
{
    return w * mesh.vertex_areas();
}

double scl1_value(const SmallVec& x, double s)
{
    if (!(s > 0.0)) fail(ErrorCode::NonpositiveThreshold, "clamp threshold s must be positive");
    const double n = x.norm();
    if (n < s) return n - n * n / (2.0 * s);
    return 0.5 * s;
}

SmallVec scl1_prox(const SmallVec& x, double lambda, double rho, double s)
{
    if (!(s > 0.0)) fail(ErrorCode::NonpositiveThreshold, "clamp threshold s must be positive");
    if (lambda == 0.0) return x;
    if (!(rho * s > lambda)) {
        fail(ErrorCode::SafeguardViolated, "shrinkage needs rho > lambda / s");
    }
    const double n = x.norm();
    if (n > s) return x;
    if (n == 0.0) return SmallVec::Zero(x.size());
    const double factor = std::max(0.0, (rho * s - lambda * s / n) / (rho * s - lambda));
    return factor * x;
}

double l21_value(const SmallVec& x)
{
    return x.norm();
}

SmallVec l21_prox(const SmallVec& x, double lambda, double rho)
{
    if (!(rho > 0.0)) fail(ErrorCode::InvalidArgument, "rho must be positive");
    if (!x.allFinite()) fail(ErrorCode::NonFinite, "l21_prox input is not finite");
    const double n = x.norm();
    if (n == 0.0) return SmallVec::Zero(x.size());
    return std::max(0.0, 1.0 - lambda / (rho * n)) * x;
}

double regularizer_value(Regularizer kind, const SmallVec& x, double s)
{
    switch (kind) {
    case Regularizer::scl1: return scl1_value(x, s);
    case Regularizer::l21: return l21_value(x);
    case Regularizer::none: break;
    }
    return 0.0;
}

SmallVec regularizer_prox(Regularizer kind, const SmallVec& x, double lambda, double rho, double s)
{
    switch (kind) {
    case Regularizer::scl1: return scl1_prox(x, lambda, rho, s);
    case Regularizer::l21: return l21_prox(x, lambda, rho);
    case Regularizer::none: break;
    }
    return x;
}

} // namespace localdeform
