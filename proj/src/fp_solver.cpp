#include "hignn/fp_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

#include "hignn/error.hpp"
#include "hignn/metrics.hpp"

namespace hignn {

namespace {

using CMatrix = Eigen::MatrixXcd;

// argmax_x 2 Re{b^H x} - x^H Q x  s.t. |x|^2 <= P, with Q Hermitian PSD.
CVector constrained_update(const CMatrix& q, const CVector& b, double p_max, double tol, int* bisections) {
    const auto n = q.rows();
    if (b.squaredNorm() == 0.0) return CVector::Zero(n);

    Eigen::LLT<CMatrix> llt(q);
    if (llt.info() != Eigen::Success) llt.compute(q + 1e-12 * CMatrix::Identity(n, n));
    if (llt.info() == Eigen::Success) {
        CVector x = llt.solve(b);
        if (x.allFinite() && x.squaredNorm() <= p_max) return x;
    }

    if (bisections) ++*bisections;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(q);
    const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
    const CVector c = eig.eigenvectors().adjoint() * b;
    const Eigen::VectorXd c2 = c.cwiseAbs2();
    auto power = [&](double eta) {
        double p = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) p += c2[k] / ((lambda[k] + eta) * (lambda[k] + eta));
        return p;
    };

    double hi = 1.0;
    while (power(hi) >= p_max) hi *= 2.0;
    double lo = 0.0;
    while (p_max - power(hi) > tol * p_max && hi - lo > 1e-16 * hi) {
        const double mid = 0.5 * (lo + hi);
        if (power(mid) > p_max) lo = mid;
        else hi = mid;
    }
    CVector scaled(n);
    for (Eigen::Index k = 0; k < n; ++k) scaled[k] = c[k] / (lambda[k] + hi);
    return eig.eigenvectors() * scaled;
}

} // namespace

BeamformerSet init_mrt(const ChannelSet& h, double p_max) {
    BeamformerSet x;
    const double amp = std::sqrt(p_max);
    for (int i = 0; i < h.num_links(); ++i) {
        const CVector& d = h(i, i);
        const double norm = d.norm();
        x.x.push_back(norm > 0.0 ? CVector(amp * d / norm) : CVector(CVector::Zero(d.size())));
    }
    return x;
}

BeamformerSet fp_iterate(const BeamformerSet& x, const ChannelSet& h, std::span<const double> weights,
                         std::span<const double> noise_vars, double p_max, double bisection_tol, int* bisections) {
    const int k = h.num_links();
    if (int(x.size()) != k || int(weights.size()) != k || int(noise_vars.size()) != k)
        throw StructuralError("fp_iterate: sizes do not match the channel set");

    // g(i, j) = |h_ij^H x_j|^2
    Eigen::MatrixXd g(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) g(i, j) = std::norm(h(i, j).dot(x[std::size_t(j)]));

    std::vector<double> amp(static_cast<std::size_t>(k)); // sqrt(w_i (1 + gamma_i))
    std::vector<Complex> y(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const double total = g.row(i).sum() + noise_vars[std::size_t(i)];
        const double gamma = g(i, i) / (total - g(i, i));
        amp[std::size_t(i)] = std::sqrt(weights[std::size_t(i)] * (1.0 + gamma));
        y[std::size_t(i)] = amp[std::size_t(i)] * h(i, i).dot(x[std::size_t(i)]) / total;
    }

    BeamformerSet out;
    out.x.reserve(std::size_t(k));
    for (int i = 0; i < k; ++i) {
        const auto n = h(i, i).size();
        CMatrix q = CMatrix::Zero(n, n);
        for (int j = 0; j < k; ++j) {
            const CVector& hji = h(j, i);
            q.noalias() += std::norm(y[std::size_t(j)]) * (hji * hji.adjoint());
        }
        const CVector b = amp[std::size_t(i)] * y[std::size_t(i)] * h(i, i);
        out.x.push_back(constrained_update(q, b, p_max, bisection_tol, bisections));
    }
    return out;
}

FpResult fp_solve_from(BeamformerSet x0, const ChannelSet& h, std::span<const double> weights,
                       std::span<const double> noise_vars, double p_max, const FpOptions& options) {
    if (options.max_iters < 1 || !(options.rel_tol > 0.0) || !(options.bisection_tol > 0.0) ||
        options.truncated_iters < 0)
        throw ValidationError("fp_solve: iteration counts and tolerances must be positive");

    FpResult res;
    res.x = std::move(x0);
    double current = weighted_sum_rate(res.x, h, weights, noise_vars);
    res.trace.wsr.push_back(current);
    BeamformerSet best = res.x;
    double best_wsr = current;

    const int limit = options.truncated_iters > 0 ? options.truncated_iters : options.max_iters;
    for (int it = 0; it < limit; ++it) {
        res.x = fp_iterate(res.x, h, weights, noise_vars, p_max, options.bisection_tol, &res.trace.bisections);
        const double next = weighted_sum_rate(res.x, h, weights, noise_vars);
        res.trace.wsr.push_back(next);
        res.trace.iterations = it + 1;
        if (next > best_wsr) {
            best_wsr = next;
            best = res.x;
        }
        const bool small = next - current < options.rel_tol * std::abs(current);
        current = next;
        if (small) {
            res.trace.converged = true;
            if (options.truncated_iters == 0) break;
        } else {
            res.trace.converged = false;
        }
    }
    if (!res.trace.converged) res.x = std::move(best);
    return res;
}

FpResult fp_solve(const ChannelSet& h, std::span<const double> weights, std::span<const double> noise_vars,
                  double p_max, const FpOptions& options) {
    return fp_solve_from(init_mrt(h, p_max), h, weights, noise_vars, p_max, options);
}

FpResult fp_solve(const NetworkInstance& instance, const ChannelSet& h, const FpOptions& options) {
    return fp_solve(h, instance.weights, instance.noise_vars, instance.p_max, options);
}

} // namespace hignn
