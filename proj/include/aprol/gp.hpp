#pragma once

#include <aprol/common.hpp>
#include <aprol/error.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace aprol {

    struct GpHyperparams {
        double sigma_se = 0.03;    ///< signal std
        double length_scale = 0.3; ///< l
        double sigma_n = 1e-3;     ///< observation noise std

        void validate() const
        {
            if (!(sigma_se > 0.) || !(length_scale > 0.))
                throw InvalidInput("GP hyperparameters sigma_se and length_scale must be > 0");
            if (!(sigma_n >= 0.))
                throw InvalidInput("GP noise sigma_n must be >= 0");
        }
    };

    /// Squared-exponential kernel sigma_se^2 * exp(-|x - x'|^2 / l^2).
    template <typename A, typename B>
    double kernel(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp, const GpHyperparams& h)
    {
        return h.sigma_se * h.sigma_se * std::exp(-(x - xp).squaredNorm() / (h.length_scale * h.length_scale));
    }

    struct GpSample {
        TaskPoint x; ///< expected transition stored in the repertoire
        TaskPoint y; ///< observed transition
    };

    struct GpPrediction {
        TaskPoint mu;
        Eigen::VectorXd var; ///< per output dimension, >= 1e-12
    };

    /// Independent GPs, one per task-space dimension, sharing the kernel and
    /// the inputs. The prior mean is the identity: an expected transition is
    /// predicted to happen as stored until observations say otherwise.
    class GpModel {
    public:
        static constexpr double variance_floor = 1e-12;

        GpModel() = default;

        /// `window` keeps only the most recent observations when > 0.
        GpModel(std::size_t dim, GpHyperparams hyper = {}, std::size_t window = 0) : _dim(dim), _hyper(hyper), _window(window)
        {
            _hyper.validate();
            if (dim == 0)
                throw InvalidInput("GP dimension must be >= 1");
        }

        std::size_t dim() const { return _dim; }
        std::size_t size() const { return _samples.size(); }
        bool empty() const { return _samples.empty(); }
        const GpHyperparams& hyper() const { return _hyper; }
        std::size_t window() const { return _window; }
        const std::vector<GpSample>& samples() const { return _samples; }

        /// New model conditioned on `samples` (replacing any previous data).
        GpModel fitted(std::span<const GpSample> samples) const
        {
            GpModel m(*this);
            m._samples.assign(samples.begin(), samples.end());
            m.refit();
            return m;
        }

        /// New model with one more observation appended.
        GpModel with_sample(GpSample s) const
        {
            GpModel m(*this);
            m._samples.push_back(std::move(s));
            m.refit();
            return m;
        }

        GpPrediction predict(const TaskPoint& x) const
        {
            if (static_cast<std::size_t>(x.size()) != _dim)
                throw InvalidInput("GP query dimension " + std::to_string(x.size()) + " does not match model dimension "
                    + std::to_string(_dim));
            const double prior_var = _hyper.sigma_se * _hyper.sigma_se;
            GpPrediction p{x, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(_dim), prior_var)};
            if (_samples.empty())
                return p;

            const auto t = _inputs.cols();
            Eigen::VectorXd k(t);
            for (Eigen::Index i = 0; i < t; ++i)
                k(i) = kernel(_inputs.col(i), x, _hyper);
            p.mu += _alpha.transpose() * k;
            const Eigen::VectorXd v = _llt.matrixL().solve(k);
            p.var.setConstant(std::max(prior_var - v.squaredNorm(), variance_floor));
            return p;
        }

    private:
        void refit()
        {
            if (_window > 0 && _samples.size() > _window)
                _samples.erase(_samples.begin(), _samples.end() - static_cast<std::ptrdiff_t>(_window));
            const auto t = static_cast<Eigen::Index>(_samples.size());
            const auto d = static_cast<Eigen::Index>(_dim);
            _inputs.resize(d, t);
            Eigen::MatrixXd residual(t, d);
            for (Eigen::Index i = 0; i < t; ++i) {
                const auto& s = _samples[static_cast<std::size_t>(i)];
                if (s.x.size() != d || s.y.size() != d)
                    throw InvalidInput("GP observation dimension does not match model dimension");
                _inputs.col(i) = s.x;
                residual.row(i) = (s.y - s.x).transpose();
            }
            if (t == 0) {
                _llt = {};
                _alpha.resize(0, d);
                return;
            }

            Eigen::MatrixXd K(t, t);
            for (Eigen::Index i = 0; i < t; ++i)
                for (Eigen::Index j = 0; j <= i; ++j)
                    K(i, j) = K(j, i) = kernel(_inputs.col(i), _inputs.col(j), _hyper);
            K.diagonal().array() += _hyper.sigma_n * _hyper.sigma_n;

            _llt.compute(K);
            const double scale = K.diagonal().maxCoeff();
            const Eigen::VectorXd l_diag = _llt.matrixLLT().diagonal();
            if (_llt.info() != Eigen::Success || !l_diag.allFinite() || (l_diag.array().square() <= 1e-13 * scale).any())
                throw NumericalError("GP kernel matrix is singular (duplicate inputs?); use sigma_n > 0");
            _alpha = _llt.solve(residual);
        }

        std::size_t _dim = 0;
        GpHyperparams _hyper;
        std::size_t _window = 0;
        std::vector<GpSample> _samples;
        Eigen::MatrixXd _inputs;
        Eigen::LLT<Eigen::MatrixXd> _llt;
        Eigen::MatrixXd _alpha; ///< (K + sigma_n^2 I)^-1 (Y - M(X)), t x dim
    };

    inline GpModel fit(const GpModel& model, std::span<const GpSample> observations) { return model.fitted(observations); }

    inline GpPrediction predict(const GpModel& model, const TaskPoint& x) { return model.predict(x); }

} // namespace aprol
