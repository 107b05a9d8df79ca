#include "fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ioncouple::fitting {

namespace {

constexpr double pi = std::numbers::pi;

struct Setup {
    Model model;
    FitOptions options;
    Eigen::VectorXd scale;  // natural magnitude of each parameter for the step test
};

// Value and gradient of the model at one abscissa.
double model_gradient(const Setup &s, const Eigen::VectorXd &p, double x, Eigen::Ref<Eigen::RowVectorXd> grad) {
    switch (s.model) {
        case Model::Lineshape: {
            const double a = p[0], o0 = p[1], w0 = p[2];
            const double t = s.options.pulse_duration;
            const double d = x - w0;
            const double om = std::sqrt(o0 * o0 + d * d);
            if (om < 1e-12 / t) {
                grad << o0 * t * t / 4, a * t * t / 4, 0.0, 1.0;
                return a * o0 * t * t / 4 + p[3];
            }
            const double sn = std::sin(om * t / 2), cs = std::cos(om * t / 2);
            const double ratio = sn * sn / (om * om);
            const double dfdom = a * o0 * (sn * cs * t / (om * om) - 2 * sn * sn / (om * om * om));
            grad << o0 * ratio, a * ratio + dfdom * o0 / om, -dfdom * d / om, 1.0;
            return a * o0 * ratio + p[3];
        }
        case Model::Exchange: {
            const double a = p[0], oc = p[1], ph = p[2], g = p[3];
            const double e = std::exp(-g * x);
            const double sn = std::sin(oc * x + ph), cs = std::cos(oc * x + ph);
            grad << sn * e, a * cs * x * e, a * cs * e, -x * a * sn * e, 1.0;
            return a * sn * e + p[4];
        }
        case Model::Fringe: {
            const double b = p[0], ph = p[1];
            grad << std::sin(x + ph), b * std::cos(x + ph), 1.0;
            return b * std::sin(x + ph) + p[2];
        }
        case Model::Decay: {
            const double q = 1.0 - p[0];
            grad << (x == 0.0 ? 0.0 : -x * std::pow(q, x - 1.0));
            return std::pow(q, x);
        }
    }
    return 0.0;
}

void project(const Setup &s, Eigen::VectorXd &p) {
    if (s.model == Model::Exchange) p[3] = std::max(p[3], 0.0);
    if (s.model == Model::Decay) p[0] = std::min(p[0], 1.0 - 1e-12);
}

Eigen::VectorXd residuals(const Setup &s, const Series &d, const Eigen::VectorXd &p, Eigen::MatrixXd *jac) {
    const int m = static_cast<int>(d.x.size());
    Eigen::VectorXd r(m);
    Eigen::RowVectorXd g(p.size());
    if (jac) jac->resize(m, p.size());
    for (int i = 0; i < m; ++i) {
        r[i] = model_gradient(s, p, d.x[i], g) - d.y[i];
        if (jac) jac->row(i) = g;
    }
    return r;
}

// Linear least squares y ~ columns; returns coefficients and residual sum of squares.
std::pair<Eigen::VectorXd, double> linear_fit(const Eigen::MatrixXd &cols, const Eigen::VectorXd &y) {
    const Eigen::VectorXd c = cols.completeOrthogonalDecomposition().solve(y);
    return {c, (cols * c - y).squaredNorm()};
}

Eigen::VectorXd as_vector(const std::vector<double> &v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double wrap_phase(double ph) {
    double w = std::remainder(ph, 2 * pi);
    if (w <= -pi) w += 2 * pi;
    return w;
}

Eigen::VectorXd seed_lineshape(const Series &d, const FitOptions &o) {
    const Eigen::VectorXd y = as_vector(d.y);
    const int m = static_cast<int>(d.x.size());
    const double t = o.pulse_duration;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd seed(4);
    std::vector<double> centres = d.x;
    for (int i = 0; i + 1 < m; ++i) centres.push_back(0.5 * (d.x[i] + d.x[i + 1]));
    Eigen::MatrixXd cols(m, 2);
    cols.col(1).setOnes();
    for (int k = 0; k < 40; ++k) {
        const double o0 = pi / t * std::pow(10.0, -1.0 + 1.5 * k / 39.0);
        for (double w0 : centres) {
            for (int i = 0; i < m; ++i) {
                const double dd = d.x[i] - w0;
                const double om2 = o0 * o0 + dd * dd;
                const double sn = std::sin(std::sqrt(om2) * t / 2);
                cols(i, 0) = o0 * sn * sn / om2;
            }
            const auto [c, rss] = linear_fit(cols, y);
            if (rss < best) {
                best = rss;
                seed << c[0], o0, w0, c[1];
            }
        }
    }
    return seed;
}

Eigen::VectorXd seed_exchange(const Series &d) {
    const Eigen::VectorXd y = as_vector(d.y);
    const int m = static_cast<int>(d.x.size());
    const auto [lo, hi] = std::minmax_element(d.x.begin(), d.x.end());
    const double span = *hi - *lo;
    std::vector<double> xs = d.x;
    std::sort(xs.begin(), xs.end());
    double dx = span;
    for (int i = 1; i < m; ++i)
        if (xs[i] > xs[i - 1]) dx = std::min(dx, xs[i] - xs[i - 1]);
    const double wmin = 0.25 * pi / span, wmax = pi / dx;
    const int n = std::max(400, 16 * m);
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd seed(5);
    Eigen::MatrixXd cols(m, 3);
    cols.col(2).setOnes();
    for (double g : {0.0, 0.3 / span, 1.0 / span, 3.0 / span}) {
        for (int k = 0; k < n; ++k) {
            const double w = wmin + (wmax - wmin) * k / (n - 1);
            for (int i = 0; i < m; ++i) {
                const double e = std::exp(-g * d.x[i]);
                cols(i, 0) = std::sin(w * d.x[i]) * e;
                cols(i, 1) = std::cos(w * d.x[i]) * e;
            }
            const auto [c, rss] = linear_fit(cols, y);
            if (rss < best) {
                best = rss;
                seed << std::hypot(c[0], c[1]), w, std::atan2(c[1], c[0]), g, c[2];
            }
        }
    }
    return seed;
}

Eigen::VectorXd seed_fringe(const Series &d) {
    const int m = static_cast<int>(d.x.size());
    Eigen::MatrixXd cols(m, 3);
    for (int i = 0; i < m; ++i) cols.row(i) << std::sin(d.x[i]), std::cos(d.x[i]), 1.0;
    const auto [c, rss] = linear_fit(cols, as_vector(d.y));
    Eigen::VectorXd seed(3);
    seed << std::hypot(c[0], c[1]), std::atan2(c[1], c[0]), c[2];
    return seed;
}

Eigen::VectorXd seed_decay(const Series &d) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < d.x.size(); ++i) {
        if (!(d.y[i] > 0.0)) continue;
        num += d.x[i] * std::log(d.y[i]);
        den += d.x[i] * d.x[i];
    }
    Eigen::VectorXd seed(1);
    seed << (den > 0.0 ? 1.0 - std::exp(num / den) : 0.0);
    return seed;
}

Eigen::VectorXd natural_scale(Model m, const Eigen::VectorXd &seed, const Series &d) {
    double ymax = 0.0;
    for (double v : d.y) ymax = std::max(ymax, std::abs(v));
    ymax = std::max(ymax, 1e-300);
    Eigen::VectorXd s(seed.size());
    switch (m) {
        case Model::Lineshape: s << std::abs(seed[0]) + ymax, std::abs(seed[1]), std::abs(seed[1]), ymax; break;
        case Model::Exchange: {
            const auto [lo, hi] = std::minmax_element(d.x.begin(), d.x.end());
            const double inv_span = 1.0 / std::max(*hi - *lo, 1e-300);
            s << ymax, std::abs(seed[1]) + inv_span, 1.0, inv_span, ymax;
            break;
        }
        case Model::Fringe: s << ymax, 1.0, ymax; break;
        case Model::Decay: s << 1.0; break;
    }
    return s;
}

void canonicalize(FitResult &r, const Series &d) {
    auto &p = r.params;
    switch (r.model) {
        case Model::Lineshape: p[1] = std::abs(p[1]); break;
        case Model::Exchange: {
            if (p[0] < 0) p[0] = -p[0], p[2] += pi;
            if (p[1] < 0) p[1] = -p[1], p[2] = pi - p[2];
            p[2] = wrap_phase(p[2]);
            const auto [lo, hi] = std::minmax_element(d.x.begin(), d.x.end());
            const double span = *hi - *lo;
            if (p[3] * span < 1e-9) {
                r.flags.push_back("tau_c_unbounded");
                r.derived["tau_c"] = std::numeric_limits<double>::infinity();
                r.derived_errors["tau_c"] = std::numeric_limits<double>::infinity();
            } else {
                r.derived["tau_c"] = 1.0 / p[3];
                r.derived_errors["tau_c"] = r.errors[3] / (p[3] * p[3]);
            }
            break;
        }
        case Model::Fringe: {
            if (p[0] < 0) p[0] = -p[0], p[1] += pi;
            p[1] = wrap_phase(p[1]);
            if (p[2] != 0.0) {
                r.derived["contrast"] = p[0] / p[2];
                r.derived_errors["contrast"] =
                    std::abs(p[0] / p[2]) * std::hypot(r.errors[0] / std::max(std::abs(p[0]), 1e-300), r.errors[2] / p[2]);
            }
            break;
        }
        case Model::Decay: break;
    }
}

}  // namespace

std::string model_name(Model m) {
    switch (m) {
        case Model::Lineshape: return "lineshape";
        case Model::Exchange: return "exchange";
        case Model::Fringe: return "fringe";
        case Model::Decay: return "decay";
    }
    return "unknown";
}

Model model_from_name(const std::string &name) {
    for (Model m : {Model::Lineshape, Model::Exchange, Model::Fringe, Model::Decay})
        if (model_name(m) == name) return m;
    throw ArgumentError("unknown fit model '" + name + "'");
}

std::vector<std::string> parameter_names(Model m) {
    switch (m) {
        case Model::Lineshape: return {"A", "Omega0", "omega0", "P0"};
        case Model::Exchange: return {"A", "OmegaC", "phi_c", "gamma", "y0"};
        case Model::Fringe: return {"B", "phi_f", "y0"};
        case Model::Decay: return {"epsilon"};
    }
    return {};
}

double FitResult::value(const std::string &name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return params[static_cast<Eigen::Index>(i)];
    if (auto it = derived.find(name); it != derived.end()) return it->second;
    throw ArgumentError("fit result has no parameter '" + name + "'");
}

double FitResult::error(const std::string &name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return errors[static_cast<Eigen::Index>(i)];
    if (auto it = derived_errors.find(name); it != derived_errors.end()) return it->second;
    throw ArgumentError("fit result has no parameter '" + name + "'");
}

bool FitResult::flagged(const std::string &flag) const {
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

double evaluate(Model m, const Eigen::VectorXd &params, double x, const FitOptions &options) {
    const Setup s{m, options, {}};
    if (params.size() != static_cast<Eigen::Index>(parameter_names(m).size()))
        throw ArgumentError("wrong number of parameters for model " + model_name(m));
    Eigen::RowVectorXd g(params.size());
    return model_gradient(s, params, x, g);
}

FitResult fit(const Series &data, Model m, const FitOptions &options) {
    const auto names = parameter_names(m);
    const int np = static_cast<int>(names.size());
    if (data.x.size() != data.y.size()) throw ArgumentError("fit series x and y differ in length");
    if (static_cast<int>(data.x.size()) < 2 * np)
        throw ArgumentError("fit needs at least twice as many points as parameters");
    for (size_t i = 0; i < data.x.size(); ++i)
        if (!std::isfinite(data.x[i]) || !std::isfinite(data.y[i])) throw ArgumentError("fit series is not finite");
    if (m == Model::Lineshape && !(options.pulse_duration > 0.0))
        throw ArgumentError("lineshape fit needs the pulse duration");

    Eigen::VectorXd p;
    switch (m) {
        case Model::Lineshape: p = seed_lineshape(data, options); break;
        case Model::Exchange: p = seed_exchange(data); break;
        case Model::Fringe: p = seed_fringe(data); break;
        case Model::Decay: p = seed_decay(data); break;
    }
    Setup s{m, options, natural_scale(m, p, data)};
    project(s, p);

    Eigen::MatrixXd jac;
    Eigen::VectorXd r = residuals(s, data, p, &jac);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    bool converged = cost == 0.0;
    int it = 0;
    for (; it < options.max_iterations && !converged; ++it) {
        const Eigen::MatrixXd h = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        Eigen::VectorXd diag = h.diagonal().cwiseMax(1e-300);
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd a = h;
            a.diagonal() += lambda * diag;
            Eigen::VectorXd step = -a.ldlt().solve(g);
            Eigen::VectorXd trial = p + step;
            project(s, trial);
            step = trial - p;
            Eigen::MatrixXd jt;
            const Eigen::VectorXd rt = residuals(s, data, trial, &jt);
            const double ct = rt.squaredNorm();
            if (std::isfinite(ct) && ct <= cost) {
                const bool small = (step.array().abs() <=
                                    options.step_tolerance * (trial.array().abs().max(s.scale.array())))
                                       .all();
                p = trial;
                r = rt;
                jac = jt;
                cost = ct;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                converged = small || cost == 0.0;
            } else {
                lambda *= 4.0;
                if (lambda > 1e16) {
                    // No descent direction left at machine precision.
                    accepted = true;
                    converged = true;
                }
            }
        }
    }

    FitResult out;
    out.model = m;
    out.names = names;
    out.params = p;
    out.iterations = it;
    out.converged = converged;
    out.residual_norm = std::sqrt(cost);
    const int dof = static_cast<int>(data.x.size()) - np;
    const Eigen::MatrixXd cov =
        (cost / dof) * (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();
    out.errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    canonicalize(out, data);
    if (!converged) throw FitFailure("fit did not converge within the iteration limit", out);
    return out;
}

}  // namespace ioncouple::fitting
