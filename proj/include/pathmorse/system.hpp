#pragma once

#include "error.hpp"
#include "types.hpp"

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace pathmorse {

/// Potential energy V(r) as a polynomial in the radial distance r.
///
/// Named catalog: "zero", "constant:<c>", "radial:<c0>,<c1>,..." with
/// V(r) = c0 + c1 r + c2 r^2 + ...
class Potential {
public:
    Potential() = default;
    explicit Potential(std::vector<double> coefficients) : coeffs_(std::move(coefficients)) {}

    static Potential zero() { return Potential{}; }
    static Potential constant(double c) { return Potential{{c}}; }

    static Potential parse(std::string_view spec) {
        if (spec == "zero") return zero();
        auto colon = spec.find(':');
        if (colon == std::string_view::npos)
            throw Error(ErrorKind::ConfigInvalid, "unknown potential '" + std::string(spec) + "'");
        std::string_view kind = spec.substr(0, colon);
        std::string_view rest = spec.substr(colon + 1);
        std::vector<double> values;
        while (!rest.empty()) {
            auto comma = rest.find(',');
            std::string token(rest.substr(0, comma));
            try {
                std::size_t used = 0;
                values.push_back(std::stod(token, &used));
                if (used != token.size()) throw std::invalid_argument(token);
            } catch (const std::exception&) {
                throw Error(ErrorKind::ConfigInvalid, "bad potential coefficient '" + token + "'");
            }
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        if (kind == "constant" && values.size() == 1) return constant(values.front());
        if (kind == "radial" && !values.empty()) return Potential{std::move(values)};
        throw Error(ErrorKind::ConfigInvalid, "unknown potential '" + std::string(spec) + "'");
    }

    [[nodiscard]] double value(double r) const {
        double acc = 0.0;
        for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * r + *it;
        return acc;
    }

    [[nodiscard]] double derivative(double r) const {
        double acc = 0.0;
        for (std::size_t i = coeffs_.size(); i-- > 1;) acc = acc * r + static_cast<double>(i) * coeffs_[i];
        return acc;
    }

    [[nodiscard]] std::string name() const {
        if (coeffs_.empty()) return "zero";
        std::string out = "radial:";
        for (std::size_t i = 0; i < coeffs_.size(); ++i) {
            if (i) out += ',';
            char buf[64];
            auto res = std::to_chars(buf, buf + sizeof buf, coeffs_[i]);
            out.append(buf, res.ptr);
        }
        return out;
    }

    [[nodiscard]] const std::vector<double>& coefficients() const { return coeffs_; }

private:
    std::vector<double> coeffs_;
};

/// A particle of mass m with conserved total energy E = T + V.
struct ConservativeSystem {
    double mass = 2.0;
    double energy = 1.0;
    Potential potential;
    double degeneracy_tolerance = 1e-12;

    void validate() const {
        if (!(mass > 0.0)) throw Error(ErrorKind::NonphysicalSystem, "mass must be positive");
    }

    /// m (E - 2V)^2 / (2 (E - V)), the scalar multiplying the base metric.
    [[nodiscard]] double conformal_factor(double r) const {
        validate();
        const double v = potential.value(r);
        const double kinetic = energy - v;
        if (!(kinetic > 0.0))
            throw Error(ErrorKind::NonphysicalSystem, "E - V(x) = " + std::to_string(kinetic) + " is not positive");
        const double numer = energy - 2.0 * v;
        if (std::abs(numer) < degeneracy_tolerance * std::abs(energy))
            throw Error(ErrorKind::DegenerateMetric, "E - 2V(x) vanishes; dressed metric is degenerate");
        return mass * numer * numer / (2.0 * kinetic);
    }

    /// d/dr of conformal_factor.
    [[nodiscard]] double conformal_factor_derivative(double r) const {
        const double v = potential.value(r);
        const double dv = potential.derivative(r);
        const double kinetic = energy - v;
        const double numer = energy - 2.0 * v;
        return mass * dv * numer * (2.0 * v - 3.0 * energy) / (2.0 * kinetic * kinetic);
    }
};

/// Dressed metric g_ab = m (E - 2V)^2 / (2 (E - V)) eta_ab at a point of radial distance r.
inline Mat dressed_metric(const ConservativeSystem& system, double r, const Mat& eta) {
    return system.conformal_factor(r) * eta;
}

}  // namespace pathmorse
