#pragma once

// Bounded-variable linear programs: representation, a two-phase primal
// simplex solver with Bland's pivoting rule, and a grid-enumeration oracle
// for certifying the solver on tiny instances.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace evsched::lp {

enum class Relation { LessEqual, Equal, GreaterEqual };

struct Term {
    std::size_t var;
    double coef;
};

struct Constraint {
    std::vector<Term> terms;  // sparse row; repeated indices are summed
    Relation relation = Relation::LessEqual;
    double rhs = 0.0;
};

struct Bounds {
    double lower = 0.0;
    double upper = 0.0;
};

/// minimize objective·x subject to constraints and lower ≤ x ≤ upper.
struct LinearProgram {
    std::vector<double> objective;
    std::vector<Bounds> bounds;
    std::vector<Constraint> constraints;

    std::size_t num_vars() const { return objective.size(); }

    std::size_t add_var(double lower, double upper, double cost = 0.0) {
        objective.push_back(cost);
        bounds.push_back({lower, upper});
        return objective.size() - 1;
    }

    void add_constraint(std::vector<Term> terms, Relation rel, double rhs) {
        constraints.push_back({std::move(terms), rel, rhs});
    }
};

enum class Status { Optimal, Infeasible };

struct LpSolution {
    Status status = Status::Infeasible;
    std::vector<double> values;
    double objective_value = 0.0;

    bool optimal() const { return status == Status::Optimal; }
};

inline constexpr double kFeasibilityTol = 1e-9;

class LpError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnboundedError : public LpError {
public:
    using LpError::LpError;
};

/// Throws LpError unless bounds are finite and ordered and every constraint
/// references a valid variable with a finite coefficient.
inline void check_well_formed(const LinearProgram& lp) {
    if (lp.bounds.size() != lp.objective.size()) throw LpError("bounds/objective size mismatch");
    for (std::size_t j = 0; j < lp.num_vars(); ++j) {
        const auto& b = lp.bounds[j];
        if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || b.lower > b.upper)
            throw LpError("variable " + std::to_string(j) + " has invalid bounds");
        if (!std::isfinite(lp.objective[j])) throw LpError("non-finite objective coefficient");
    }
    for (const auto& c : lp.constraints) {
        if (!std::isfinite(c.rhs)) throw LpError("non-finite right-hand side");
        for (const auto& t : c.terms)
            if (t.var >= lp.num_vars() || !std::isfinite(t.coef)) throw LpError("malformed constraint term");
    }
}

/// Largest violation of bounds and constraints at point x (absolute).
inline double max_violation(const LinearProgram& lp, const std::vector<double>& x) {
    double worst = 0.0;
    for (std::size_t j = 0; j < lp.num_vars(); ++j) {
        worst = std::max(worst, lp.bounds[j].lower - x[j]);
        worst = std::max(worst, x[j] - lp.bounds[j].upper);
    }
    for (const auto& c : lp.constraints) {
        double lhs = 0.0;
        for (const auto& t : c.terms) lhs += t.coef * x[t.var];
        const double r = lhs - c.rhs;
        if (c.relation == Relation::LessEqual) worst = std::max(worst, r);
        else if (c.relation == Relation::GreaterEqual) worst = std::max(worst, -r);
        else worst = std::max(worst, std::abs(r));
    }
    return worst;
}

inline double evaluate(const LinearProgram& lp, const std::vector<double>& x) {
    double v = 0.0;
    for (std::size_t j = 0; j < lp.num_vars(); ++j) v += lp.objective[j] * x[j];
    return v;
}

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-10;
constexpr double kTieTol = 1e-12;

// Dense tableau over columns [structural | slack | artificial]. Row i reads
// x_basis[i] + sum_j T[i][j] x_j = const for the nonbasic j.
class Simplex {
public:
    explicit Simplex(const LinearProgram& lp) : n_(lp.num_vars()), m_(lp.constraints.size()) {
        cols_ = n_ + m_;
        lower_.reserve(cols_ + m_);
        upper_.reserve(cols_ + m_);
        for (const auto& b : lp.bounds) {
            lower_.push_back(b.lower);
            upper_.push_back(b.upper);
        }
        // Row i: a_i·x + s_i = b_i with s_i in [0,inf) for <=, (-inf,0] for >=, {0} for =.
        for (const auto& c : lp.constraints) {
            switch (c.relation) {
            case Relation::LessEqual: lower_.push_back(0.0), upper_.push_back(kInf); break;
            case Relation::GreaterEqual: lower_.push_back(-kInf), upper_.push_back(0.0); break;
            case Relation::Equal: lower_.push_back(0.0), upper_.push_back(0.0); break;
            }
        }

        // Original dense rows, kept for the final recomputation of basic values.
        a_.assign(m_, std::vector<double>(n_, 0.0));
        rhs_.resize(m_);
        for (std::size_t i = 0; i < m_; ++i) {
            for (const auto& t : lp.constraints[i].terms) a_[i][t.var] += t.coef;
            rhs_[i] = lp.constraints[i].rhs;
        }

        x_.assign(cols_, 0.0);
        at_upper_.assign(cols_, false);
        for (std::size_t j = 0; j < n_; ++j) x_[j] = lower_[j];
        for (std::size_t j = n_; j < cols_; ++j) {
            // Slacks start nonbasic at their finite bound (0 in every case).
            x_[j] = 0.0;
            at_upper_[j] = std::isinf(lower_[j]);
        }

        // Choose the initial basis: the slack when the residual fits its bounds,
        // an artificial otherwise.
        basis_.resize(m_);
        art_sign_.clear();
        std::vector<std::size_t> art_rows;
        for (std::size_t i = 0; i < m_; ++i) {
            double r = rhs_[i];
            for (std::size_t j = 0; j < n_; ++j) r -= a_[i][j] * x_[j];
            const std::size_t s = n_ + i;
            if (r >= lower_[s] && r <= upper_[s]) {
                basis_[i] = s;
                x_[s] = r;
            } else {
                art_rows.push_back(i);
            }
        }
        const std::size_t n_art = art_rows.size();
        const std::size_t total = cols_ + n_art;
        tab_.assign(m_, std::vector<double>(total, 0.0));
        for (std::size_t i = 0; i < m_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) tab_[i][j] = a_[i][j];
            tab_[i][n_ + i] = 1.0;
        }
        art_col_.assign(m_, npos);
        for (std::size_t k = 0; k < n_art; ++k) {
            const std::size_t i = art_rows[k];
            double r = rhs_[i];
            for (std::size_t j = 0; j < n_; ++j) r -= a_[i][j] * x_[j];
            const double sign = r >= 0.0 ? 1.0 : -1.0;
            const std::size_t col = cols_ + k;
            // Scale the row by sign so the artificial enters with coefficient 1.
            for (auto& v : tab_[i]) v *= sign;
            tab_[i][col] = 1.0;
            lower_.push_back(0.0);
            upper_.push_back(kInf);
            x_.push_back(std::abs(r));
            at_upper_.push_back(false);
            basis_[i] = col;
            art_col_[i] = col;
            art_sign_.push_back(sign);
        }
        total_ = total;
        in_basis_.assign(total_, false);
        for (auto b : basis_) in_basis_[b] = true;
    }

    // Returns false when infeasible. Throws UnboundedError if phase 2 is unbounded.
    bool run(const std::vector<double>& objective) {
        double scale = 1.0;
        for (double b : rhs_) scale = std::max(scale, std::abs(b));
        if (total_ > cols_) {
            std::vector<double> c1(total_, 0.0);
            for (std::size_t j = cols_; j < total_; ++j) c1[j] = 1.0;
            iterate(c1, /*phase1=*/true);
            double infeas = 0.0;
            for (std::size_t j = cols_; j < total_; ++j) infeas += x_[j];
            if (infeas > kFeasibilityTol * scale) return false;
            // Fix artificials at zero and pivot the basic ones out where possible.
            for (std::size_t j = cols_; j < total_; ++j) {
                lower_[j] = upper_[j] = 0.0;
                x_[j] = 0.0;
                at_upper_[j] = false;
            }
            for (std::size_t i = 0; i < m_; ++i) {
                if (basis_[i] < cols_) continue;
                std::size_t best = npos;
                double best_abs = 1e-7;
                for (std::size_t j = 0; j < cols_; ++j) {
                    if (in_basis_[j] || lower_[j] == upper_[j]) continue;
                    if (std::abs(tab_[i][j]) > best_abs) {
                        best_abs = std::abs(tab_[i][j]);
                        best = j;
                    }
                }
                if (best != npos) pivot(i, best, /*leaving_at_upper=*/false);
            }
        }
        std::vector<double> c2(total_, 0.0);
        std::copy(objective.begin(), objective.end(), c2.begin());
        iterate(c2, /*phase1=*/false);
        refine();
        return true;
    }

    // After an optimal run on `primary`: fixes every nonbasic column with a
    // nonzero reduced cost, which confines further moves to the optimal face,
    // then minimizes `secondary` there.
    void run_on_optimal_face(const std::vector<double>& primary, const std::vector<double>& secondary) {
        std::vector<double> c(total_, 0.0);
        std::copy(primary.begin(), primary.end(), c.begin());
        const auto d = reduced_costs(c);
        for (std::size_t j = 0; j < cols_; ++j)
            if (!in_basis_[j] && std::abs(d[j]) > kCostTol) lower_[j] = upper_[j] = x_[j];
        std::fill(c.begin(), c.end(), 0.0);
        std::copy(secondary.begin(), secondary.end(), c.begin());
        iterate(c, /*phase1=*/false);
        refine();
    }

    std::vector<double> structural_values() const {
        std::vector<double> out(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_));
        for (std::size_t j = 0; j < n_; ++j) out[j] = std::clamp(out[j], lower_[j], upper_[j]);
        return out;
    }

    std::size_t iterations() const { return iterations_; }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    // d_j = c_j - c_B^T T_j.
    std::vector<double> reduced_costs(const std::vector<double>& cost) const {
        std::vector<double> d(cost);
        for (std::size_t i = 0; i < m_; ++i) {
            const double cb = cost[basis_[i]];
            if (cb == 0.0) continue;
            const auto& row = tab_[i];
            for (std::size_t j = 0; j < total_; ++j) d[j] -= cb * row[j];
        }
        return d;
    }

    void iterate(const std::vector<double>& cost, bool phase1) {
        const std::size_t max_iter = 200000;
        for (;;) {
            if (++iterations_ > max_iter) throw LpError("simplex iteration limit exceeded");
            const auto d = reduced_costs(cost);
            // Bland: lowest-index improving nonbasic column.
            std::size_t enter = npos;
            double dir = 0.0;
            for (std::size_t j = 0; j < total_; ++j) {
                if (in_basis_[j] || lower_[j] == upper_[j]) continue;
                if (!phase1 && j >= cols_) continue;
                if (!at_upper_[j] && d[j] < -kCostTol && upper_[j] > x_[j]) {
                    enter = j, dir = 1.0;
                    break;
                }
                if (at_upper_[j] && d[j] > kCostTol && lower_[j] < x_[j]) {
                    enter = j, dir = -1.0;
                    break;
                }
            }
            if (enter == npos) return;

            // Ratio test; ties go to the lowest-index leaving variable, and a
            // bound flip wins over a tied pivot.
            double theta = kInf;
            std::size_t leave_row = npos;
            bool leave_to_upper = false;
            for (std::size_t i = 0; i < m_; ++i) {
                const double alpha = tab_[i][enter] * dir;
                const std::size_t b = basis_[i];
                double limit;
                bool to_upper;
                if (alpha > kPivotTol) {
                    if (std::isinf(lower_[b])) continue;
                    limit = (x_[b] - lower_[b]) / alpha;
                    to_upper = false;
                } else if (alpha < -kPivotTol) {
                    if (std::isinf(upper_[b])) continue;
                    limit = (upper_[b] - x_[b]) / -alpha;
                    to_upper = true;
                } else {
                    continue;
                }
                limit = std::max(limit, 0.0);
                if (limit < theta - kTieTol ||
                    (limit <= theta + kTieTol && leave_row != npos && b < basis_[leave_row])) {
                    theta = limit;
                    leave_row = i;
                    leave_to_upper = to_upper;
                }
            }
            const double flip = upper_[enter] - lower_[enter];
            if (flip <= theta + kTieTol) {
                theta = flip;
                leave_row = npos;
            }
            if (std::isinf(theta)) {
                if (phase1) throw LpError("phase-1 objective unbounded (internal error)");
                throw UnboundedError("linear program is unbounded");
            }

            // Move along the edge.
            const double step = dir * theta;
            x_[enter] += step;
            for (std::size_t i = 0; i < m_; ++i) x_[basis_[i]] -= tab_[i][enter] * step;

            if (leave_row == npos) {
                at_upper_[enter] = dir > 0.0;
                x_[enter] = at_upper_[enter] ? upper_[enter] : lower_[enter];
            } else {
                pivot(leave_row, enter, leave_to_upper);
            }
        }
    }

    void pivot(std::size_t r, std::size_t enter, bool leaving_at_upper) {
        const std::size_t leave = basis_[r];
        x_[leave] = leaving_at_upper ? upper_[leave] : lower_[leave];
        at_upper_[leave] = leaving_at_upper;
        in_basis_[leave] = false;

        auto& prow = tab_[r];
        const double p = prow[enter];
        for (auto& v : prow) v /= p;
        for (std::size_t i = 0; i < m_; ++i) {
            if (i == r) continue;
            const double f = tab_[i][enter];
            if (f == 0.0) continue;
            auto& row = tab_[i];
            for (std::size_t j = 0; j < total_; ++j) row[j] -= f * prow[j];
            row[enter] = 0.0;
        }
        basis_[r] = enter;
        in_basis_[enter] = true;
        at_upper_[enter] = false;
    }

    // Column j of the original system [A | I | sign-scaled artificials].
    double column_entry(std::size_t i, std::size_t j) const {
        if (j < n_) return a_[i][j];
        if (j < cols_) return j - n_ == i ? 1.0 : 0.0;
        return art_col_[i] == j ? art_sign_[j - cols_] : 0.0;
    }

    // Recompute basic values from the original rows: B x_B = b - N x_N.
    void refine() {
        if (m_ == 0) return;
        std::vector<std::vector<double>> bmat(m_, std::vector<double>(m_ + 1, 0.0));
        for (std::size_t i = 0; i < m_; ++i) {
            double r = rhs_[i];
            for (std::size_t j = 0; j < total_; ++j)
                if (!in_basis_[j]) r -= column_entry(i, j) * x_[j];
            for (std::size_t k = 0; k < m_; ++k) bmat[i][k] = column_entry(i, basis_[k]);
            bmat[i][m_] = r;
        }
        // Gaussian elimination with partial pivoting.
        for (std::size_t c = 0; c < m_; ++c) {
            std::size_t piv = c;
            for (std::size_t i = c + 1; i < m_; ++i)
                if (std::abs(bmat[i][c]) > std::abs(bmat[piv][c])) piv = i;
            if (std::abs(bmat[piv][c]) < 1e-12) return;  // keep incremental values
            std::swap(bmat[piv], bmat[c]);
            for (std::size_t i = c + 1; i < m_; ++i) {
                const double f = bmat[i][c] / bmat[c][c];
                if (f == 0.0) continue;
                for (std::size_t k = c; k <= m_; ++k) bmat[i][k] -= f * bmat[c][k];
            }
        }
        std::vector<double> xb(m_);
        for (std::size_t c = m_; c-- > 0;) {
            double v = bmat[c][m_];
            for (std::size_t k = c + 1; k < m_; ++k) v -= bmat[c][k] * xb[k];
            xb[c] = v / bmat[c][c];
        }
        for (std::size_t k = 0; k < m_; ++k) x_[basis_[k]] = xb[k];
    }

    std::size_t n_, m_, cols_ = 0, total_ = 0;
    std::vector<std::vector<double>> a_;
    std::vector<double> rhs_;
    std::vector<std::vector<double>> tab_;
    std::vector<double> lower_, upper_, x_;
    std::vector<bool> at_upper_, in_basis_;
    std::vector<std::size_t> basis_, art_col_;
    std::vector<double> art_sign_;
    std::size_t iterations_ = 0;
};

}  // namespace detail

/// Solves the program exactly (up to floating point). Deterministic.
/// Throws UnboundedError for unbounded objectives, LpError for malformed input.
inline LpSolution solve(const LinearProgram& lp) {
    check_well_formed(lp);
    detail::Simplex simplex(lp);
    LpSolution sol;
    if (!simplex.run(lp.objective)) {
        sol.status = Status::Infeasible;
        return sol;
    }
    sol.status = Status::Optimal;
    sol.values = simplex.structural_values();
    sol.objective_value = evaluate(lp, sol.values);
    return sol;
}

/// Lexicographic optimum: among the optimal points of `lp`, one that
/// minimizes tie_breaks[0], among those one minimizing tie_breaks[1], and so
/// on. Picks a canonical point when the optimum is not unique.
inline LpSolution solve_lexicographic(const LinearProgram& lp, const std::vector<std::vector<double>>& tie_breaks) {
    check_well_formed(lp);
    for (const auto& c : tie_breaks)
        if (c.size() != lp.num_vars()) throw LpError("tie-break objective has the wrong length");
    detail::Simplex simplex(lp);
    LpSolution sol;
    if (!simplex.run(lp.objective)) {
        sol.status = Status::Infeasible;
        return sol;
    }
    const std::vector<double>* previous = &lp.objective;
    for (const auto& c : tie_breaks) {
        simplex.run_on_optimal_face(*previous, c);
        previous = &c;
    }
    sol.status = Status::Optimal;
    sol.values = simplex.structural_values();
    sol.objective_value = evaluate(lp, sol.values);
    return sol;
}

class InstanceTooLarge : public LpError {
public:
    using LpError::LpError;
};

/// Enumerates `grid_points` evenly spaced values per variable over its bound
/// interval and returns the best feasible grid point. Only exact when the
/// optimal vertex lies on the grid; intended as a test oracle.
inline LpSolution brute_force_oracle(const LinearProgram& lp, int grid_points) {
    check_well_formed(lp);
    const std::size_t n = lp.num_vars();
    if (n > 8 || grid_points > 21 || grid_points < 1)
        throw InstanceTooLarge("oracle limited to <= 8 variables and 1..21 grid points");

    std::vector<std::vector<double>> axis(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto [lo, hi] = lp.bounds[j];
        for (int k = 0; k < grid_points; ++k) {
            axis[j].push_back(grid_points == 1 ? lo
                                               : k == grid_points - 1
                                                     ? hi
                                                     : lo + (hi - lo) * static_cast<double>(k) / (grid_points - 1));
        }
    }

    LpSolution best;
    std::vector<std::size_t> idx(n, 0);
    std::vector<double> x(n);
    for (;;) {
        for (std::size_t j = 0; j < n; ++j) x[j] = axis[j][idx[j]];
        if (max_violation(lp, x) <= kFeasibilityTol) {
            const double v = evaluate(lp, x);
            if (!best.optimal() || v < best.objective_value) {
                best.status = Status::Optimal;
                best.values = x;
                best.objective_value = v;
            }
        }
        std::size_t j = 0;
        while (j < n && ++idx[j] == axis[j].size()) idx[j++] = 0;
        if (j == n) break;
    }
    return best;
}

}  // namespace evsched::lp
