"""Dense two-phase simplex solver for the fluid-allocation linear programs.

Problems are stated as max/min c'x subject to rows A_i x {<=,=,>=} b_i and
x >= 0. Internally the solver works on the standard equality form with slack
and surplus columns, runs phase 1 with artificial variables, and pivots by
steepest reduced cost (Dantzig), falling back to Bland's least-index rule
after a degenerate stall so cycling cannot occur. Duals are recovered from
the final basis and optimality is certified by complementary-slackness
residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InvalidArgument, LpInfeasible, LpUnbounded

_TOL = 1e-9
_FEAS_TOL = 1e-7
_STALL_LIMIT = 200


@dataclass
class LpProblem:
    """max/min objective'x  s.t.  A x (senses) b,  x >= 0."""

    objective: np.ndarray
    A: np.ndarray
    senses: list[str]                 # per row: "<=", "=", ">="
    b: np.ndarray
    maximize: bool = True
    var_names: list[str] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)
    name: str = "lp"

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        m, n = self.A.shape
        if self.objective.shape != (n,) or self.b.shape != (m,) or len(self.senses) != m:
            raise InvalidArgument("LP dimension mismatch")
        if not (np.isfinite(self.objective).all() and np.isfinite(self.A).all()
                and np.isfinite(self.b).all()):
            raise InvalidArgument("LP has non-finite coefficients")
        for s in self.senses:
            if s not in ("<=", "=", ">="):
                raise InvalidArgument(f"unknown row sense {s!r}")
        if not self.var_names:
            self.var_names = [f"x{j}" for j in range(n)]
        if not self.row_names:
            self.row_names = [f"r{i}" for i in range(m)]
        if len(self.var_names) != n or len(set(self.var_names)) != n:
            raise InvalidArgument("variable names must be unique and match columns")
        if len(self.row_names) != m or len(set(self.row_names)) != m:
            raise InvalidArgument("row names must be unique and match rows")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Signed constraint violations (0 when satisfied)."""
        ax = self.A @ x
        out = np.zeros(len(self.b))
        for i, s in enumerate(self.senses):
            if s == "<=":
                out[i] = max(ax[i] - self.b[i], 0.0)
            elif s == ">=":
                out[i] = max(self.b[i] - ax[i], 0.0)
            else:
                out[i] = abs(ax[i] - self.b[i])
        return out


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    duals: np.ndarray
    reduced_costs: np.ndarray
    iterations: int
    basis: np.ndarray

    def variables(self, problem: LpProblem) -> dict[str, float]:
        return dict(zip(problem.var_names, self.x.tolist()))


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    piv = T[row]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, piv)
    T[:, col] = 0.0
    T[row, col] = 1.0
    basis[row] = col


def _run_simplex(T: np.ndarray, basis: np.ndarray, ncols: int) -> int:
    """Minimize the objective in the last tableau row over the first `ncols`
    columns; returns the iteration count. Raises on unboundedness."""
    m = T.shape[0] - 1
    iters = 0
    stall = 0
    bland = False
    last_obj = T[-1, -1]
    while True:
        red = T[-1, :ncols]
        if bland:
            cand = np.nonzero(red < -_TOL)[0]
            if cand.size == 0:
                return iters
            col = int(cand[0])
        else:
            if red.min() >= -_TOL:
                return iters
            # price by reduced cost per unit step length (steepest-edge-like):
            # plain most-negative pricing stalls badly on degenerate fleet LPs
            norms = np.sqrt(1.0 + np.einsum("ij,ij->j", T[:m, :ncols], T[:m, :ncols]))
            col = int(np.argmin(red / norms))
        ratios = np.full(m, np.inf)
        pos = T[:m, col] > _TOL
        ratios[pos] = T[:m, -1][pos] / T[:m, col][pos]
        row = int(np.argmin(ratios))
        if not np.isfinite(ratios[row]):
            raise LpUnbounded("objective unbounded along entering column")
        minr = ratios[row]
        ties = np.nonzero(ratios <= minr + _TOL)[0]
        if bland:
            # least-index leaving variable among minimal ratios
            row = int(ties[np.argmin(basis[ties])])
        elif ties.size > 1:
            # break degenerate ties on the largest pivot element for stability
            row = int(ties[np.argmax(np.abs(T[ties, col]))])
        _pivot(T, basis, row, col)
        iters += 1
        # the objective cell holds the negated objective value, so progress
        # on the minimization shows up as an increase here
        if T[-1, -1] > last_obj + _TOL:
            last_obj = T[-1, -1]
            stall = 0
            bland = False          # degenerate vertex escaped; back to Dantzig
        else:
            stall += 1
            if stall > _STALL_LIMIT:
                bland = True
        if iters > 50000 + 50 * (m + ncols):
            raise ContractViolation("simplex iteration limit exceeded")


def solve(problem: LpProblem) -> LpSolution:
    """Two-phase simplex. Raises LpInfeasible / LpUnbounded."""
    try:
        return _solve(problem, perturb=True)
    except ContractViolation:
        # rare: the anti-degeneracy perturbation landed on a basis that does
        # not restore cleanly; redo the exact (slower) run before giving up
        return _solve(problem, perturb=False)


def _solve(problem: LpProblem, perturb: bool) -> LpSolution:
    m, n = problem.shape
    sign = -1.0 if problem.maximize else 1.0
    c = sign * problem.objective                      # minimize internally

    # standard form: append slack (<=) / surplus (>=) columns, b >= 0
    A = problem.A.copy()
    b = problem.b.copy()
    extra: list[np.ndarray] = []
    senses = list(problem.senses)
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0
            senses[i] = {"<=": ">=", ">=": "<=", "=": "="}[senses[i]]
    for i, s in enumerate(senses):
        if s in ("<=", ">="):
            col = np.zeros(m)
            col[i] = 1.0 if s == "<=" else -1.0
            extra.append(col)
    A_std = np.hstack([A] + [e[:, None] for e in extra]) if extra else A
    n_std = A_std.shape[1]
    c_std = np.concatenate([c, np.zeros(n_std - n)])
    bscale = max(1.0, float(b.max(initial=0.0)))
    # deterministic positive jitter of the basic values: fleet LPs have mostly
    # zero right-hand sides, and the untreated tableau stalls on degenerate
    # pivots for tens of thousands of iterations; with every basic variable
    # strictly positive each pivot makes real progress.  The exact solution is
    # recovered from the final basis afterwards.
    rng = np.random.default_rng(181201)
    eps = 1e-7 * bscale * rng.uniform(0.5, 1.5, size=m) if perturb else np.zeros(m)

    # phase 1: artificial basis.  The artificial block stays in the tableau
    # throughout (pricing never scans it after phase 1) so the running basis
    # inverse T[:, n_std:total] is always available for exact restoration.
    total = n_std + m
    T = np.zeros((m + 1, total + 1))
    T[:m, :n_std] = A_std
    T[:m, n_std:total] = np.eye(m)
    T[:m, -1] = b + eps
    basis = np.arange(n_std, total)
    T[-1, :total] = -T[:m, :total].sum(axis=0)
    T[-1, n_std:total] = 0.0                        # phase-1 reduced costs
    T[-1, -1] = -T[:m, -1].sum()
    it1 = _run_simplex(T, basis, n_std)             # artificials never re-enter
    if T[-1, -1] < -(_FEAS_TOL * bscale + 1e3 * eps.sum()):
        if perturb:
            # jittering equality right-hand sides can make a feasible system
            # inconsistent; only the exact run may declare infeasibility
            raise ContractViolation("perturbed phase 1 ended infeasible")
        raise LpInfeasible(f"{problem.name}: phase-1 objective {-T[-1, -1]:.3e} > 0")
    # a residual phase-1 objective within the inconsistency budget of the
    # jitter is fine: the exact restoration below checks the true artificial
    # mass against the unperturbed right-hand side
    if perturb:
        # restore the true right-hand side through the basis inverse
        T[:m, -1] = T[:m, n_std:total] @ b
        art = basis >= n_std
        art_mass = float(np.abs(T[:m, -1][art]).sum()) if art.any() else 0.0
        if art_mass > _FEAS_TOL * bscale:
            # borderline: cannot distinguish infeasibility from perturbation
            # damage here; the exact retry settles it
            raise ContractViolation(
                f"{problem.name}: artificial mass {art_mass:.3e} after phase 1")
        if T[:m, -1].min(initial=0.0) < -_FEAS_TOL * bscale:
            raise ContractViolation(f"{problem.name}: basis lost feasibility")
        np.clip(T[:m, -1], 0.0, None, out=T[:m, -1])

    # drive any residual artificials out of the basis; drop redundant rows
    keep_rows = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n_std:
            cand = np.nonzero(np.abs(T[i, :n_std]) > _TOL)[0]
            if cand.size:
                _pivot(T, basis, i, int(cand[0]))
            else:
                keep_rows[i] = False
    if not keep_rows.all():
        rows = np.append(np.nonzero(keep_rows)[0], m)
        T = T[rows]
        basis = basis[keep_rows]
    mm = T.shape[0] - 1

    # phase 2 on the same tableau, fresh jitter of the basic values
    if perturb:
        T[:mm, -1] += 1e-7 * bscale * rng.uniform(0.5, 1.5, size=mm)
    T[-1, :] = 0.0
    T[-1, :n_std] = c_std
    for i, bi in enumerate(basis):
        T[-1, :] -= c_std[bi] * T[i, :]
    it2 = _run_simplex(T, basis, n_std)

    # exact solution and duals from the final basis: B x_B = b, B' y = c_B
    rows_kept = np.nonzero(keep_rows)[0]
    B = A_std[np.ix_(rows_kept, basis)]
    x_basic = np.linalg.solve(B, b[rows_kept])
    if x_basic.min(initial=0.0) < -_FEAS_TOL * bscale:
        raise ContractViolation(
            f"{problem.name}: basic value {x_basic.min():.3e} negative at optimum")
    x_std = np.zeros(n_std)
    x_std[basis] = np.maximum(x_basic, 0.0)
    x = x_std[:n]
    obj = float(problem.objective @ x)

    y = np.zeros(m)
    y[rows_kept] = np.linalg.solve(B.T, c_std[basis])
    rc_std = c_std - A_std.T @ y

    _certify(problem, A, b, senses, x_std, y, rc_std, n)

    # map duals / reduced costs back to the user's rows and objective sense
    flip = np.where(problem.b < 0, -1.0, 1.0)
    duals = sign * flip * y
    reduced = sign * rc_std[:n]
    return LpSolution(x, obj, duals, reduced, it1 + it2, basis.copy())


def _certify(problem: LpProblem, A_flip, b_flip, senses, x_std, y, rc_std, n,
             tol: float = 1e-8) -> None:
    """Independent optimality certificate on the standard-form system:
    primal feasibility, dual feasibility, and complementary slackness."""
    x = x_std[:n]
    scale = max(1.0, float(np.abs(b_flip).max(initial=0.0)),
                float(np.abs(x).max(initial=0.0)))
    res = problem.residuals(x)
    if res.max(initial=0.0) > tol * scale:
        raise ContractViolation(
            f"{problem.name}: primal residual {res.max():.3e} exceeds tolerance")
    if (x < -tol * scale).any():
        raise ContractViolation(f"{problem.name}: negative variable in solution")
    cscale = max(1.0, float(np.abs(rc_std).max(initial=0.0)))
    if rc_std.min(initial=0.0) < -1e-7 * cscale:
        raise ContractViolation(
            f"{problem.name}: dual infeasibility {rc_std.min():.3e}")
    if np.abs(rc_std * x_std).max(initial=0.0) > 1e-6 * scale * cscale:
        raise ContractViolation(f"{problem.name}: complementary slackness violated")
    ax = A_flip @ x
    for i, s in enumerate(senses):
        if s == "=":
            continue
        slack = b_flip[i] - ax[i] if s == "<=" else ax[i] - b_flip[i]
        if abs(y[i] * slack) > 1e-6 * scale * max(1.0, abs(y[i])):
            raise ContractViolation(
                f"{problem.name}: dual-slack product {y[i] * slack:.3e} at row {i}")


# -- MPS export ----------------------------------------------------------------


def export_mps(problem: LpProblem, path) -> None:
    """Fixed-format MPS with index-mangled names (<= 8 characters)."""
    m, n = problem.shape
    rname = [f"R{i:07d}" for i in range(m)]
    cname = [f"C{j:07d}" for j in range(n)]
    sense_code = {"<=": "L", "=": "E", ">=": "G"}
    lines = [f"NAME          {problem.name[:8].upper():<8}", "ROWS", " N  COST"]
    for i in range(m):
        lines.append(f" {sense_code[problem.senses[i]]}  {rname[i]}")
    lines.append("COLUMNS")
    sign = -1.0 if problem.maximize else 1.0        # MPS minimizes by convention
    for j in range(n):
        entries = []
        if problem.objective[j] != 0.0:
            entries.append(("COST", sign * problem.objective[j]))
        for i in np.nonzero(problem.A[:, j])[0]:
            entries.append((rname[i], problem.A[i, j]))
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            row = f"    {cname[j]:<8}  "
            row += "   ".join(f"{rn:<8}  {val:.12G}" for rn, val in pair)
            lines.append(row)
    lines.append("RHS")
    for i in range(m):
        if problem.b[i] != 0.0:
            lines.append(f"    RHS       {rname[i]:<8}  {problem.b[i]:.12G}")
    lines.append("BOUNDS")
    lines.append("ENDATA")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
