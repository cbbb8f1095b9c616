"""Linear solves used by the time stepper.

Two entry points: conjugate gradients for the symmetric positive
(semi-)definite pressure and mass solves, and a sparse LU factorization
for the nonsymmetric momentum systems.  Both verify the final residual
against the requested tolerance with a fresh matrix-vector product and
raise LinearSolveError (carrying the achieved residual) instead of
returning a silently inaccurate solution.

The conjugate gradient loop is written out rather than delegated so the
iteration cap (10 times the system size) and the zero-mean handling of the
singular pressure Poisson operator are exactly as documented: the right
side is first projected onto the complement of the constant vector, and
the mass-weighted mean of the solution is removed afterwards.
"""

import numpy as np

__all__ = ["LinearSolveError", "solve_spd", "solve_momentum"]


class LinearSolveError(RuntimeError):
    """Solve failed to reach its tolerance; .residual holds the relative
    residual that was achieved."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def _cg(A, b, x, tol_abs, max_iter):
    """Plain conjugate gradients from initial guess x; returns (x, iters)."""
    r = b - A @ x
    p = r.copy()
    rs = float(r @ r)
    it = 0
    while np.sqrt(rs) > tol_abs:
        if it >= max_iter:
            return x, it, False
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0 or not np.isfinite(pAp):
            raise LinearSolveError(
                "conjugate gradients hit a non-positive curvature direction "
                "(operator is not positive definite on this subspace)",
                residual=np.sqrt(rs),
            )
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1
    return x, it, True


def solve_spd(A, b, tol=1e-12, zero_mean=False, mass=None):
    """Conjugate gradient solve of a symmetric positive (semi-)definite
    system to relative residual tol.

    zero_mean handles the pure-Neumann pressure Poisson operator, whose
    kernel is the constant vector: the right side is projected onto the
    complement of that kernel, and the returned solution has zero
    mass-weighted mean (plain mean when no mass matrix is supplied).

    The iteration count is capped at 10 times the system size; the final
    residual is recomputed from scratch, and failure to meet the tolerance
    raises LinearSolveError with the achieved residual attached.
    """
    b = np.asarray(b, dtype=float).copy()
    n = b.size
    if zero_mean:
        b -= b.mean()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n)
    tol_abs = tol * bnorm
    budget = 10 * n
    x = np.zeros(n)
    used = 0
    # restart on the recomputed residual: the recurrence residual can
    # drift from the true one after many iterations
    while True:
        x, it, converged = _cg(A, b, x, tol_abs, budget - used)
        used += max(it, 1)
        true_res = float(np.linalg.norm(b - A @ x))
        if not np.isfinite(true_res):
            raise LinearSolveError("conjugate gradients produced non-finite values")
        if true_res <= tol_abs:
            break
        if used >= budget:
            raise LinearSolveError(
                "conjugate gradients failed to reach relative residual %.1e "
                "within %d iterations (achieved %.3e)" % (tol, budget, true_res / bnorm),
                residual=true_res / bnorm,
            )
    if zero_mean:
        if mass is not None:
            ones = np.ones(n)
            w = mass @ ones
            x -= float(w @ x) / float(w @ ones)
        else:
            x -= x.mean()
    return x


def solve_momentum(A, b, tol=1e-12):
    """Direct sparse LU solve of a momentum system to relative residual
    tol, with iterative refinement as a safety margin.  Raises
    LinearSolveError when the factorization cannot deliver the tolerance
    (singular system, catastrophic conditioning)."""
    from scipy.sparse.linalg import splu

    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        raise LinearSolveError("momentum matrix factorization failed: %s" % exc) from exc
    x = lu.solve(b)
    for _ in range(3):
        r = b - A @ x
        res = float(np.linalg.norm(r))
        if not np.isfinite(res):
            raise LinearSolveError("momentum solve produced non-finite values")
        if res <= tol * bnorm:
            return x
        x = x + lu.solve(r)
    res = float(np.linalg.norm(b - A @ x))
    if res <= tol * bnorm:
        return x
    raise LinearSolveError(
        "momentum solve stalled at relative residual %.3e (tolerance %.1e)"
        % (res / bnorm, tol),
        residual=res / bnorm,
    )
