"""Second-order pressure-correction time stepping.

The stepper advances two velocity fields: the H1-conforming intermediate
velocity from the momentum solve, and the weakly divergence-free end-of-
step velocity

    u = u_tilde + grad(phi),

which lives in the sum of the velocity space and pressure gradients.  That
sum never gets a global basis; an end-of-step field is carried as the
coefficient pair (base, phi), and every inner product the stepper or its
diagnostics needs reduces to the assembled operators.

Stepping:
  * level 0: L2-project the initial velocity, then solve one pressure
    Poisson problem so the projected-back field is weakly divergence free;
  * level 1: one backward Euler momentum step advected by the initial
    intermediate velocity, followed by a pressure increment;
  * levels 2..N: the two-step backward differentiation formula with the
    advecting field extrapolated from the two previous intermediate
    velocities, again followed by a pressure increment.

Each arrival level is logged to an energy ledger, and the discrete energy
identity of the step, the orthogonality relation between the two velocity
fields, and the weak divergence of the end-of-step field are checked to
tight tolerances (the assembly quadrature is exact for every integrand
involved, so these hold to rounding); violations abort the run.

Forcing enters through its windowed time average over
[t - dt/2, t + dt/2], integrated with three-point Gauss; the last window
reaches slightly past the final time unless a forcing cutoff declares f
unavailable there.
"""

import math

import numpy as np

from . import diagnostics
from .assembly import build_operators, project_L2_onto_Uh
from .fe import build_space
from .linsolve import solve_momentum, solve_spd
from .mesh import generate_structured_unit_square

__all__ = [
    "SchemeError",
    "SchemeConfig",
    "YhElement",
    "State",
    "Level",
    "Trajectory",
    "init_state",
    "first_step_backward_euler",
    "bdf2_step",
    "run",
]

IDENTITY_TOL = 1e-9
PYTHAGORAS_TOL = 1e-10
WEAK_DIV_TOL = 1e-10
SKEW_TOL = 1e-12


class SchemeError(RuntimeError):
    """A step produced non-finite values or violated a discrete identity."""


class YhElement:
    """End-of-step velocity base + grad(phi); base is a velocity-space
    coefficient vector, phi a pressure-space one."""

    __slots__ = ("base", "phi")

    def __init__(self, base, phi):
        self.base = base
        self.phi = phi


class Level:
    """All fields of one time level."""

    __slots__ = ("m", "t", "utilde", "u", "p")

    def __init__(self, m, t, utilde, u, p):
        self.m = m
        self.t = t
        self.utilde = utilde
        self.u = u
        self.p = p


class State:
    """Rolling two-level state of the recursion.  Entries with suffix
    _prev are None at level 0.  skew_residual records how far the
    convection form was from contributing zero energy in the step that
    produced this state (normalized; 0 at level 0)."""

    __slots__ = (
        "m",
        "t",
        "utilde",
        "utilde_prev",
        "u",
        "u_prev",
        "p",
        "p_prev",
        "skew_residual",
    )

    def __init__(self, m, t, utilde, utilde_prev, u, u_prev, p, p_prev, skew_residual=0.0):
        self.m = m
        self.t = t
        self.utilde = utilde
        self.utilde_prev = utilde_prev
        self.u = u
        self.u_prev = u_prev
        self.p = p
        self.p_prev = p_prev
        self.skew_residual = skew_residual

    def level(self):
        return Level(self.m, self.t, self.utilde, self.u, self.p)


class SchemeConfig:
    """Run parameters.

    Exactly one of mesh / mesh_n selects the triangulation.  u0(x, y) and
    f(t, x, y) return component pairs for array arguments; f may be None
    for unforced runs.  The forcing is applied through its average over
    [t - dt/2, t + dt/2]; the last window reaches past T, so f must be
    evaluable slightly beyond the final time (closed-form forcings are).
    If it is not, set f_cutoff to the time beyond which f is treated as
    zero, which scales clipped windows down proportionally.  dt is
    adjusted to divide T exactly (recorded in the run warnings).  When
    require_coupling is set, construction rejects combinations with
    h**(degree_u + 1) > coupling_c * dt, the regime the splitting
    analysis assumes for spatial refinement studies.
    """

    def __init__(
        self,
        dt,
        T,
        mu=1.0,
        mesh=None,
        mesh_n=None,
        degree_u=2,
        degree_p=1,
        u0=None,
        f=None,
        f_cutoff=None,
        case_name=None,
        tol_poisson=1e-12,
        tol_momentum=1e-12,
        store_every=1,
        check_identities=True,
        require_coupling=False,
        coupling_c=1.0,
        out_dir=None,
    ):
        if dt <= 0:
            raise ValueError("dt must be positive, got %g" % dt)
        if T < dt:
            raise ValueError("final time T=%g must be at least dt=%g" % (T, dt))
        if mu <= 0:
            raise ValueError("viscosity mu must be positive, got %g" % mu)
        if (mesh is None) == (mesh_n is None):
            raise ValueError("exactly one of mesh / mesh_n must be given")
        if degree_u not in (1, 2) or degree_p not in (1, 2):
            raise ValueError("velocity and pressure degrees must be 1 or 2")
        if u0 is None:
            raise ValueError("an initial velocity u0(x, y) is required")
        if int(store_every) != store_every or store_every < 1:
            raise ValueError("store_every must be a positive integer")
        if f_cutoff is not None and f_cutoff <= 0:
            raise ValueError("f_cutoff must be positive when given, got %g" % f_cutoff)

        self.mesh = mesh if mesh is not None else generate_structured_unit_square(mesh_n)
        self.degree_u = degree_u
        self.degree_p = degree_p
        self.T = float(T)
        self.mu = float(mu)
        self.u0 = u0
        self.f = f
        self.f_cutoff = f_cutoff
        self.case_name = case_name
        self.tol_poisson = tol_poisson
        self.tol_momentum = tol_momentum
        self.store_every = int(store_every)
        self.check_identities = bool(check_identities)
        self.out_dir = out_dir

        self.warnings = []
        ratio = self.T / float(dt)
        n_steps = round(ratio) if abs(ratio - round(ratio)) < 1e-9 else math.ceil(ratio)
        self.n_steps = int(n_steps)
        self.dt = self.T / self.n_steps
        if abs(self.dt - dt) > 1e-12 * dt:
            self.warnings.append(
                "dt adjusted from %g to %g so that %d steps reach T=%g exactly"
                % (dt, self.dt, self.n_steps, self.T)
            )
        if require_coupling and self.mesh.h ** (degree_u + 1) > coupling_c * self.dt:
            raise ValueError(
                "h^(k+1) = %.3e exceeds %.3g * dt = %.3e; refine dt or relax "
                "the coupling requirement" % (self.mesh.h ** (degree_u + 1), coupling_c, coupling_c * self.dt)
            )


class Trajectory:
    """Stored levels, energy ledger and operators of one run."""

    def __init__(self, config, ops, dt, n_steps):
        self.config = config
        self.ops = ops
        self.dt = dt
        self.n_steps = n_steps
        self.levels = []
        self.ledger = diagnostics.EnergyLedger(dt, config.mu)
        self.warnings = list(config.warnings)

    @property
    def final(self):
        return self.levels[-1]

    def is_complete(self):
        """True when every time level was stored (store_every == 1)."""
        return len(self.levels) == self.n_steps + 1


def _check_finite(vec, what, m):
    if not np.all(np.isfinite(vec)):
        raise SchemeError("%s is non-finite at step %d" % (what, m))


def init_state(ops, u0, dt, tol_poisson=1e-12):
    """Level 0: project the initial velocity onto the velocity space, then
    make it weakly divergence free through one pressure Poisson solve.

    The returned end-of-step field satisfies the orthogonal splitting
    |u|^2 + dt^2 |grad p|^2 = |u_tilde|^2 exactly."""
    utilde0 = project_L2_onto_Uh(ops.space_u, u0, ops, tol=tol_poisson)
    _check_finite(utilde0, "projected initial velocity", 0)
    rhs = (ops.G.T @ utilde0) / dt
    p0 = solve_spd(ops.N_p, rhs, tol=tol_poisson, zero_mean=True, mass=ops.M_p)
    u0_elem = YhElement(utilde0, -dt * p0)
    return State(0, 0.0, utilde0, None, u0_elem, None, p0, None)


def _momentum_matrix(ops, mass_coef, w_advect, mu):
    B = ops.convection(w_advect)
    return mass_coef * ops.M_u + B + mu * ops.A_u, B


def _momentum_solve(ops, S, rhs, tol, m):
    free = ops.space_u.free
    x = np.zeros(ops.space_u.ndofs)
    x[free] = solve_momentum(S[free][:, free].tocsr(), rhs[free], tol=tol)
    _check_finite(x, "intermediate velocity", m)
    return x


def _skew_residual(ops, B, w_advect, utilde):
    # the skew-symmetrized convection must pair to zero against the field
    # it transports; normalize by the natural magnitude of the form
    value = abs(float(utilde @ (B @ utilde)))
    scale = float(np.max(np.abs(w_advect))) * ops.norm_u_sq(utilde)
    return value / scale if scale > 0.0 else value


def first_step_backward_euler(state, ops, dt, mu, F1, tol_momentum=1e-12, tol_poisson=1e-12):
    """Level 1 by backward Euler, advected by the initial intermediate
    velocity, followed by the pressure increment solve."""
    S, B = _momentum_matrix(ops, 1.0 / dt, state.utilde, mu)
    rhs = F1 + ops.D @ state.p + ops.yh_pair_with_u(state.u.base, state.u.phi) / dt
    utilde1 = _momentum_solve(ops, S, rhs, tol_momentum, 1)

    dp = solve_spd(
        ops.N_p, -(ops.D.T @ utilde1) / dt, tol=tol_poisson, zero_mean=True, mass=ops.M_p
    )
    p1 = state.p + dp
    u1 = YhElement(utilde1, -dt * dp)
    skew = _skew_residual(ops, B, state.utilde, utilde1)
    return State(1, dt, utilde1, state.utilde, u1, state.u, p1, state.p, skew)


def bdf2_step(state, ops, dt, mu, F, tol_momentum=1e-12, tol_poisson=1e-12):
    """One two-step backward differentiation step from levels (m-1, m) to
    level m+1.  The advecting field is the linear extrapolation of the two
    previous intermediate velocities, so the momentum system is linear in
    the unknown while the convection term stays second-order consistent."""
    m_new = state.m + 1
    w_advect = 2.0 * state.utilde - state.utilde_prev
    S, B = _momentum_matrix(ops, 1.5 / dt, w_advect, mu)
    r_m = ops.yh_pair_with_u(state.u.base, state.u.phi)
    r_mm1 = ops.yh_pair_with_u(state.u_prev.base, state.u_prev.phi)
    rhs = F + ops.D @ state.p + (4.0 * r_m - r_mm1) / (2.0 * dt)
    utilde_new = _momentum_solve(ops, S, rhs, tol_momentum, m_new)

    dp = solve_spd(
        ops.N_p,
        -(1.5 / dt) * (ops.D.T @ utilde_new),
        tol=tol_poisson,
        zero_mean=True,
        mass=ops.M_p,
    )
    p_new = state.p + dp
    u_new = YhElement(utilde_new, -(2.0 * dt / 3.0) * dp)
    skew = _skew_residual(ops, B, w_advect, utilde_new)
    return State(
        m_new, m_new * dt, utilde_new, state.utilde, u_new, state.u, p_new, state.p, skew
    )


def _enforce_gates(row, m, check):
    if not check:
        return
    if row["residual_identity"] > IDENTITY_TOL:
        raise SchemeError(
            "energy identity violated at step %d: relative residual %.3e"
            % (m, row["residual_identity"])
        )
    if row["residual_pythagoras"] > PYTHAGORAS_TOL:
        raise SchemeError(
            "velocity splitting lost orthogonality at step %d: relative "
            "residual %.3e" % (m, row["residual_pythagoras"])
        )
    if row["residual_weak_div"] > WEAK_DIV_TOL:
        raise SchemeError(
            "end-of-step velocity is not weakly divergence free at step %d: "
            "normalized residual %.3e" % (m, row["residual_weak_div"])
        )
    if row["residual_skew"] > SKEW_TOL:
        raise SchemeError(
            "convection form fed energy into step %d: normalized residual %.3e"
            % (m, row["residual_skew"])
        )


def run(config, ops=None):
    """Run the scheme to final time, returning the trajectory.

    Levels are stored every config.store_every steps (level 0 and the
    final level always); the energy ledger records every level regardless.
    Identity violations raise SchemeError unless config.check_identities
    is off (the residual columns are still filled in)."""
    if ops is None:
        space_u = build_space(
            config.mesh, config.degree_u, components=2, homogeneous_dirichlet=True
        )
        space_p = build_space(config.mesh, config.degree_p, components=1, zero_mean=True)
        ops = build_operators(space_u, space_p)

    dt = config.dt
    N = config.n_steps
    traj = Trajectory(config, ops, dt, N)

    state = init_state(ops, config.u0, dt, tol_poisson=config.tol_poisson)
    window = [None, None, state.level()]
    row = diagnostics.record_level(traj.ledger, ops, dt, config.mu, window, 0.0, 0.0, 0.0)
    _enforce_gates(row, 0, config.check_identities)
    traj.levels.append(window[2])

    for m in range(1, N + 1):
        if config.f is not None:
            F, f_norm_sq = ops.load(
                config.f, (m - 0.5) * dt, (m + 0.5) * dt, cutoff=config.f_cutoff
            )
        else:
            F, f_norm_sq = np.zeros(ops.space_u.ndofs), 0.0
        if m == 1:
            state = first_step_backward_euler(
                state, ops, dt, config.mu, F, config.tol_momentum, config.tol_poisson
            )
        else:
            state = bdf2_step(
                state, ops, dt, config.mu, F, config.tol_momentum, config.tol_poisson
            )
        window = [window[1], window[2], state.level()]
        f_dot = float(F @ state.utilde)
        row = diagnostics.record_level(
            traj.ledger, ops, dt, config.mu, window, f_dot, f_norm_sq, state.skew_residual
        )
        _enforce_gates(row, m, config.check_identities)
        if m % config.store_every == 0 or m == N:
            traj.levels.append(window[2])

    return traj
