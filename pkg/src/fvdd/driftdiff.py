"""Coupled nonlinear drift-diffusion schemes on DDFV and HFV frameworks.

The transient system for densities N, P and potential phi is discretised
with backward Euler in time and nonlinear fluxes of the form
``T(N, log N - phi, v)``, which keeps the computed densities positive.
This module assembles residuals and analytic Jacobians for both
frameworks, solves the nonlinear Poisson-Boltzmann equation for the
thermal equilibrium, and evaluates the discrete relative entropy that
measures the distance to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps

from . import ddfv, hfv, solver
from .mesh import (BoundaryGeometry, BoundarySegment, NEUMANN, PrimalMesh,
                   _polygon_signed_area, tag_boundary)


class NonPositiveInitialData(Exception):
    """Initial density data must be strictly positive."""


class NonPositiveIterate(ArithmeticError):
    """A density iterate lost positivity; Newton treats this as a failed
    linearisation and the time step is reduced."""


def entropy_h(s: np.ndarray) -> np.ndarray:
    """Boltzmann entropy density H(s) = s log s - s + 1 (H >= 0, H(1) = 0)."""
    s = np.asarray(s, dtype=float)
    return s * np.log(s) - s + 1.0


# ---------------------------------------------------------------------------
# physical case description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirichletTrace:
    """Constant boundary values (N, P, phi) on one Dirichlet segment."""

    N: float
    P: float
    phi: float


@dataclass(frozen=True)
class HalfPlaneProfile:
    """Piecewise-constant profile split by the line normal . x = offset."""

    normal: tuple[float, float]
    offset: float
    above: float
    below: float

    def __call__(self, x: float, y: float) -> float:
        nx, ny = self.normal
        return self.above if nx * x + ny * y > self.offset else self.below

    def polygon_average(self, polygon: np.ndarray) -> float:
        """Exact area-weighted value over a simple polygon."""
        area = _polygon_signed_area(polygon)
        if area <= 0.0:
            raise ValueError("polygon must be counter-clockwise with positive area")
        clipped = _clip_halfplane(polygon, np.asarray(self.normal), self.offset)
        above = _polygon_signed_area(clipped) if len(clipped) >= 3 else 0.0
        frac = min(max(above / area, 0.0), 1.0)
        return frac * self.above + (1.0 - frac) * self.below


def _clip_halfplane(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    out = []
    n = len(poly)
    for i in range(n):
        cur, nxt = poly[i], poly[(i + 1) % n]
        dc = float(normal @ cur) - offset
        dn = float(normal @ nxt) - offset
        if dc >= 0.0:
            out.append(cur)
        if (dc > 0.0) != (dn > 0.0):
            t = dc / (dc - dn)
            out.append(cur + t * (nxt - cur))
    return np.array(out) if out else np.empty((0, 2))


@dataclass(frozen=True)
class CaseSpec:
    """Physical data of a drift-diffusion run on the unit square.

    ``doping`` is a pointwise callable; if it exposes
    ``polygon_average`` the discretisation uses exact area-weighted cell
    values. The compatibility relations ``log N - phi = alpha_n`` and
    ``log P + phi = alpha_p`` must hold on every Dirichlet segment.
    """

    lam: float
    alpha_n: float
    alpha_p: float
    doping: Callable[[float, float], float]
    dirichlet: dict[int, DirichletTrace]
    n_init: Callable[[float, float], float]
    p_init: Callable[[float, float], float]
    boundary: BoundaryGeometry

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("Debye length must be positive")
        for seg_id, tr in self.dirichlet.items():
            if tr.N <= 0 or tr.P <= 0:
                raise ValueError(f"segment {seg_id}: boundary densities must be > 0")
            if abs(np.log(tr.N) - tr.phi - self.alpha_n) > 1e-12 or \
                    abs(np.log(tr.P) + tr.phi - self.alpha_p) > 1e-12:
                raise ValueError(
                    f"segment {seg_id}: boundary data violates the "
                    "compatibility relations"
                )
        tagged = {s.tag for s in self.boundary.dirichlet_segments()}
        if tagged != set(self.dirichlet):
            raise ValueError("Dirichlet traces and tagged segments disagree")

    def _nearest_trace(self, x: float, y: float) -> DirichletTrace:
        best, dist = None, np.inf
        for seg in self.boundary.dirichlet_segments():
            d = seg.distance((x, y))
            if d < dist:
                best, dist = seg, d
        return self.dirichlet[best.tag]

    def trace_n(self, x: float, y: float) -> float:
        return self._nearest_trace(x, y).N

    def trace_p(self, x: float, y: float) -> float:
        return self._nearest_trace(x, y).P

    def trace_phi(self, x: float, y: float) -> float:
        return self._nearest_trace(x, y).phi


def pn_junction(nd0: float, nd1: float, alpha0: float, lam: float,
                junction: float = 0.5, doping_strength: float = 1.0) -> CaseSpec:
    """PN-diode case on the unit square.

    Ohmic contacts sit on the bottom side (segment 0) and the left
    quarter of the top side (segment 1); the rest of the boundary is
    insulating. Contact data derive from ``N`` and the mass-action
    constant ``alpha0``: ``P = exp(alpha0)/N`` and
    ``phi = (log N - log P)/2``. The doping is ``+doping_strength``
    above the horizontal junction line and the negative below it.
    """
    if nd0 <= 0 or nd1 <= 0:
        raise ValueError("contact densities must be positive")
    traces = {}
    for seg_id, nd in ((0, nd0), (1, nd1)):
        pd = np.exp(alpha0) / nd
        traces[seg_id] = DirichletTrace(nd, pd, 0.5 * (np.log(nd) - np.log(pd)))

    boundary = BoundaryGeometry((
        BoundarySegment((0.0, 0.0), (1.0, 0.0), 0),
        BoundarySegment((1.0, 0.0), (1.0, 1.0), NEUMANN),
        BoundarySegment((1.0, 1.0), (0.25, 1.0), NEUMANN),
        BoundarySegment((0.25, 1.0), (0.0, 1.0), 1),
        BoundarySegment((0.0, 1.0), (0.0, 0.0), NEUMANN),
    ))

    nd_lo, nd_hi = nd0, nd1
    pd_lo, pd_hi = traces[0].P, traces[1].P

    def n_init(x, y):
        return nd_hi + (nd_lo - nd_hi) * (1.0 - np.sqrt(y))

    def p_init(x, y):
        return pd_hi + (pd_lo - pd_hi) * (1.0 - np.sqrt(y))

    return CaseSpec(
        lam=lam,
        alpha_n=0.5 * alpha0,
        alpha_p=0.5 * alpha0,
        doping=HalfPlaneProfile((0.0, 1.0), junction,
                                above=doping_strength, below=-doping_strength),
        dirichlet=traces,
        n_init=n_init,
        p_init=p_init,
        boundary=boundary,
    )


# ---------------------------------------------------------------------------
# framework adapters
# ---------------------------------------------------------------------------


class DdfvDiscretisation:
    """DDFV view of a tagged primal mesh for the coupled system."""

    framework = "ddfv"

    def __init__(self, primal: PrimalMesh):
        self.mesh = ddfv.build_ddfv(primal)
        self.n = self.mesh.n_unknowns
        self.mass = self.mesh.mass
        self.stiff = ddfv.stiffness_matrix(self.mesh)
        self.free = self.mesh.free_indices
        self.dirichlet_mask = self.mesh.dirichlet_mask
        self._V = ddfv._signed_basis_vectors(self.mesh)

    def data_values(self, f) -> np.ndarray:
        return self.mesh.interpolate(f, at="data")

    def dirichlet_values(self, g) -> np.ndarray:
        return ddfv.project_dirichlet(self.mesh, g)

    def doping_field(self, doping) -> np.ndarray:
        m = self.mesh
        out = np.empty(self.n)
        average = getattr(doping, "polygon_average", None)
        for k, cell in enumerate(m.primal.cells):
            poly = m.primal.vertices[cell]
            out[k] = average(poly) if average else doping(*m.primal.centers[k])
        for i, e in enumerate(m.bcell_edge):
            out[m.n_cells + i] = doping(*m.primal.edge_midpoints[e])
        for v in range(m.primal.n_vertices):
            poly = m.dual_polygons[v]
            out[m.vert_index[v]] = average(poly) if average \
                else doping(*m.dual_barycentres[v])
        return out

    def flux_residual(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Vector of T(u, w, e_i) over all unknowns."""
        m = self.mesh
        idx = m.diamond_idx
        gw = ddfv.gradient(m, w)
        coeff = m.diamond_areas * ddfv.reconstruct(m, u)
        sa = coeff * np.einsum("ij,ij->i", gw, m.avec)
        sb = coeff * np.einsum("ij,ij->i", gw, m.bvec)
        out = np.zeros(self.n)
        np.add.at(out, idx[:, 0], -sa)
        np.add.at(out, idx[:, 1], sa)
        np.add.at(out, idx[:, 2], -sb)
        np.add.at(out, idx[:, 3], sb)
        return out

    def flux_jacobians(self, u: np.ndarray, w: np.ndarray):
        """(A, B) with A_ij = dT/dw_j and B_ij = dT/du_j of T(u, w, e_i)."""
        m = self.mesh
        idx = m.diamond_idx
        V = self._V
        rows = np.broadcast_to(idx[:, :, None], (m.n_diamonds, 4, 4)).ravel()
        cols = np.broadcast_to(idx[:, None, :], (m.n_diamonds, 4, 4)).ravel()

        coeff = m.diamond_areas * ddfv.reconstruct(m, u)
        a_vals = (coeff[:, None, None] * np.einsum("dre,dce->drc", V, V)).ravel()
        A = sps.coo_matrix((a_vals, (rows, cols)), shape=(self.n, self.n)).tocsr()

        gw = ddfv.gradient(m, w)
        gw_dot_vr = np.einsum("dj,drj->dr", gw, V)  # (nd, 4)
        b_vals = (0.25 * m.diamond_areas[:, None, None]
                  * gw_dot_vr[:, :, None] * np.ones((1, 1, 4))).ravel()
        B = sps.coo_matrix((b_vals, (rows, cols)), shape=(self.n, self.n)).tocsr()
        return A, B

    def min_values(self, u: np.ndarray) -> float:
        return float(u.min())


class HfvDiscretisation:
    """HFV view of a tagged primal mesh for the coupled system."""

    framework = "hfv"

    def __init__(self, primal: PrimalMesh, eta: float = 1.5):
        self.mesh = hfv.build_hybrid(primal, eta=eta)
        self.n = self.mesh.n_unknowns
        self.mass = self.mesh.mass
        self.stiff = hfv.stiffness_matrix(self.mesh)
        self.free = self.mesh.free_indices
        self.dirichlet_mask = self.mesh.dirichlet_mask

    def data_values(self, f) -> np.ndarray:
        return self.mesh.interpolate(f)

    def dirichlet_values(self, g) -> np.ndarray:
        return hfv.project_dirichlet(self.mesh, g)

    def doping_field(self, doping) -> np.ndarray:
        m = self.mesh
        out = np.empty(self.n)
        average = getattr(doping, "polygon_average", None)
        for k, cell in enumerate(m.primal.cells):
            poly = m.primal.vertices[cell]
            out[k] = average(poly) if average else doping(*m.primal.centers[k])
        for e in range(m.primal.n_edges):
            out[m.n_cells + e] = doping(*m.primal.edge_midpoints[e])
        return out

    def flux_residual(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        m = self.mesh
        out = np.zeros(self.n)
        for k in range(m.n_cells):
            idx = m.local_indices[k]
            out[idx] += hfv.reconstruct(m, u, k) * (m.local_stiffness[k] @ w[idx])
        return out

    def flux_jacobians(self, u: np.ndarray, w: np.ndarray):
        m = self.mesh
        rows, cols, a_vals, b_vals = [], [], [], []
        for k in range(m.n_cells):
            idx = m.local_indices[k]
            nloc = len(idx)
            loc = m.local_stiffness[k]
            rk = hfv.reconstruct(m, u, k)
            rho = np.full(nloc, 0.5 / (nloc - 1))
            rho[0] = 0.5
            aw = loc @ w[idx]
            rows.append(np.repeat(idx, nloc))
            cols.append(np.tile(idx, nloc))
            a_vals.append((rk * loc).ravel())
            b_vals.append(np.outer(aw, rho).ravel())
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        A = sps.coo_matrix((np.concatenate(a_vals), (rows, cols)),
                           shape=(self.n, self.n)).tocsr()
        B = sps.coo_matrix((np.concatenate(b_vals), (rows, cols)),
                           shape=(self.n, self.n)).tocsr()
        return A, B

    def min_values(self, u: np.ndarray) -> float:
        return float(u.min())


def discretise(primal: PrimalMesh, framework: str, eta: float = 1.5):
    """Build the framework adapter ('ddfv' or 'hfv') for a tagged mesh."""
    if framework == "ddfv":
        return DdfvDiscretisation(primal)
    if framework == "hfv":
        return HfvDiscretisation(primal, eta=eta)
    raise ValueError(f"unknown framework '{framework}'")


# ---------------------------------------------------------------------------
# case discretisation
# ---------------------------------------------------------------------------


@dataclass
class DiscreteCase:
    """Initial fields, doping field and Dirichlet lifts for one framework."""

    N0: np.ndarray
    P0: np.ndarray
    C: np.ndarray
    dirichlet_n: np.ndarray
    dirichlet_p: np.ndarray
    dirichlet_phi: np.ndarray


def discretise_case(case: CaseSpec, disc) -> DiscreteCase:
    """Sample initial data and doping on a framework's unknowns; Dirichlet
    unknowns take the boundary trace point values."""
    n0 = disc.data_values(case.n_init)
    p0 = disc.data_values(case.p_init)
    dn = disc.dirichlet_values(case.trace_n)
    dp = disc.dirichlet_values(case.trace_p)
    dphi = disc.dirichlet_values(case.trace_phi)
    mask = disc.dirichlet_mask
    n0[mask] = dn[mask]
    p0[mask] = dp[mask]
    if np.any(n0 <= 0.0) or np.any(p0 <= 0.0):
        raise NonPositiveInitialData("initial densities must be positive")
    return DiscreteCase(n0, p0, disc.doping_field(case.doping), dn, dp, dphi)


# ---------------------------------------------------------------------------
# equilibrium
# ---------------------------------------------------------------------------


@dataclass
class Equilibrium:
    """Thermal equilibrium fields; N and P follow from phi exponentially."""

    phi: np.ndarray
    N: np.ndarray
    P: np.ndarray


def solve_poisson_boltzmann(case: CaseSpec, disc,
                            dcase: DiscreteCase | None = None,
                            cfg: solver.NewtonConfig | None = None) -> Equilibrium:
    """Newton solve of the nonlinear discrete Poisson-Boltzmann equation."""
    if dcase is None:
        dcase = discretise_case(case, disc)
    if cfg is None:
        cfg = solver.NewtonConfig(max_iter=100)
    lam2 = case.lam ** 2
    mask = disc.dirichlet_mask
    free = disc.free
    phi_full = np.where(mask, dcase.dirichlet_phi, 0.0)
    S = disc.stiff
    mass = disc.mass
    C = dcase.C

    def full(phi_free):
        phi = phi_full.copy()
        phi[free] = phi_free
        return phi

    def residual(phi_free):
        phi = full(phi_free)
        charge = C + np.exp(case.alpha_p - phi) - np.exp(case.alpha_n + phi)
        return (lam2 * (S @ phi) - mass * charge)[free]

    def jacobian(phi_free):
        phi = full(phi_free)
        deriv = mass * (np.exp(case.alpha_p - phi) + np.exp(case.alpha_n + phi))
        J = lam2 * S + sps.diags(deriv)
        return J[free][:, free].tocsr()

    phi_free, _ = solver.newton(residual, jacobian, phi_full[free], cfg)
    phi = full(phi_free)
    return Equilibrium(phi=phi,
                       N=np.exp(case.alpha_n + phi),
                       P=np.exp(case.alpha_p - phi))


# ---------------------------------------------------------------------------
# states, entropy, diagnostics
# ---------------------------------------------------------------------------


@dataclass
class SystemState:
    """Discrete (N, P, phi) triple at one time level."""

    framework: str
    N: np.ndarray
    P: np.ndarray
    phi: np.ndarray
    time: float = 0.0
    dt: float = 0.0


def min_density(state: SystemState) -> tuple[float, float]:
    """Exact minima of N and P over every unknown of the framework."""
    return float(state.N.min()), float(state.P.min())


def relative_entropy(disc, state: SystemState, eq: Equilibrium,
                     case: CaseSpec) -> float:
    """Distance to equilibrium: Boltzmann terms for both densities plus
    the weighted potential-gradient term. Massless unknowns (HFV edges,
    DDFV boundary cells) do not contribute to the density terms."""
    w = disc.mass
    term_n = float(np.dot(w, eq.N * entropy_h(state.N / eq.N)))
    term_p = float(np.dot(w, eq.P * entropy_h(state.P / eq.P)))
    dphi = state.phi - eq.phi
    quad = 0.5 * case.lam ** 2 * float(dphi @ (disc.stiff @ dphi))
    return term_n + term_p + quad


# ---------------------------------------------------------------------------
# transient problem
# ---------------------------------------------------------------------------


class TransientProblem:
    """Backward-Euler residual and Jacobian of the coupled system.

    The reduced state vector stacks the free unknowns of N, P and phi.
    Dirichlet unknowns keep their boundary values and are eliminated.
    """

    def __init__(self, case: CaseSpec, disc, dcase: DiscreteCase | None = None):
        self.case = case
        self.disc = disc
        self.dcase = dcase if dcase is not None else discretise_case(case, disc)
        self.free = disc.free
        self.nf = len(self.free)
        mask = disc.dirichlet_mask
        self._tpl_n = np.where(mask, self.dcase.dirichlet_n, 0.0)
        self._tpl_p = np.where(mask, self.dcase.dirichlet_p, 0.0)
        self._tpl_phi = np.where(mask, self.dcase.dirichlet_phi, 0.0)
        self.positive_mask = np.zeros(3 * self.nf, dtype=bool)
        self.positive_mask[: 2 * self.nf] = True
        self._mass_free = disc.mass[self.free]
        self._stiff_ff = disc.stiff[self.free][:, self.free].tocsr()

    # -- state packing ---------------------------------------------------

    def pack(self, N: np.ndarray, P: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return np.concatenate([N[self.free], P[self.free], phi[self.free]])

    def unpack(self, x: np.ndarray):
        nf = self.nf
        N = self._tpl_n.copy()
        P = self._tpl_p.copy()
        phi = self._tpl_phi.copy()
        N[self.free] = x[:nf]
        P[self.free] = x[nf:2 * nf]
        phi[self.free] = x[2 * nf:]
        return N, P, phi

    def state(self, x: np.ndarray, time: float = 0.0, dt: float = 0.0) -> SystemState:
        N, P, phi = self.unpack(x)
        return SystemState(self.disc.framework, N, P, phi, time, dt)

    # -- initial state ----------------------------------------------------

    def initial_potential(self, N: np.ndarray, P: np.ndarray) -> np.ndarray:
        """Linear discrete Poisson solve giving an admissible phi for the
        given densities (the schemes only define phi at later levels)."""
        lam2 = self.case.lam ** 2
        rhs_full = self.disc.mass * (self.dcase.C + P - N) \
            - lam2 * (self.disc.stiff @ self._tpl_phi)
        phi = self._tpl_phi.copy()
        phi[self.free] = solver.solve_linear(
            solver.SparseSystem(lam2 * self._stiff_ff, rhs_full[self.free])
        )
        return phi

    def initial_state(self) -> np.ndarray:
        phi0 = self.initial_potential(self.dcase.N0, self.dcase.P0)
        return self.pack(self.dcase.N0, self.dcase.P0, phi0)

    # -- residual / jacobian ----------------------------------------------

    def residual(self, x: np.ndarray, x_prev: np.ndarray, dt: float) -> np.ndarray:
        N, P, phi = self.unpack(x)
        if N.min() <= 0.0 or P.min() <= 0.0:
            raise NonPositiveIterate("density iterate lost positivity")
        Np, Pp, _ = self.unpack(x_prev)
        disc = self.disc
        mass = disc.mass
        lam2 = self.case.lam ** 2

        f_n = mass * (N - Np) / dt + disc.flux_residual(N, np.log(N) - phi)
        f_p = mass * (P - Pp) / dt + disc.flux_residual(P, np.log(P) + phi)
        f_phi = lam2 * (disc.stiff @ phi) - mass * (self.dcase.C + P - N)
        return np.concatenate([f_n[self.free], f_p[self.free], f_phi[self.free]])

    def jacobian(self, x: np.ndarray, dt: float) -> sps.csr_matrix:
        N, P, phi = self.unpack(x)
        if N.min() <= 0.0 or P.min() <= 0.0:
            raise NonPositiveIterate("density iterate lost positivity")
        disc = self.disc
        free = self.free
        lam2 = self.case.lam ** 2
        mass_dt = sps.diags(self._mass_free / dt)
        mass_diag = sps.diags(self._mass_free)

        A_n, B_n = disc.flux_jacobians(N, np.log(N) - phi)
        A_p, B_p = disc.flux_jacobians(P, np.log(P) + phi)

        def red(M):
            return M[free][:, free]

        inv_n = sps.diags(1.0 / N[free])
        inv_p = sps.diags(1.0 / P[free])
        J_nn = mass_dt + red(B_n) + red(A_n) @ inv_n
        J_np = -red(A_n)
        J_pp = mass_dt + red(B_p) + red(A_p) @ inv_p
        J_pphi = red(A_p)
        J_phiphi = lam2 * self._stiff_ff
        return sps.bmat([
            [J_nn, None, J_np],
            [None, J_pp, J_pphi],
            [mass_diag, -mass_diag, J_phiphi],
        ], format="csr")

    def step_factory(self, x_prev: np.ndarray, dt: float):
        return (lambda x: self.residual(x, x_prev, dt),
                lambda x: self.jacobian(x, dt))

    # -- HFV static condensation -------------------------------------------

    def condensed_solve(self):
        """Linear-solve hook eliminating the per-cell (N_K, P_K, phi_K)
        blocks by static condensation; only meaningful for HFV."""
        if self.disc.framework != "hfv":
            raise ValueError("static condensation applies to the HFV framework")
        pos = np.full(self.disc.n, -1, dtype=int)
        pos[self.free] = np.arange(self.nf)
        nc = self.disc.mesh.n_cells
        blocks = [np.array([pos[k], self.nf + pos[k], 2 * self.nf + pos[k]])
                  for k in range(nc)]
        in_block = np.zeros(3 * self.nf, dtype=bool)
        for b in blocks:
            in_block[b] = True
        edge_dofs = np.nonzero(~in_block)[0]

        def solve(system: solver.SparseSystem) -> np.ndarray:
            cs = hfv.condense(system.matrix, system.rhs, blocks, edge_dofs)
            xe = solver.solve_linear(solver.SparseSystem(cs.matrix, cs.rhs))
            return cs.recover(xe)

        return solve


# ---------------------------------------------------------------------------
# high-level run
# ---------------------------------------------------------------------------


@dataclass
class TimeSeriesRecord:
    """Per accepted step diagnostics matching the CSV columns."""

    time: float
    dt: float
    newton_iterations: int
    min_n: float
    min_p: float
    entropy: float


@dataclass
class DriftDiffusionRun:
    framework: str
    records: list[TimeSeriesRecord]
    rejections: int
    final: SystemState
    equilibrium: Equilibrium
    problem: TransientProblem = field(repr=False)

    @property
    def total_newton_iterations(self) -> int:
        return sum(r.newton_iterations for r in self.records)


def run_drift_diffusion(case: CaseSpec, primal: PrimalMesh, framework: str,
                        t_end: float, dt_ini: float, dt_max: float,
                        eta: float = 1.5,
                        newton_cfg: solver.NewtonConfig | None = None,
                        use_condensation: bool = True) -> DriftDiffusionRun:
    """Tag the mesh for the case, integrate to ``t_end`` and collect the
    per-step diagnostics (minimal densities, relative entropy)."""
    tagged = tag_boundary(primal, case.boundary)
    disc = discretise(tagged, framework, eta=eta)
    problem = TransientProblem(case, disc)
    eq = solve_poisson_boltzmann(case, disc, problem.dcase)
    cfg = newton_cfg if newton_cfg is not None else solver.NewtonConfig()
    solve = solver.solve_linear
    if framework == "hfv" and use_condensation:
        solve = problem.condensed_solve()

    # The recorded initial state carries the linear-Poisson potential, but
    # that potential scales like 1/lam^2 for non-neutral initial charge and
    # strands Newton in stiff regimes; the equilibrium potential is an O(1)
    # boundary-consistent start for the first solve.
    x0 = problem.initial_state()
    guess0 = problem.pack(problem.dcase.N0, problem.dcase.P0, eq.phi)
    stepper = solver.TimeStepper(dt_ini=dt_ini, dt_max=dt_max)
    result = solver.run_transient(problem.step_factory, x0,
                                  t_end, stepper, cfg,
                                  positive_mask=problem.positive_mask,
                                  solve=solve, first_guess=guess0)
    records = []
    for rec in result.records:
        st = problem.state(rec.state, rec.time, rec.dt)
        mn, mp = min_density(st)
        records.append(TimeSeriesRecord(rec.time, rec.dt, rec.newton_iterations,
                                        mn, mp,
                                        relative_entropy(disc, st, eq, case)))
    last = result.records[-1]
    return DriftDiffusionRun(framework, records, result.rejections,
                             problem.state(last.state, last.time, last.dt),
                             eq, problem)
