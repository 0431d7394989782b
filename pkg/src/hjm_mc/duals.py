"""Discrete dual (adjoint) recursions and the a posteriori weak error terms.

For the EFD scheme the one-step map ``g_{n+1} = Phi_n(g_n)`` only depends
on ``g_n`` through the cell ``k = ell_n`` (via the short rate) and the ``Y``
column (via ``F``).  Its Jacobian is therefore the identity except in
columns ``k`` and ``L``, and the dual recursions

    phi_n  = J^T phi_{n+1}
    phi'_n = J^T phi'_{n+1} J + sum_i phi_{n+1,i} Hess(Phi_n^i)

cost ``O(L^2)`` per step.  Writing these two column updates out entry by
entry gives exactly the case tables of the discrete dual problem.

Every routine works on a batch of paths along the leading axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimator import DEFAULT_C0, PriceEstimate, map_chunks, sample_stats, stat_error
from .forward import PathState, SchemeCoefficients, scheme_coefficients, simulate
from .grid import Grid
from .models import HjmModel
from .payoff import PayoffSpec, QuadratureRule, composite_lambda, composite_lambda_derivs, payoff_value, quad_f0
from .rng import DUAL_SALT, derived_seed, stream_batch


class SchemeUnsupported(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DualState:
    phi: np.ndarray  # (..., L+2)
    phi2: np.ndarray  # (..., L+2, L+2)
    n: int


@dataclass(frozen=True)
class ErrorReport:
    e_tau: float
    e_tim: float
    e_tau_stat: float
    e_tim_stat: float
    M_dual: int
    n_samples: int
    antithetic: bool
    exact: float | None = None
    E_c: float | None = None
    A: float | None = None
    B: float | None = None
    ratio_lo: float | None = None
    ratio_hi: float | None = None

    @property
    def estimate(self) -> float:
        return self.e_tau + self.e_tim


def d_coeff(model: HjmModel, t, tau, tau2, x):
    """``xi^2(x + f0(t)) lambda(t, tau2) . lambda(t, tau) / 2``."""
    inner = np.sum(model.lam(t, tau2) * model.lam(t, tau), axis=-1)
    return 0.5 * model.xi_sq(np.add(x, model.f0(t))) * inner


def c_derivs(model: HjmModel, grid: Grid, n: int, j, x, dW, coef: SchemeCoefficients | None = None):
    """Increment of cell ``j`` over step ``n`` and its first two derivatives in ``x``.

    ``x`` is the state ``g_{n, ell_n}``; ``dW`` has shape ``(..., J)``.
    """
    if coef is None:
        coef = scheme_coefficients(model, grid, "efd")
    r = np.add(x, coef.f0_t[n])
    dt = grid.dt[n]
    lt = coef.lt_nodes[n, j]
    lw = np.asarray(dW, dtype=float) @ coef.lam_nodes[n, j].T
    c = model.xi_sq(r) * lt * dt + model.xi(r) * lw
    c1 = model.xi_sq_prime(r) * lt * dt + model.xi_prime(r) * lw
    c2 = model.xi_sq_second(r) * lt * dt + model.xi_second(r) * lw
    return c, c1, c2


def _terminal_factors(gN, model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule, f0q=None):
    """``d1``, ``d2`` and the columns ``F G'``, ``F G''``, ``F' G'``, ``F'' G``, ``F' G`` at ``gN``."""
    if f0q is None:
        f0q = quad_f0(model, grid, rule)
    L, la = grid.L, grid.ell_a
    cells = gN[:, la:L]
    lam = composite_lambda(cells, model, grid, rule, payoff, f0q)
    d1, d2 = composite_lambda_derivs(cells, model, grid, rule, payoff, f0q)
    Y = gN[:, L]
    F, F1, F2 = payoff.F(Y), payoff.F1(Y), payoff.F2(Y)
    G, G1, G2 = payoff.G(lam), payoff.G1(lam), payoff.G2(lam)
    tf = np.stack(np.broadcast_arrays(F * G1, F * G2, F1 * G1, F2 * G, F1 * G), axis=1)
    return d1, d2, tf


def terminal_duals(gN, model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule,
                   f0q: np.ndarray | None = None) -> DualState:
    """Gradient and Hessian of the discrete payoff in the terminal row ``gN`` (``(P, L+2)``)."""
    L, la = grid.L, grid.ell_a
    P = gN.shape[0]
    d1, d2, tf = _terminal_factors(gN, model, payoff, grid, rule, f0q)
    phi = np.zeros((P, L + 2))
    phi[:, la:L] = tf[:, :1] * d1
    phi[:, L] = tf[:, 4]
    phi[:, L + 1] = 1.0
    phi2 = np.zeros((P, L + 2, L + 2))
    blk = tf[:, 1, None, None] * (d1[:, :, None] * d1[:, None, :])
    idx = np.arange(L - la)
    blk[:, idx, idx] += tf[:, :1] * d2
    phi2[:, la:L, la:L] = blk
    phi2[:, la:L, L] = tf[:, 2:3] * d1
    phi2[:, L, la:L] = phi2[:, la:L, L]
    phi2[:, L, L] = tf[:, 3]
    return DualState(phi, phi2, grid.N)


def _step(p, A, r, Y, dWn, model: HjmModel, payoff: PayoffSpec, grid: Grid, n: int, coef: SchemeCoefficients):
    """In-place dual step on path-last arrays ``p`` (``(L+2, P)``) and ``A`` (``(L+2, L+2, P)``).

    Only columns ``k`` and ``L`` of the step Jacobian differ from the identity,
    so ``J^T A J`` changes rows and columns ``k`` and ``L`` alone.
    """
    L, k, dt = grid.L, int(grid.ell_of_n[n]), grid.dt[n]
    lw = coef.lam_nodes[n, :L] @ dWn.T  # (L, P)
    lt = coef.lt_nodes[n, :L]
    U, U1, U2 = payoff.U(r), payoff.U1(r), payoff.U2(r)
    F, F1, F2 = payoff.F(Y), payoff.F1(Y), payoff.F2(Y)

    jk = np.empty_like(p)
    np.multiply(lt[:, None], model.xi_sq_prime(r) * dt, out=jk[:L])
    jk[:L] += lw * model.xi_prime(r)
    jk[k] += 1.0
    jk[L] = dt
    jk[L + 1] = dt * F * U1
    jL1 = dt * F1 * U  # entry (L+1, L); (L, L) is one

    # sum_j c''_j p_j without forming c''
    pz = p[L + 1]
    h_kk = (model.xi_sq_second(r) * dt) * (lt @ p[:L]) + model.xi_second(r) * np.einsum("ip,ip->p", lw, p[:L])
    h_kk += dt * F * U2 * pz
    h_kL = dt * F1 * U1 * pz
    h_LL = dt * F2 * U * pz

    phi_k = np.einsum("ip,ip->p", jk, p)
    p[L] += jL1 * p[L + 1]
    p[k] = phi_k

    # columns k and L of A J; A is symmetric so these are also rows of J^T A
    v = np.einsum("ijp,jp->ip", A, jk)
    vL = A[:, L] + jL1 * A[:, L + 1]
    v[k] = np.einsum("ip,ip->p", jk, v)
    v[L] = np.einsum("ip,ip->p", jk, vL)
    vL[L] = vL[L] + jL1 * vL[L + 1]
    vL[k] = v[L]
    A[k] = v
    A[:, k] = v
    A[L] = vL
    A[:, L] = vL
    A[k, k] += h_kk
    A[k, L] += h_kL
    A[L, k] += h_kL
    A[L, L] += h_LL


def _path_last(dual: DualState):
    return np.array(dual.phi.T, order="C"), np.array(np.moveaxis(dual.phi2, 0, -1), order="C")


def _path_first(p, A, n) -> DualState:
    return DualState(np.array(p.T, order="C"), np.array(np.moveaxis(A, -1, 0), order="C"), n)


def backward_step(path: PathState, model: HjmModel, payoff: PayoffSpec, grid: Grid, n: int,
                  dual: DualState, dW: np.ndarray, coef: SchemeCoefficients | None = None) -> DualState:
    """Duals at level ``n`` from those at ``n+1`` along a batch of paths.

    ``path.gbar`` has shape ``(P, N+1, L+2)`` and ``dW`` shape ``(P, N, J)``.
    """
    if coef is None:
        coef = scheme_coefficients(model, grid, "efd")
    p, A = _path_last(dual)
    _step(p, A, path.rbar[:, n], path.gbar[:, n, grid.L], dW[:, n], model, payoff, grid, n, coef)
    return _path_first(p, A, n)


def _as_batch(path: PathState, dW):
    g, r = path.gbar, path.rbar
    dW = np.asarray(dW, dtype=float)
    if g.ndim == 2:
        return PathState(g[None], r[None], path.scheme, path.incs), dW[None], True
    return path, dW, False


def dual_sweep(path: PathState, dW, model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule,
               store: bool = True, accumulate: bool = False, compiled: bool = True):
    """Backward pass over all levels.

    Returns ``(duals, (e_tau, e_tim))``.  ``duals`` is the list of
    :class:`DualState` for ``n = 0..N`` (empty unless ``store``); the error
    terms are per-path arrays when ``accumulate`` is set, else None.
    Without ``store`` only the current level is kept in memory, and unless
    ``compiled`` is off the pass runs in the compiled kernel.
    """
    if path.scheme != "efd":
        raise SchemeUnsupported("dual error terms are only available for the EFD scheme")
    path, dW, single = _as_batch(path, dW)
    coef = scheme_coefficients(model, grid, "efd")
    N, L = grid.N, grid.L
    if compiled and accumulate and not store and not single:
        return [], _compiled_sweep(path, dW, model, payoff, grid, rule, coef)
    dual = terminal_duals(path.gbar[:, N], model, payoff, grid, rule)
    duals = [dual] if store else []
    p, A = _path_last(dual)
    terms = _ErrorTerms(path, model, payoff, grid, coef) if accumulate else None
    if terms is not None:
        terms.add_level(N, p, A)
    for n in range(N - 1, -1, -1):
        _step(p, A, path.rbar[:, n], path.gbar[:, n, L], dW[:, n], model, payoff, grid, n, coef)
        if terms is not None:
            terms.add_level(n, p, A)
        if store:
            duals.append(_path_first(p, A, n))
    duals.reverse()
    if single:
        duals = [DualState(d.phi[0], d.phi2[0], d.n) for d in duals]
    out = None
    if terms is not None:
        out = (terms.e_tau[0], terms.e_tim[0]) if single else (terms.e_tau, terms.e_tim)
    return duals, out


def _error_weights(coef: SchemeCoefficients, L: int):
    """Per-level weights of the error terms, padded to the full duals.

    Row 0 gives the maturity term of step ``m``; rows 1 and 2 give the time
    term of step ``m-1`` at ``t_m`` and at ``t_{m-1}``.
    """
    lam, lt = coef.lam_nodes, coef.lt_nodes  # (N+1, L+1, J), (N+1, L+1)
    ll = np.einsum("nij,nkj->nik", lam, lam)
    n1 = lt.shape[0]
    w1 = np.zeros((n1, 3, L + 2))
    w2 = np.zeros((n1, 3, L + 2, L + 2))
    w1[:, 0, :L] = 0.5 * np.diff(lt, axis=1)
    w2[:, 0, :L, :L] = 0.25 * (ll[:, 1:, 1:] - ll[:, :-1, :-1])
    w1[:, 1, :L] = lt[:, :L]
    w2[:, 1, :L, :L] = 0.5 * ll[:, :L, :L]
    w1[1:, 2, :L] = lt[:-1, :L]
    w2[1:, 2, :L, :L] = 0.5 * ll[:-1, :L, :L]
    return w1, w2


def _level_major(a, shape):
    return np.ascontiguousarray(np.broadcast_to(a, shape), dtype=float)


def _compiled_sweep(path: PathState, dW, model, payoff, grid, rule, coef):
    from ._dual_kernel import BLOCK, sweep

    N, L = grid.N, grid.L
    P = dW.shape[0]
    pad = -P % BLOCK
    if pad:
        edge = lambda a: np.concatenate([a, np.repeat(a[-1:], pad, axis=0)])
        path = PathState(edge(path.gbar), edge(path.rbar), path.scheme)
        dW = edge(dW)
    d1, d2, tf = _terminal_factors(path.gbar[:, N], model, payoff, grid, rule)
    rT = path.rbar.T  # (N+1, P); every per-step input is level-major
    YT = path.gbar[:, :, L].T
    r, Y = rT[:N], YT[:N]
    dt = grid.dt[:, None]
    U, U1, U2 = payoff.U(r), payoff.U1(r), payoff.U2(r)
    F, F1, F2 = payoff.F(Y), payoff.F1(Y), payoff.F2(Y)
    step_args = [model.xi_sq_prime(r) * dt, model.xi_prime(r), model.xi_sq_second(r) * dt, model.xi_second(r),
                 dt * F * U1, dt * F1 * U, dt * F * U2, dt * F1 * U1, dt * F2 * U]
    w1, w2 = _error_weights(coef, L)
    e_tau, e_tim = sweep(
        grid.ell_a, np.ascontiguousarray(d1.T), np.ascontiguousarray(d2.T), np.ascontiguousarray(tf.T),
        np.asarray(grid.ell_of_n, dtype=np.int64), np.asarray(grid.dt, dtype=float),
        np.ascontiguousarray(coef.lt_nodes), np.ascontiguousarray(coef.lam_nodes),
        np.ascontiguousarray(np.transpose(dW, (1, 2, 0))),
        *[_level_major(a, r.shape) for a in step_args],
        w1, w2, _level_major(model.xi_sq(rT), rT.shape), _level_major(payoff.F(YT) * payoff.U(rT), rT.shape),
        _level_major(rT, rT.shape))
    return e_tau[:P], e_tim[:P]


class _ErrorTerms:
    """Streaming accumulation of the per-path time and maturity error terms.

    The duals at level ``m`` (passed path-last) enter the maturity term of
    step ``m`` and the time term of step ``m-1``; both are contracted in one
    product so ``phi'`` is read once per level.
    """

    def __init__(self, path, model, payoff, grid, coef):
        L, N = grid.L, grid.N
        self.path, self.grid = path, grid
        self.w1, w2 = _error_weights(coef, L)
        self.w2 = w2.reshape(N + 1, 3, -1)
        r = path.rbar
        self.xi2 = model.xi_sq(r)  # (P, N+1)
        self.FU = payoff.F(path.gbar[:, :, L]) * payoff.U(r)
        P = r.shape[0]
        self.e_tau = np.zeros(P)
        self.e_tim = np.zeros(P)

    def add_level(self, m, p, A):
        """Accumulate every term that uses the duals at level ``m``."""
        grid, L = self.grid, self.grid.L
        q = self.w1[m] @ p + self.w2[m] @ A.reshape(-1, A.shape[-1])  # (3, P)
        if m < grid.N:
            self.e_tau += grid.dt[m] * self.xi2[:, m] * q[0]
        if m > 0:
            n = m - 1
            r = self.path.rbar
            t = self.FU[:, m] - self.FU[:, n] + (r[:, m] - r[:, n]) * p[L]
            t += self.xi2[:, m] * q[1] - self.xi2[:, n] * q[2]
            self.e_tim += 0.5 * grid.dt[n] * t


def path_error_terms(path: PathState, duals, model: HjmModel, payoff: PayoffSpec, grid: Grid):
    """Per-path maturity and time error terms from stored duals (one or many paths)."""
    path_b, _, single = _as_batch(path, np.zeros(1))
    coef = scheme_coefficients(model, grid, "efd")
    terms = _ErrorTerms(path_b, model, payoff, grid, coef)
    for m in range(grid.N, -1, -1):
        d = duals[m]
        phi2 = d.phi2 if d.phi2.ndim == 3 else d.phi2[None]
        terms.add_level(m, *_path_last(DualState(np.atleast_2d(d.phi), phi2, m)))
    if single:
        return float(terms.e_tau[0]), float(terms.e_tim[0])
    return terms.e_tau, terms.e_tim


def _rerun_value(path: PathState, dW, model, payoff, grid, rule, n, row):
    ps = simulate(model, grid, dW, "efd", payoff, start_level=n, start_row=row)
    return float(payoff_value(ps.gbar[-1], model, grid, rule, payoff))


def fd_gradient(path: PathState, dW, model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule,
                n: int, ell: int, h: float = 1e-6) -> float:
    """Central difference of the payoff in ``g_{n, ell}`` with the increments frozen."""
    base = np.asarray(path.gbar)[n]
    up, dn = base.copy(), base.copy()
    up[ell] += h
    dn[ell] -= h
    return (_rerun_value(path, dW, model, payoff, grid, rule, n, up)
            - _rerun_value(path, dW, model, payoff, grid, rule, n, dn)) / (2 * h)


def fd_hessian(path: PathState, dW, model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule,
               n: int, ell: int, ell2: int, h: float = 1e-4) -> float:
    """Second central difference of the payoff in ``(g_{n, ell}, g_{n, ell2})``."""
    base = np.asarray(path.gbar)[n]

    def val(a, b):
        row = base.copy()
        row[ell] += a
        row[ell2] += b
        return _rerun_value(path, dW, model, payoff, grid, rule, n, row)

    if ell == ell2:
        return (val(h, 0) - 2 * val(0, 0) + val(-h, 0)) / (h * h)
    return (val(h, h) - val(h, -h) - val(-h, h) + val(-h, -h)) / (4 * h * h)


def sample_error_terms(model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule,
                       n_samples: int, seed: int, antithetic: bool = False, workers: int = 1,
                       chunk: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample ``(e_tau, e_tim)`` on fresh paths keyed by ``seed``."""
    coef = scheme_coefficients(model, grid, "efd")

    def one(dW):
        ps = simulate(model, grid, dW, "efd", payoff, coef=coef)
        return dual_sweep(ps, dW, model, payoff, grid, rule, store=False, accumulate=True)[1]

    def run(start, count):
        dW = stream_batch(seed, start, count, grid, model.J).dW
        et, em = one(dW)
        if antithetic:
            et2, em2 = one(-dW)
            et, em = 0.5 * (et + et2), 0.5 * (em + em2)
        return et, em

    parts = map_chunks(run, n_samples, chunk, workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def error_estimate(model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule, M_dual: int,
                   seed: int, c0: float = DEFAULT_C0, antithetic: bool = False, scheme: str = "efd",
                   exact: float | None = None, price_estimate: PriceEstimate | None = None,
                   workers: int = 1) -> ErrorReport:
    """Sample averages of the maturity and time error terms.

    The dual sample uses a seed derived from ``seed`` so it is independent of
    a price sample drawn with ``seed``.  Given ``exact`` and a price estimate,
    the computational error ``E_c = exact - price`` and the ratio interval
    ``[A - B, A + B]`` are filled in, with ``A = (e_tau + e_tim) / E_c``.
    """
    if scheme != "efd":
        raise SchemeUnsupported("dual error terms are only available for the EFD scheme")
    if antithetic and M_dual % 2:
        raise ValueError("M_dual must be even for antithetic sampling")
    n = M_dual // 2 if antithetic else M_dual
    et, em = sample_error_terms(model, payoff, grid, rule, n, derived_seed(seed, DUAL_SALT), antithetic, workers)
    mt, st = sample_stats(et)
    mm, sm = sample_stats(em)
    rep = dict(e_tau=mt, e_tim=mm, e_tau_stat=stat_error(st, n, c0), e_tim_stat=stat_error(sm, n, c0),
               M_dual=M_dual, n_samples=n, antithetic=antithetic)
    if exact is not None and price_estimate is not None:
        E_c = exact - price_estimate.value
        rep.update(exact=exact, E_c=E_c)
        if E_c != 0.0:
            A = (mt + mm) / E_c
            B = (price_estimate.stat_error + rep["e_tau_stat"] + rep["e_tim_stat"]) / abs(E_c)
            rep.update(A=A, B=B, ratio_lo=A - B, ratio_hi=A + B)
    elif exact is not None:
        rep.update(exact=exact)
    return ErrorReport(**rep)


def dual_cost_per_path(model: HjmModel, payoff: PayoffSpec, grid: Grid, rule: QuadratureRule,
                       n_paths: int, seed: int = 0, repeats: int = 3) -> float:
    """Best-of-``repeats`` wall time of the backward pass per path, in seconds."""
    import time

    dW = stream_batch(seed, 0, n_paths, grid, model.J).dW
    ps = simulate(model, grid, dW, "efd", payoff)
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        dual_sweep(ps, dW, model, payoff, grid, rule, store=False, accumulate=True)
        best = min(best, time.perf_counter() - t0)
    return best / n_paths
