"""Finite-dimensional system-probe models and their exact reductions.

A model is one encounter between a small reference system (dimension
``dim_s``, Hamiltonian ``h_s``, inverse temperature ``beta_s``) and a
probe (``h_e``, ``beta_e``), coupled by a Hermitian interaction ``v`` for
a time ``tau``. This module builds, from such data:

- the one-step unitary on system x probe,
- the reduced Heisenberg map ``Phi(A) = Tr_E[(1 x rho_E) U* (A x 1) U]``,
- the reduced dynamics operator (RDO) acting on the vectorized GNS
  space of the system, with invariant vector ``psi_s = vec(rho_s^(1/2))``,
- reductions of windowed chain observables to single matrices on the
  GNS space,

and, crucially, an exact brute-force evaluation of the repeated
interaction dynamics on a truncated chain (``full_chain_oracle``) against
which every reduced-picture quantity can be checked at small sizes.

The GNS transport never builds a non-normal generator: with
``iota(A) = A rho_s^(1/2)``, the RDO is ``iota o Phi o iota^(-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rdo as rdo_mod
from .linalg import (
    dag,
    embed,
    expm_hermitian,
    left_mult_matrix,
    require_hermitian,
    unvec,
    vec,
)
from .serialize import matrix_from_json, matrix_to_json

ORACLE_DIM_GUARD = 4096


class CapacityError(Exception):
    """Raised when a brute-force computation would exceed the dense-algebra guard."""


@dataclass(frozen=True)
class SystemSpec:
    """Reference system: Hamiltonian and inverse temperature of its Gibbs state."""

    dim_s: int
    h_s: np.ndarray
    beta_s: float

    def __post_init__(self):
        if self.dim_s < 1:
            raise ValueError("dim_s must be positive")
        h = require_hermitian(self.h_s, "h_s")
        if h.shape != (self.dim_s, self.dim_s):
            raise ValueError(f"h_s has shape {h.shape}, expected ({self.dim_s}, {self.dim_s})")
        object.__setattr__(self, "h_s", h)
        if not np.isfinite(self.beta_s) or self.beta_s < 0:
            raise ValueError("beta_s must be finite and nonnegative")

    def gibbs_state(self) -> np.ndarray:
        return gibbs(self.h_s, self.beta_s)


@dataclass(frozen=True)
class ProbeSpec:
    """One chain element: probe Hamiltonian, temperature, coupling and interaction time."""

    dim_e: int
    h_e: np.ndarray
    beta_e: float
    v: np.ndarray
    tau: float

    def __post_init__(self):
        if self.dim_e < 1:
            raise ValueError("dim_e must be positive")
        h = require_hermitian(self.h_e, "h_e")
        if h.shape != (self.dim_e, self.dim_e):
            raise ValueError(f"h_e has shape {h.shape}, expected ({self.dim_e}, {self.dim_e})")
        object.__setattr__(self, "h_e", h)
        v = require_hermitian(self.v, "v")
        object.__setattr__(self, "v", v)
        if not np.isfinite(self.beta_e) or self.beta_e < 0:
            raise ValueError("beta_e must be finite and nonnegative")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")

    def gibbs_state(self) -> np.ndarray:
        return gibbs(self.h_e, self.beta_e)


@dataclass(frozen=True)
class DensityMatrix:
    """Positive semidefinite unit-trace matrix."""

    rho: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        rho = require_hermitian(self.rho, "rho")
        object.__setattr__(self, "rho", rho)
        tr = np.trace(rho).real
        if abs(tr - 1.0) > max(self.tol, 1e-12):
            raise ValueError(f"trace is {tr}, expected 1")
        w = np.linalg.eigvalsh(rho)
        if w.min() < -max(self.tol, 1e-12):
            raise ValueError(f"negative eigenvalue {w.min():.3e}")


@dataclass(frozen=True)
class ObservableWindow:
    """A system observable tensored with a train of l+r+1 probe observables.

    ``b_list[j + l]`` sits on the probe at relative slot ``j``, for
    ``j = -l..r``; slot 0 is the probe interacting at the observation step.
    """

    a_s: np.ndarray
    b_list: tuple
    l: int
    r: int

    def __post_init__(self):
        if self.l < 0 or self.r < 0:
            raise ValueError("window extents must be nonnegative")
        bl = tuple(np.asarray(b, dtype=complex) for b in self.b_list)
        if len(bl) != self.l + self.r + 1:
            raise ValueError(f"b_list has length {len(bl)}, expected l+r+1 = {self.l + self.r + 1}")
        object.__setattr__(self, "b_list", bl)
        object.__setattr__(self, "a_s", np.asarray(self.a_s, dtype=complex))

    @classmethod
    def system_only(cls, a_s: np.ndarray, dim_e: int) -> "ObservableWindow":
        return cls(a_s=a_s, b_list=(np.eye(dim_e),), l=0, r=0)


def gibbs(h: np.ndarray, beta: float) -> np.ndarray:
    """Gibbs state exp(-beta h) / Tr[exp(-beta h)]; full rank for finite beta."""
    h = require_hermitian(h, "h")
    if not np.isfinite(beta) or beta < 0:
        raise ValueError("beta must be finite and nonnegative")
    w, u = np.linalg.eigh(h)
    x = -beta * (w - w.min())  # shift avoids overflow; cancels in the ratio
    p = np.exp(x)
    z = p.sum()
    if not np.isfinite(z) or z <= 0:
        raise OverflowError("Gibbs weights over/underflowed")
    return (u * (p / z)) @ dag(u)


def step_unitary(sys: SystemSpec, probe: ProbeSpec) -> np.ndarray:
    """One-encounter unitary exp(-i tau (h_s x 1 + 1 x h_e + v)) on S x E."""
    d, e = sys.dim_s, probe.dim_e
    if probe.v.shape != (d * e, d * e):
        raise ValueError(f"v has shape {probe.v.shape}, expected ({d * e}, {d * e})")
    h = np.kron(sys.h_s, np.eye(e)) + np.kron(np.eye(d), probe.h_e) + probe.v
    return expm_hermitian(h, -1j * probe.tau)


def weighted_partial_trace(x: np.ndarray, dim_s: int, rho_env: np.ndarray) -> np.ndarray:
    """Tr_E[(1_S x rho_env) X] for X on S x E."""
    de = rho_env.shape[0]
    xt = x.reshape(dim_s, de, dim_s, de)
    return np.einsum("fe,iejf->ij", rho_env, xt)


_weighted_partial_trace = weighted_partial_trace


def reduced_heisenberg_map(sys: SystemSpec, probe: ProbeSpec) -> np.ndarray:
    """Matrix of the one-step Heisenberg map Phi on vectorized d x d matrices.

    Phi(A) = Tr_E[(1 x rho_E) U* (A x 1) U] is unital and completely positive.
    """
    d, e = sys.dim_s, probe.dim_e
    u = step_unitary(sys, probe)
    rho_e = probe.gibbs_state()
    phi = np.empty((d * d, d * d), dtype=complex)
    for idx in range(d * d):
        basis = unvec(np.eye(d * d)[idx], d)
        conj = dag(u) @ np.kron(basis, np.eye(e)) @ u
        phi[:, idx] = vec(_weighted_partial_trace(conj, d, rho_e))
    return phi


def choi_matrix(phi: np.ndarray, d: int) -> np.ndarray:
    """Choi matrix sum_kl E_kl x Phi(E_kl) of a vectorized map."""
    c = np.zeros((d * d, d * d), dtype=complex)
    for k in range(d):
        for ll in range(d):
            e_kl = np.zeros((d, d), dtype=complex)
            e_kl[k, ll] = 1.0
            c += np.kron(e_kl, unvec(phi @ vec(e_kl), d))
    return c


def system_gns_data(sys: SystemSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rho_s, rho_s^(1/2), psi_s) for the system Gibbs reference state."""
    rho_s = sys.gibbs_state()
    w, u = np.linalg.eigh(rho_s)
    if w.min() <= 0:
        raise ValueError("rho_s is singular; beta_s must be finite")
    sqrt_rho = (u * np.sqrt(w)) @ dag(u)
    return rho_s, sqrt_rho, vec(sqrt_rho)


def heisenberg_to_gns(phi: np.ndarray, sqrt_rho_s: np.ndarray) -> np.ndarray:
    """Conjugate a vectorized Heisenberg map by iota(A) = A rho_s^(1/2)."""
    d = sqrt_rho_s.shape[0]
    iota = np.kron(sqrt_rho_s.T, np.eye(d))
    return iota @ phi @ np.linalg.inv(iota)


def rdo_from_model(sys: SystemSpec, probe: ProbeSpec) -> "rdo_mod.Rdo":
    """Reduced dynamics operator of one encounter, with exact GNS certificate.

    The returned matrix fixes psi_s = vec(rho_s^(1/2)) and contracts the
    norm |||v||| = ||unvec(v) rho_s^(-1/2)||_op.
    """
    _, sqrt_rho, psi_s = system_gns_data(sys)
    phi = reduced_heisenberg_map(sys, probe)
    m = heisenberg_to_gns(phi, sqrt_rho)
    cert = rdo_mod.GnsCertificate(sqrt_rho_s=sqrt_rho)
    return rdo_mod.Rdo(m=m, psi_s=psi_s, certificate=cert)


def _chain_dims(sys: SystemSpec, steps: list[ProbeSpec], n_probes: int) -> list[int]:
    dims = [sys.dim_s] + [steps[k].dim_e for k in range(n_probes)]
    if int(np.prod(dims, dtype=np.int64)) > ORACLE_DIM_GUARD:
        raise CapacityError(
            f"truncated chain dimension {np.prod(dims)} exceeds guard {ORACLE_DIM_GUARD}"
        )
    return dims


def full_chain_expectation(
    sys: SystemSpec,
    steps: list[ProbeSpec],
    op_window: np.ndarray,
    m: int,
    l: int,
    r: int,
    rho_init: np.ndarray | DensityMatrix,
) -> complex:
    """Exact expectation of an arbitrary window operator after m steps.

    `op_window` acts on S x E_(m-l) x ... x E_(m+r), in that tensor order.
    Builds the truncated chain S x E_1 x ... x E_K (K = m + r probes) as one
    dense space, applies every step unitary together with the explicit free
    evolution of all spectator probes, and traces against
    rho_init x (x_k Gibbs_k). No reduced-picture shortcut is used.
    """
    rho_init = rho_init.rho if isinstance(rho_init, DensityMatrix) else np.asarray(rho_init)
    d = sys.dim_s
    if rho_init.shape != (d, d):
        raise ValueError("rho_init must act on the system space")
    if m - l < 1:
        raise ValueError(f"window slot -l reaches probe {m - l} < 1")
    n_probes = m + r
    if n_probes > len(steps):
        raise ValueError(f"need {n_probes} probe specs, got {len(steps)}")
    dims = _chain_dims(sys, steps, n_probes)

    # U(m) = W_m ... W_1, each step with explicit free evolution of the others
    dim_tot = int(np.prod(dims, dtype=np.int64))
    u_total = np.eye(dim_tot, dtype=complex)
    for k in range(1, m + 1):
        probe = steps[k - 1]
        w_k = embed(step_unitary(sys, probe), dims, [0, k])
        for n in range(1, n_probes + 1):
            if n == k:
                continue
            free = expm_hermitian(steps[n - 1].h_e, -1j * probe.tau)
            w_k = embed(free, dims, [n]) @ w_k
        u_total = w_k @ u_total

    o_full = embed(op_window, dims, [0] + [m + j for j in range(-l, r + 1)])

    rho_tot = rho_init
    for k in range(1, n_probes + 1):
        rho_tot = np.kron(rho_tot, steps[k - 1].gibbs_state())
    return complex(np.trace(rho_tot @ dag(u_total) @ o_full @ u_total))


def full_chain_oracle(
    sys: SystemSpec,
    steps: list[ProbeSpec],
    obs: ObservableWindow,
    m: int,
    rho_init: np.ndarray | DensityMatrix,
) -> complex:
    """Exact expectation of a windowed product observable after m steps.

    See :func:`full_chain_expectation` for the underlying brute-force
    contraction; this wrapper assembles A_S x B^(-l) x ... x B^(r).
    """
    if m == 0:
        rho0 = rho_init.rho if isinstance(rho_init, DensityMatrix) else np.asarray(rho_init)
        for b in obs.b_list:
            if not np.allclose(b, np.eye(b.shape[0]), atol=1e-14):
                raise ValueError("m = 0 supports system-only observables")
        return complex(np.trace(rho0 @ obs.a_s))
    op = obs.a_s
    for b in obs.b_list:
        op = np.kron(op, b)
    return full_chain_expectation(sys, steps, op, m, obs.l, obs.r, rho_init)


def reduce_window_operator(
    sys: SystemSpec, window_steps: list[ProbeSpec], op: np.ndarray, l: int, r: int
) -> np.ndarray:
    """Reduce an arbitrary operator on S x (window probes) to a matrix on S.

    `window_steps` lists the probes at slots -l..r. Slots -l..0 have already
    interacted by the observation step and are conjugated with their step
    unitaries (plus free evolution of the other interacting window probes);
    slots 1..r have not interacted and only their Gibbs averages survive.
    The reduction is exact, by the same contraction the oracle performs.
    """
    if len(window_steps) != l + r + 1:
        raise ValueError("window_steps must have length l+r+1")
    if l + r > 3:
        raise CapacityError("window capacity guard: l + r must be <= 3")
    d = sys.dim_s
    dims = [d] + [p.dim_e for p in window_steps]
    dim_tot = int(np.prod(dims, dtype=np.int64))
    if dim_tot > ORACLE_DIM_GUARD:
        raise CapacityError(f"window dimension {dim_tot} exceeds guard {ORACLE_DIM_GUARD}")

    # chain order: slot -l interacts first, slot 0 last
    w_tilde = np.eye(dim_tot, dtype=complex)
    for slot in range(-l, 1):
        probe = window_steps[slot + l]
        w_s = embed(step_unitary(sys, probe), dims, [0, slot + l + 1])
        for other in range(-l, 1):
            if other == slot:
                continue
            free = expm_hermitian(window_steps[other + l].h_e, -1j * probe.tau)
            w_s = embed(free, dims, [other + l + 1]) @ w_s
        w_tilde = w_s @ w_tilde

    rho_env = window_steps[0].gibbs_state()
    for probe in window_steps[1:]:
        rho_env = np.kron(rho_env, probe.gibbs_state())
    conj = dag(w_tilde) @ op @ w_tilde
    return _weighted_partial_trace(conj, d, rho_env)


def reduce_instant(
    sys: SystemSpec, window_steps: list[ProbeSpec], obs: ObservableWindow
) -> np.ndarray:
    """GNS matrix N of an instantaneous observable, acting by left multiplication.

    Satisfies <psi_0, alpha^m(O) psi_0> = <psi_S, M_1 ... M_(m-l-1) N psi_S>
    with the M_k built from the same models; probes at future slots (j > 0)
    enter only through the scalars Tr[Gibbs_j B_j].
    """
    l, r = obs.l, obs.r
    if len(window_steps) != l + r + 1:
        raise ValueError("window_steps must have length l+r+1")
    scalar = 1.0 + 0.0j
    for j in range(1, r + 1):
        scalar *= np.trace(window_steps[j + l].gibbs_state() @ obs.b_list[j + l])
    op = obs.a_s
    for j in range(-l, 1):
        op = np.kron(op, obs.b_list[j + l])
    n_heis = reduce_window_operator(sys, window_steps[: l + 1], op, l, 0)
    return scalar * left_mult_matrix(n_heis)


def sigma_plus() -> np.ndarray:
    return np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


def qubit_exchange_model(
    e_s: float,
    e_e: float,
    coupling: float,
    tau: float,
    beta_s: float,
    beta_e: float,
) -> tuple[SystemSpec, ProbeSpec]:
    """Two-level system and probe with excitation-exchange coupling.

    h_s = diag(0, e_s), h_e = diag(0, e_e),
    v = coupling (sp x sm + sm x sp).
    """
    sp, sm = sigma_plus(), dag(sigma_plus())
    v = coupling * (np.kron(sp, sm) + np.kron(sm, sp))
    sys = SystemSpec(dim_s=2, h_s=np.diag([0.0, e_s]).astype(complex), beta_s=beta_s)
    probe = ProbeSpec(dim_e=2, h_e=np.diag([0.0, e_e]).astype(complex), beta_e=beta_e, v=v, tau=tau)
    return sys, probe


def model_to_json(sys: SystemSpec, probe: ProbeSpec) -> dict:
    return {
        "system": {
            "dim": sys.dim_s,
            "h": matrix_to_json(sys.h_s),
            "beta": float(sys.beta_s),
        },
        "probe": {
            "dim": probe.dim_e,
            "h": matrix_to_json(probe.h_e),
            "beta": float(probe.beta_e),
            "v": matrix_to_json(probe.v),
            "tau": float(probe.tau),
        },
    }


def model_from_json(doc: dict) -> tuple[SystemSpec, ProbeSpec]:
    try:
        sdoc, pdoc = doc["system"], doc["probe"]
        sys = SystemSpec(
            dim_s=int(sdoc["dim"]),
            h_s=matrix_from_json(sdoc["h"], "system.h"),
            beta_s=float(sdoc["beta"]),
        )
        probe = ProbeSpec(
            dim_e=int(pdoc["dim"]),
            h_e=matrix_from_json(pdoc["h"], "probe.h"),
            beta_e=float(pdoc["beta"]),
            v=matrix_from_json(pdoc["v"], "probe.v"),
            tau=float(pdoc["tau"]),
        )
    except KeyError as exc:
        raise ValueError(f"model document missing key: {exc}") from exc
    return sys, probe
