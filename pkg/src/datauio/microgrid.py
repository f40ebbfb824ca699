"""DC microgrid case study: one distributed generation unit (DGU) under primary control.

State ``x = [V, I_t, v]`` (PCC voltage, filter current, voltage-error
integrator), unknown input ``d = [I_net + I_L, V_ref + alpha]``. All states
are measured (``C = I``) and there is no known input.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .linalg import DEFAULT_TOL, Tolerance, discretize_exact, spectral_radius
from .lti import LtiSystem, simulate
from .trajectory import Trajectory, build_blocks, check_assumption1, default_length
from .uio import UioRealization, run_estimator, synthesize

DEFAULT_POLES = (-100.0, -150.0, -200.0)


def place_gains(R_t: float, L_t: float, C_t: float, poles=DEFAULT_POLES):
    """Controller gains ``(k1, k2, k3)`` placing the closed-loop poles.

    The characteristic polynomial of the DGU matrix is
    ``s^3 - a22 s^2 - a10 s / C_t + a12 / C_t``, which is matched
    coefficient-wise to ``prod(s - pole)``.
    """
    _, c2, c1, c0 = np.real(np.poly(poles))
    k1 = 1.0 - c1 * L_t * C_t
    k2 = R_t - c2 * L_t
    k3 = c0 * L_t * C_t
    return float(k1), float(k2), float(k3)


_K_DEFAULT = place_gains(0.2, 1.8e-3, 2.2e-3)


@dataclass(frozen=True)
class DguParams:
    R_t: float = 0.2        # ohm
    L_t: float = 1.8e-3     # H
    C_t: float = 2.2e-3     # F
    k1: float = _K_DEFAULT[0]
    k2: float = _K_DEFAULT[1]
    k3: float = _K_DEFAULT[2]
    V_ref: float = 48.0     # V
    I_L0: float = 5.0       # A
    T_s: float = 0.01       # s
    rel_jitter: float = 0.1  # half-width of the random part of d, relative to nominal

    def __post_init__(self):
        for name in ("R_t", "L_t", "C_t", "T_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        A_c, _ = _continuous(self)
        if not np.all(np.linalg.eigvals(A_c).real < 0):
            raise ValueError("primary controller gains do not stabilize the DGU")

    @classmethod
    def with_poles(cls, poles, **kw) -> "DguParams":
        base = {k: kw.pop(k) for k in ("R_t", "L_t", "C_t") if k in kw}
        R, L, C = base.get("R_t", 0.2), base.get("L_t", 1.8e-3), base.get("C_t", 2.2e-3)
        k1, k2, k3 = place_gains(R, L, C, poles)
        return cls(R_t=R, L_t=L, C_t=C, k1=k1, k2=k2, k3=k3, **kw)

    @property
    def d0(self) -> np.ndarray:
        return np.array([self.I_L0, self.V_ref])

    def equilibrium(self) -> np.ndarray:
        """Steady state under the nominal unknown input."""
        A_c, E_c = _continuous(self)
        return -np.linalg.solve(A_c, E_c @ self.d0)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _continuous(params: DguParams):
    R, L, C = params.R_t, params.L_t, params.C_t
    A_c = np.array([
        [0.0, 1.0 / C, 0.0],
        [(params.k1 - 1.0) / L, (params.k2 - R) / L, params.k3 / L],
        [-1.0, 0.0, 0.0],
    ])
    E_c = np.array([
        [-1.0 / C, 0.0],
        [0.0, 0.0],
        [0.0, 1.0],
    ])
    return A_c, E_c


def dgu_continuous(params: DguParams) -> tuple[np.ndarray, np.ndarray]:
    return _continuous(params)


def dgu_discrete(params: DguParams) -> LtiSystem:
    A_c, E_c = _continuous(params)
    A, E = discretize_exact(A_c, E_c, params.T_s)
    return LtiSystem(A=A, B=np.zeros((3, 0)), E=E, C=np.eye(3))


def _draw_x0(params: DguParams, rng: np.random.Generator) -> np.ndarray:
    return params.equilibrium() * rng.uniform(0.5, 1.5, 3)


def _draw_d(params: DguParams, rng: np.random.Generator, N: int) -> np.ndarray:
    # drawn one step at a time so a run of length N is a prefix of any longer run
    d0 = params.d0
    half = params.rel_jitter * np.abs(d0)
    return np.array([d0 + rng.uniform(-1.0, 1.0, 2) * half for _ in range(N)])


def simulate_dgu(params: DguParams, N: int, seed: int, label: str = "") -> Trajectory:
    """Random initial state and ``d = d0 + delta_d``; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    x0 = _draw_x0(params, rng)
    d = _draw_d(params, rng, N)
    meta = {"seed": seed, "T_s": params.T_s, "label": label}
    return simulate(dgu_discrete(params), x0, d=d, T=N, meta=meta)


def collect_historical(params: DguParams = DguParams(), T: Optional[int] = None,
                       seed: int = 0, tol: Tolerance = DEFAULT_TOL,
                       max_attempts: int = 20) -> Trajectory:
    """Offline experiment that satisfies the excitation condition.

    Failed draws are retried with derived seeds; the attempt index is kept
    in the metadata.
    """
    T = default_length(3, 0, 2) if T is None else T
    for attempt in range(max_attempts):
        sub = seed if attempt == 0 else int(np.random.SeedSequence([seed, attempt]).generate_state(1)[0])
        traj = simulate_dgu(params, T, sub, label="historical")
        traj.meta.update(requested_seed=seed, attempt=attempt)
        if check_assumption1(traj, tol):
            return traj
    raise RuntimeError(f"no persistently exciting data after {max_attempts} attempts (T={T})")


@dataclass(frozen=True)
class AttackSpec:
    T_a: int
    phi: np.ndarray  # (p,) constant or (N, p) per-step corruption

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        if self.T_a < 0:
            raise ValueError("T_a must be non-negative")
        if not np.any(phi != 0):
            raise ValueError("attack vector must be nonzero for some t >= T_a")
        object.__setattr__(self, "phi", phi)

    def at(self, t: int, p: int) -> np.ndarray:
        if t < self.T_a:
            return np.zeros(p)
        return self.phi if self.phi.ndim == 1 else self.phi[t]


def apply_attack(y, spec: AttackSpec) -> np.ndarray:
    """Communicated outputs ``y^c_t = y_t + phi_t`` (``phi_t = 0`` before ``T_a``)."""
    y = np.asarray(y, dtype=np.float64)
    out = y.copy()
    if spec.phi.ndim == 1:
        out[spec.T_a:] += spec.phi
    else:
        out[spec.T_a:] += spec.phi[spec.T_a:len(y)]
    return out


@dataclass
class ScenarioResult:
    truth: Trajectory
    estimates: np.ndarray
    residuals: np.ndarray
    communicated: np.ndarray
    realization: UioRealization
    attack: Optional[AttackSpec] = None
    summary: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return self.truth.x - self.estimates

    def write(self, out_dir, name: str) -> tuple[Path, Path]:
        """Write ``<name>.csv`` and ``<name>.json`` into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out_dir / f"{name}.csv", out_dir / f"{name}.json"
        T_a = self.attack.T_a if self.attack else None
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i}" for i in range(3)] + [f"xhat_{i}" for i in range(3)]
                       + [f"r_{i}" for i in range(3)] + ["attacked"])
            for t in range(len(self.estimates)):
                row = list(self.truth.x[t]) + list(self.estimates[t]) + list(self.residuals[t])
                attacked = int(T_a is not None and t >= T_a)
                w.writerow([t] + [repr(float(v)) for v in row] + [attacked])
        json_path.write_text(json.dumps(self.summary, indent=2))
        return csv_path, json_path


def _realize(hist: Trajectory, tol: Tolerance, realization):
    if realization is not None:
        return realization, None
    real, report = synthesize(build_blocks(hist, tol), tol)
    if not report.exists:
        raise RuntimeError(f"historical data do not admit a UIO: {report.to_dict()}")
    return real, report


def _run(params, hist, N, seed, attack, tol, realization, xhat0):
    real, report = _realize(hist, tol, realization)
    truth = simulate_dgu(params, N, seed, label="online")
    y_c = truth.y if attack is None else apply_attack(truth.y, attack)
    # the estimator only sees communicated outputs; d never reaches it
    xhat = run_estimator(real, np.zeros(3) if xhat0 is None else xhat0, y_c)
    resid = y_c - xhat
    summary = {
        "N": N, "seed": seed, "T_s": params.T_s,
        "spectral_radius_Auio": spectral_radius(real.A_uio),
        "realization_digest": real.digest,
        "error_norms": np.linalg.norm(truth.x - xhat, axis=1).tolist(),
        "residual_max_abs": np.max(np.abs(resid), axis=1).tolist(),
    }
    if report is not None:
        summary["exists"] = report.exists
    return ScenarioResult(truth=truth, estimates=xhat, residuals=resid, communicated=y_c,
                          realization=real, attack=attack, summary=summary)


def run_safe_scenario(params: DguParams, hist: Trajectory, N: int = 10, seed: int = 1,
                      tol: Tolerance = DEFAULT_TOL, realization: Optional[UioRealization] = None,
                      xhat0=None, burn_in: int = 1) -> ScenarioResult:
    res = _run(params, hist, N, seed, None, tol, realization, xhat0)
    e = np.array(res.summary["error_norms"])
    tail = e[burn_in:]
    res.summary.update(
        scenario="safe",
        burn_in=burn_in,
        error_ratio_last_first=float(e[-1] / e[0]) if e[0] > 0 else 0.0,
        monotone_decay_after_burn_in=bool(np.all(np.diff(tail) <= 1e-12 * max(1.0, e[0]))),
    )
    return res


def run_attack_scenario(params: DguParams, hist: Trajectory, N: int = 100,
                        spec: Optional[AttackSpec] = None, seed: int = 1,
                        tol: Tolerance = DEFAULT_TOL,
                        realization: Optional[UioRealization] = None,
                        xhat0=None, burn_in: int = 10) -> ScenarioResult:
    spec = spec or AttackSpec(T_a=50, phi=np.array([0.1, 0.1, 0.1]))
    res = _run(params, hist, N, seed, spec, tol, realization, xhat0)
    rmax = np.array(res.summary["residual_max_abs"])
    pre = float(rmax[burn_in:spec.T_a].max()) if spec.T_a > burn_in else float("nan")
    post = float(rmax[spec.T_a:].max()) if spec.T_a < N else float("nan")
    res.summary.update(
        scenario="attack", T_a=spec.T_a, phi=np.asarray(spec.phi).tolist(), burn_in=burn_in,
        pre_attack_max_residual=pre, post_attack_max_residual=post,
        detected=bool(post > pre),
    )
    return res
